use crate::channel::{CavcModel, Family};
use crate::error::{CavcError, Result};
use crate::ext::ExtReal;
use serde::{Deserialize, Serialize};

/// Leaf budget for exact enumeration of conditional state types.
pub const DEFAULT_SEARCH_BUDGET: f64 = 1e7;

const RELAX_TOL: f64 = 1e-10;
const RELAX_MAX_ITER: usize = 50_000;
const RELAX_FAIL_GAP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    ExactTypes,
    ConvexRelaxation,
    Auto,
}

impl std::str::FromStr for SearchMode {
    type Err = CavcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-types" | "exact" => Ok(SearchMode::ExactTypes),
            "convex-relaxation" | "relaxation" => Ok(SearchMode::ConvexRelaxation),
            "auto" => Ok(SearchMode::Auto),
            other => Err(CavcError::Config(format!("unknown search mode '{other}'"))),
        }
    }
}

/// Which state sequences may explain an output: those in one family, or in
/// either family (P_S ∈ P₁ ∪ P₂).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSelector {
    Family(Family),
    Either,
}

/// Best conditional state assignment found for (x, y).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub family: Family,
    /// Global state indices of the local state axis.
    pub states: Vec<usize>,
    /// Counts n(a, b, c) over (x symbol, local state, y symbol), row-major;
    /// `None` when no state sequence in the family can produce y from x.
    pub counts: Option<Vec<u64>>,
    /// D(P_XSY ‖ P_X × P_S × W) of the realizable type `counts`.
    pub divergence: ExtReal,
    /// A certified lower bound on the divergence over all state sequences
    /// in the family (equal to `divergence` in exact mode).
    pub lower_bound: ExtReal,
    pub mode: SearchMode,
    pub within_eta: bool,
    /// Leaves enumerated (exact) or iterations run (relaxation).
    pub work: usize,
}

/// One (a, c) cell of the joint type of (x, y) with its admissible states.
#[derive(Debug, Clone)]
pub(crate) struct Cell {
    pub a: usize,
    pub c: usize,
    pub count: u32,
    /// Local state indices b with W(c|a,b) > 0.
    pub allowed: Vec<usize>,
    /// log₂ W(c|a,b) for each allowed b.
    pub log_w: Vec<f64>,
}

/// Conditional-type search space for one (x, y) pair and one state set.
#[derive(Debug, Clone)]
pub(crate) struct CellProblem {
    pub nx: usize,
    pub ny: usize,
    pub k: usize,
    pub n: usize,
    pub cells: Vec<Cell>,
    log_na: Vec<f64>,
}

/// Per-cell counts over that cell's `allowed` list.
pub(crate) type Split = Vec<Vec<u32>>;

impl CellProblem {
    /// `None` when some observed (a, c) has no state with W(c|a,b) > 0.
    pub fn new(model: &CavcModel, states: &[usize], x: &[usize], y: &[usize]) -> Option<Self> {
        let (nx, ny) = (model.nx(), model.ny());
        let kern = model.kernel();
        let mut counts = vec![0u32; nx * ny];
        for (&a, &c) in x.iter().zip(y) {
            counts[a * ny + c] += 1;
        }
        let mut na = vec![0u32; nx];
        let mut cells = Vec::new();
        for a in 0..nx {
            for c in 0..ny {
                let count = counts[a * ny + c];
                na[a] += count;
                if count == 0 {
                    continue;
                }
                let allowed: Vec<usize> = (0..states.len()).filter(|&b| kern.prob(a, states[b], c) > 0.0).collect();
                if allowed.is_empty() {
                    return None;
                }
                let log_w = allowed.iter().map(|&b| kern.prob(a, states[b], c).log2()).collect();
                cells.push(Cell {
                    a,
                    c,
                    count,
                    allowed,
                    log_w,
                });
            }
        }
        let log_na = na.iter().map(|&v| if v > 0 { (v as f64).log2() } else { 0.0 }).collect();
        Some(CellProblem {
            nx,
            ny,
            k: states.len(),
            n: x.len(),
            cells,
            log_na,
        })
    }

    /// Number of leaves of the exact enumeration.
    pub fn size(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| binomial(c.count as usize + c.allowed.len() - 1, c.allowed.len() - 1))
            .product()
    }

    /// Cell part Σ n log₂ n − Σ n log₂(N_a W) of one cell's counts.
    fn cell_term(&self, ci: usize, counts: &[u32]) -> f64 {
        let cell = &self.cells[ci];
        counts
            .iter()
            .zip(&cell.log_w)
            .filter(|(&v, _)| v > 0)
            .map(|(&v, &lw)| {
                let v = v as f64;
                v * (v.log2() - self.log_na[cell.a] - lw)
            })
            .sum()
    }

    fn finish(&self, cell_sum: f64, state_totals: &[u32]) -> f64 {
        let n = self.n as f64;
        let ps: f64 = state_totals
            .iter()
            .filter(|&&v| v > 0)
            .map(|&v| v as f64 * (v as f64).log2())
            .sum();
        ((cell_sum - ps) / n + n.log2()).max(0.0)
    }

    pub fn divergence(&self, split: &Split) -> f64 {
        let mut totals = vec![0u32; self.k];
        let mut sum = 0.0;
        for (ci, counts) in split.iter().enumerate() {
            sum += self.cell_term(ci, counts);
            for (&v, &b) in counts.iter().zip(&self.cells[ci].allowed) {
                totals[b] += v;
            }
        }
        self.finish(sum, &totals)
    }

    /// Visits every split in lexicographic order with its divergence; stops
    /// early when `visit` returns false. Returns the number of leaves visited.
    pub fn enumerate(&self, budget: f64, what: &str, mut visit: impl FnMut(&Split, f64) -> bool) -> Result<usize> {
        let size = self.size();
        if size > budget {
            return Err(CavcError::BudgetExceeded {
                needed: size,
                budget,
                what: what.to_string(),
            });
        }
        let mut split: Split = self.cells.iter().map(|c| vec![0; c.allowed.len()]).collect();
        let mut totals = vec![0u32; self.k];
        let mut leaves = 0usize;
        let mut go = true;
        self.descend(0, 0.0, &mut split, &mut totals, &mut leaves, &mut go, &mut visit);
        Ok(leaves)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        ci: usize,
        acc: f64,
        split: &mut Split,
        totals: &mut [u32],
        leaves: &mut usize,
        go: &mut bool,
        visit: &mut impl FnMut(&Split, f64) -> bool,
    ) {
        if ci == self.cells.len() {
            *leaves += 1;
            let d = self.finish(acc, totals);
            if !visit(split, d) {
                *go = false;
            }
            return;
        }
        let cell = &self.cells[ci];
        let parts = cell.allowed.len();
        let mut comp = vec![0u32; parts];
        comp[0] = cell.count;
        // compositions of `count` into `parts`, first part descending
        loop {
            for (&v, &b) in comp.iter().zip(&cell.allowed) {
                totals[b] += v;
            }
            split[ci].copy_from_slice(&comp);
            let term = self.cell_term(ci, &comp);
            self.descend(ci + 1, acc + term, split, totals, leaves, go, visit);
            for (&v, &b) in comp.iter().zip(&cell.allowed) {
                totals[b] -= v;
            }
            if !*go || !next_composition(&mut comp) {
                return;
            }
        }
    }

    /// Minimizes the divergence over continuous conditional assignments by
    /// alternating minimization. Returns per-cell conditionals, the value and
    /// a certified lower bound.
    pub fn relax(&self) -> Result<(Vec<Vec<f64>>, f64, f64, usize)> {
        let n = self.n as f64;
        let mut pi = vec![1.0 / self.k as f64; self.k];
        let mut r: Vec<Vec<f64>> = self.cells.iter().map(|c| vec![0.0; c.allowed.len()]).collect();
        let mut last = (f64::INFINITY, f64::NEG_INFINITY);
        for it in 1..=RELAX_MAX_ITER {
            for (cell, rc) in self.cells.iter().zip(r.iter_mut()) {
                let mut z = 0.0;
                for ((v, &b), &lw) in rc.iter_mut().zip(&cell.allowed).zip(&cell.log_w) {
                    *v = pi[b] * lw.exp2();
                    z += *v;
                }
                rc.iter_mut().for_each(|v| *v /= z);
            }
            pi.iter_mut().for_each(|p| *p = 0.0);
            for (cell, rc) in self.cells.iter().zip(&r) {
                for (&v, &b) in rc.iter().zip(&cell.allowed) {
                    pi[b] += cell.count as f64 / n * v;
                }
            }
            let (value, lower) = self.value_and_bound(&r, &pi);
            last = (value, lower);
            if value - lower <= RELAX_TOL {
                return Ok((r, value, lower, it));
            }
        }
        if last.0 - last.1 > RELAX_FAIL_GAP {
            return Err(CavcError::NonConvergence {
                iterations: RELAX_MAX_ITER,
                detail: format!("explanation relaxation gap {}", last.0 - last.1),
            });
        }
        Ok((r, last.0, last.1, RELAX_MAX_ITER))
    }

    /// Divergence at conditionals `r` (with P_S = `pi`) and the Frank–Wolfe
    /// lower bound Σ_cells P(a,c) min_b ∂D/∂P(a,b,c).
    fn value_and_bound(&self, r: &[Vec<f64>], pi: &[f64]) -> (f64, f64) {
        let n = self.n as f64;
        let mut value = 0.0;
        let mut lower = 0.0;
        for (cell, rc) in self.cells.iter().zip(r) {
            let p_ac = cell.count as f64 / n;
            let p_a = self.log_na[cell.a] - n.log2();
            let mut best = f64::INFINITY;
            for ((&v, &b), &lw) in rc.iter().zip(&cell.allowed).zip(&cell.log_w) {
                let g = if v > 0.0 && pi[b] > 0.0 {
                    (p_ac * v).log2() - p_a - pi[b].log2() - lw
                } else {
                    f64::NEG_INFINITY
                };
                if v > 0.0 {
                    value += p_ac * v * g;
                }
                best = best.min(g);
            }
            lower += p_ac * best;
        }
        (value.max(0.0), lower.max(0.0).min(value.max(0.0)))
    }

    /// Largest-remainder rounding of `total · weights` over `parts` entries.
    pub fn round_counts(total: u32, weights: &[f64]) -> Vec<u32> {
        let scaled: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
        let mut out: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let mut left = total.saturating_sub(out.iter().sum());
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&i, &j| {
            let ri = scaled[i] - scaled[i].floor();
            let rj = scaled[j] - scaled[j].floor();
            rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            out[i] += 1;
            left -= 1;
        }
        out
    }

    pub fn round(&self, r: &[Vec<f64>]) -> Split {
        self.cells.iter().zip(r).map(|(c, rc)| Self::round_counts(c.count, rc)).collect()
    }

    /// Flat (a, b, c) counts of a split.
    pub fn to_counts(&self, split: &Split) -> Vec<u64> {
        let mut out = vec![0u64; self.nx * self.k * self.ny];
        for (cell, counts) in self.cells.iter().zip(split) {
            for (&v, &b) in counts.iter().zip(&cell.allowed) {
                out[(cell.a * self.k + b) * self.ny + cell.c] += v as u64;
            }
        }
        out
    }
}

/// Advances to the next composition in the order (c, 0, ..) → (c−1, 1, ..) → ..
fn next_composition(comp: &mut [u32]) -> bool {
    let k = comp.len();
    if k < 2 {
        return false;
    }
    // rightmost nonzero entry before the last position
    let tail = comp[k - 1];
    comp[k - 1] = 0;
    let Some(i) = (0..k - 1).rev().find(|&i| comp[i] > 0) else {
        comp[k - 1] = tail;
        return false;
    };
    comp[i] -= 1;
    comp[i + 1] = tail + 1;
    true
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn resolve_mode(mode: SearchMode, n: usize, model: &CavcModel, size: f64, budget: f64) -> SearchMode {
    match mode {
        SearchMode::Auto => {
            if n <= 24 && model.nx() <= 3 && model.ny() <= 3 && size <= budget {
                SearchMode::ExactTypes
            } else {
                SearchMode::ConvexRelaxation
            }
        }
        m => m,
    }
}

fn search_family(
    x: &[usize],
    y: &[usize],
    model: &CavcModel,
    family: Family,
    eta: f64,
    mode: SearchMode,
    budget: f64,
) -> Result<Explanation> {
    let states = model.family(family).to_vec();
    let Some(problem) = CellProblem::new(model, &states, x, y) else {
        return Ok(Explanation {
            family,
            states,
            counts: None,
            divergence: ExtReal::Infinite,
            lower_bound: ExtReal::Infinite,
            mode: resolve_mode(mode, x.len(), model, 1.0, budget),
            within_eta: false,
            work: 0,
        });
    };
    let mode = resolve_mode(mode, x.len(), model, problem.size(), budget);
    let (split, d, lower, work) = match mode {
        SearchMode::ExactTypes => {
            let mut best: Option<(Split, f64)> = None;
            let leaves = problem.enumerate(budget, "exact-types explanation search", |s, d| {
                if best.as_ref().is_none_or(|(_, b)| d < *b) {
                    best = Some((s.clone(), d));
                }
                true
            })?;
            let (s, d) = best.expect("at least one leaf");
            (s, d, d, leaves)
        }
        _ => {
            let (r, _, lower, iters) = problem.relax()?;
            let split = problem.round(&r);
            let d = problem.divergence(&split);
            (split, d, lower.min(d), iters)
        }
    };
    Ok(Explanation {
        family,
        counts: Some(problem.to_counts(&split)),
        states,
        divergence: ExtReal::Finite(d),
        lower_bound: ExtReal::Finite(lower),
        mode,
        within_eta: d <= eta + 1e-12,
        work,
    })
}

/// Searches for the state sequence (up to its conditional type given the
/// (x, y) cells) minimizing D(P_XSY ‖ P_X × P_S × W).
pub fn state_explanation_search(
    x: &[usize],
    y: &[usize],
    model: &CavcModel,
    selector: StateSelector,
    eta: f64,
    mode: SearchMode,
) -> Result<Explanation> {
    search_with_budget(x, y, model, selector, eta, mode, DEFAULT_SEARCH_BUDGET)
}

pub(crate) fn search_with_budget(
    x: &[usize],
    y: &[usize],
    model: &CavcModel,
    selector: StateSelector,
    eta: f64,
    mode: SearchMode,
    budget: f64,
) -> Result<Explanation> {
    if x.len() != y.len() {
        return Err(CavcError::LengthMismatch { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(CavcError::Config("explanation search needs n >= 1".into()));
    }
    if let Some(&symbol) = x.iter().find(|&&a| a >= model.nx()) {
        return Err(CavcError::SymbolOutOfRange { symbol, size: model.nx() });
    }
    if let Some(&symbol) = y.iter().find(|&&c| c >= model.ny()) {
        return Err(CavcError::SymbolOutOfRange { symbol, size: model.ny() });
    }
    match selector {
        StateSelector::Family(k) => search_family(x, y, model, k, eta, mode, budget),
        StateSelector::Either => {
            let one = search_family(x, y, model, Family::One, eta, mode, budget)?;
            let two = search_family(x, y, model, Family::Two, eta, mode, budget)?;
            let prefer_two = match (one.divergence.finite(), two.divergence.finite()) {
                (None, Some(_)) => true,
                (Some(a), Some(b)) => b < a,
                _ => false,
            };
            Ok(if prefer_two { two } else { one })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::channel::channel_sample;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn compositions_cover_all() {
        let mut comp = vec![3, 0, 0];
        let mut seen = vec![comp.clone()];
        while next_composition(&mut comp) {
            seen.push(comp.clone());
        }
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[1], vec![2, 1, 0]);
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn constant_state_on_deterministic_kernel() {
        let m = catalog::adder_avc();
        let x = [0, 1, 1, 0, 1, 0];
        let y: Vec<usize> = x.iter().map(|&a| a + 1).collect();
        let e = state_explanation_search(&x, &y, &m, StateSelector::Family(Family::One), 0.05, SearchMode::ExactTypes)
            .unwrap();
        assert_eq!(e.divergence, ExtReal::Finite(0.0));
        let counts = e.counts.unwrap();
        // every position explained by state 1
        let on_state_one: u64 = (0..2).flat_map(|a| (0..3).map(move |c| (a * 2 + 1) * 3 + c)).map(|i| counts[i]).sum();
        assert_eq!(on_state_one, 6);
        assert!(e.within_eta);
    }

    #[test]
    fn unreachable_output_has_no_explanation() {
        // disjoint output families: y in the σ₂ alphabet cannot come from σ₁
        let m = catalog::disjoint_output_noiseless();
        let e = state_explanation_search(&[0, 1], &[2, 3], &m, StateSelector::Family(Family::One), 0.05, SearchMode::Auto)
            .unwrap();
        assert_eq!(e.divergence, ExtReal::Infinite);
        assert!(e.counts.is_none() && !e.within_eta);
        let e = state_explanation_search(&[0, 1], &[2, 3], &m, StateSelector::Either, 0.05, SearchMode::Auto).unwrap();
        assert_eq!(e.family, Family::Two);
        assert_eq!(e.divergence, ExtReal::Finite(0.0));
    }

    #[test]
    fn divergence_matches_direct_formula() {
        let m = catalog::random_model(2, 2, 2, 3, 4);
        let x = [0, 0, 1, 1, 0, 1, 0];
        let y = [0, 2, 1, 1, 0, 2, 2];
        let p = CellProblem::new(&m, m.family(Family::One), &x, &y).unwrap();
        let kern = m.kernel();
        let states = m.family(Family::One);
        p.enumerate(1e6, "test", |split, d| {
            let counts = p.to_counts(split);
            let n = 7.0;
            let mut ps = [0.0; 2];
            let mut px = [0.0; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..3 {
                        let v = counts[(a * 2 + b) * 3 + c] as f64 / n;
                        ps[b] += v;
                        px[a] += v;
                    }
                }
            }
            let mut direct = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..3 {
                        let v = counts[(a * 2 + b) * 3 + c] as f64 / n;
                        if v > 0.0 {
                            direct += v * (v / (px[a] * ps[b] * kern.prob(a, states[b], c))).log2();
                        }
                    }
                }
            }
            assert!((direct - d).abs() < 1e-9, "{direct} vs {d}");
            true
        })
        .unwrap();
    }

    #[test]
    fn exact_and_relaxation_agree_within_quantization() {
        let mut rng = rng_from_seed(77);
        for trial in 0..50u64 {
            let m = catalog::random_model(2, 2, 2, 2, 300 + trial);
            let n = rng.gen_range(6..=14);
            let x: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let y = channel_sample(m.kernel(), &x, &s, trial).unwrap();
            let sel = StateSelector::Family(Family::One);
            let exact = state_explanation_search(&x, &y, &m, sel, 0.05, SearchMode::ExactTypes).unwrap();
            let relax = state_explanation_search(&x, &y, &m, sel, 0.05, SearchMode::ConvexRelaxation).unwrap();
            let (e, r, lb) = (
                exact.divergence.finite().unwrap(),
                relax.divergence.finite().unwrap(),
                relax.lower_bound.finite().unwrap(),
            );
            let slack = 2.0 * 2.0 * 2.0 * 2.0 / n as f64;
            assert!(lb <= e + 1e-9, "lower bound {lb} above exact {e}");
            assert!(e <= r + 1e-12, "relaxation rounding {r} beat exact {e}");
            assert!(r - e <= slack, "trial {trial}: rounded {r} vs exact {e}");
        }
    }

    #[test]
    fn budget_guard_in_exact_mode() {
        let m = catalog::random_model(2, 3, 3, 2, 1);
        let x: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let y: Vec<usize> = (0..40).map(|i| (i / 3) % 2).collect();
        let err = search_with_budget(&x, &y, &m, StateSelector::Family(Family::One), 0.05, SearchMode::ExactTypes, 100.0);
        assert!(matches!(err, Err(CavcError::BudgetExceeded { .. })));
        let auto = search_with_budget(&x, &y, &m, StateSelector::Family(Family::One), 0.05, SearchMode::Auto, 100.0)
            .unwrap();
        assert_eq!(auto.mode, SearchMode::ConvexRelaxation);
    }
}
