use super::explain::{binomial, CellProblem, Split};
use super::{Codebook, SearchMode, Task, Verdict, VerdictFlag, DEFAULT_SEARCH_BUDGET};
use crate::channel::{CavcModel, Family};
use crate::error::{CavcError, Result};
use crate::info::plog;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_ETA: f64 = 0.05;

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    pub eta: f64,
    pub mode: SearchMode,
    /// Leaf budget per candidate search.
    pub budget: f64,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            eta: DEFAULT_ETA,
            mode: SearchMode::Auto,
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

impl JointOptions {
    pub fn with_eta(eta: f64) -> Self {
        JointOptions {
            eta,
            ..Default::default()
        }
    }
}

/// A (message, compound state) pair meeting both decoding conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub message: usize,
    pub state: Family,
    /// Divergence of the explanation that met the conditions.
    pub divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDecodeReport {
    pub verdict: Verdict,
    pub eta: f64,
    pub satisfying: Vec<Candidate>,
    /// B₁ and B₂ (or-task only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_sets: Option<[Vec<usize>; 2]>,
    /// Messages with some explanation within η in family 1 and family 2.
    pub explainable: [Vec<usize>; 2],
    /// `exact-types` when every search was exhaustive.
    pub mode: SearchMode,
}

/// Whose explanations make a codeword a rival of a candidate in family k.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RivalRule {
    Either,
    Opposite,
}

struct Context<'a> {
    model: &'a CavcModel,
    book: &'a Codebook,
    y: &'a [usize],
    opts: JointOptions,
    /// Lower bound on the explanation divergence of each codeword per family.
    lower: Vec<[f64; 2]>,
    relaxed: bool,
}

impl<'a> Context<'a> {
    fn new(model: &'a CavcModel, book: &'a Codebook, y: &'a [usize], opts: JointOptions) -> Result<Self> {
        if !(opts.eta > 0.0) {
            return Err(CavcError::Config(format!("eta must be positive, got {}", opts.eta)));
        }
        if book.input_size() != model.nx() {
            return Err(CavcError::ModelMismatch("codebook and model input alphabets differ".into()));
        }
        if y.len() != book.n() {
            return Err(CavcError::LengthMismatch { expected: book.n(), got: y.len() });
        }
        if let Some(&symbol) = y.iter().find(|&&c| c >= model.ny()) {
            return Err(CavcError::SymbolOutOfRange { symbol, size: model.ny() });
        }
        let mut ctx = Context {
            model,
            book,
            y,
            opts,
            lower: Vec::with_capacity(book.len()),
            relaxed: false,
        };
        for j in 0..book.len() {
            let mut pair = [f64::INFINITY; 2];
            for k in Family::BOTH {
                pair[k.index()] = ctx.min_divergence(j, k)?;
            }
            ctx.lower.push(pair);
        }
        Ok(ctx)
    }

    fn use_exact(&self, problem: &CellProblem) -> Result<bool> {
        // Auto searches exactly whenever the coarse enumeration fits the budget.
        let mode = match self.opts.mode {
            SearchMode::Auto if problem.size() <= self.opts.budget => SearchMode::ExactTypes,
            SearchMode::Auto => SearchMode::ConvexRelaxation,
            m => m,
        };
        if mode == SearchMode::ExactTypes && problem.size() > self.opts.budget {
            return Err(CavcError::BudgetExceeded {
                needed: problem.size(),
                budget: self.opts.budget,
                what: "exact-types decoder search".into(),
            });
        }
        Ok(mode == SearchMode::ExactTypes)
    }

    /// Smallest divergence (exact) or its certified lower bound (relaxation).
    fn min_divergence(&mut self, j: usize, k: Family) -> Result<f64> {
        let x = self.book.codeword(j);
        let Some(problem) = CellProblem::new(self.model, self.model.family(k), x, self.y) else {
            return Ok(f64::INFINITY);
        };
        if self.use_exact(&problem)? {
            let mut best = f64::INFINITY;
            problem.enumerate(f64::INFINITY, "exact-types decoder search", |_, d| {
                best = best.min(d);
                best > SLACK
            })?;
            Ok(best)
        } else {
            self.relaxed = true;
            let (_, _, lower, _) = problem.relax()?;
            Ok(lower)
        }
    }

    fn explainable(&self, j: usize, k: Family) -> bool {
        self.lower[j][k.index()] <= self.opts.eta + SLACK
    }

    fn rivals(&self, i: usize, k: Family, rule: RivalRule) -> Vec<usize> {
        (0..self.book.len())
            .filter(|&j| j != i)
            .filter(|&j| match rule {
                RivalRule::Either => self.explainable(j, Family::One) || self.explainable(j, Family::Two),
                RivalRule::Opposite => self.explainable(j, k.other()),
            })
            .collect()
    }

    /// Whether some s in S_kⁿ meets both conditions for message `i`; returns
    /// the divergence of the first such s.
    fn check(&mut self, i: usize, k: Family, rule: RivalRule) -> Result<Option<f64>> {
        if !self.explainable(i, k) {
            return Ok(None);
        }
        let rivals = self.rivals(i, k, rule);
        let x = self.book.codeword(i);
        let Some(problem) = CellProblem::new(self.model, self.model.family(k), x, self.y) else {
            return Ok(None);
        };
        let classes = SubClasses::new(&problem, self.book, i, self.y, &rivals);
        let eta = self.opts.eta;
        if self.use_exact(&problem)? {
            let mut found = None;
            let mut over_budget = false;
            let mut spent = 0.0;
            let budget = self.opts.budget;
            problem.enumerate(f64::INFINITY, "exact-types decoder search", |split, d| {
                if d > eta + SLACK {
                    return true;
                }
                match classes.search(&problem, split, eta, budget - spent) {
                    Refine::Found => {
                        found = Some(d);
                        false
                    }
                    Refine::None(used) => {
                        spent += used;
                        true
                    }
                    Refine::OverBudget => {
                        over_budget = true;
                        false
                    }
                }
            })?;
            if !over_budget {
                return Ok(found);
            }
            if self.opts.mode == SearchMode::ExactTypes {
                return Err(CavcError::BudgetExceeded {
                    needed: spent,
                    budget,
                    what: "exact-types decoder search (rival refinement)".into(),
                });
            }
        }
        self.relaxed = true;
        let (r, _, _, _) = problem.relax()?;
        let (split, info) = classes.rounded(&problem, &r);
        let d = problem.divergence(&split);
        Ok((d <= eta + SLACK && info.iter().all(|&v| v <= eta + SLACK)).then_some(d))
    }

    fn mode(&self) -> SearchMode {
        if self.relaxed {
            SearchMode::ConvexRelaxation
        } else {
            SearchMode::ExactTypes
        }
    }

    fn explainable_lists(&self) -> [Vec<usize>; 2] {
        let list = |k: Family| (0..self.book.len()).filter(|&j| self.explainable(j, k)).collect();
        [list(Family::One), list(Family::Two)]
    }
}

enum Refine {
    Found,
    /// No refinement works; carries the number of leaves visited.
    None(f64),
    OverBudget,
}

/// Positions of one (a, c) cell further split by the rivals' symbols.
struct SubClasses {
    /// Per cell: (rival symbols, count).
    per_cell: Vec<Vec<(Vec<usize>, u32)>>,
    rivals: usize,
    nx: usize,
    ny: usize,
    k: usize,
}

impl SubClasses {
    fn new(problem: &CellProblem, book: &Codebook, i: usize, y: &[usize], rivals: &[usize]) -> Self {
        let x = book.codeword(i);
        let mut maps: BTreeMap<(usize, usize), BTreeMap<Vec<usize>, u32>> = BTreeMap::new();
        for t in 0..x.len() {
            let key: Vec<usize> = rivals.iter().map(|&j| book.codeword(j)[t]).collect();
            *maps.entry((x[t], y[t])).or_default().entry(key).or_default() += 1;
        }
        let per_cell = problem
            .cells
            .iter()
            .map(|c| maps.remove(&(c.a, c.c)).unwrap_or_default().into_iter().collect())
            .collect();
        SubClasses {
            per_cell,
            rivals: rivals.len(),
            nx: problem.nx,
            ny: problem.ny,
            k: problem.k,
        }
    }

    fn acc_len(&self) -> usize {
        self.nx * self.ny * self.nx * self.k
    }

    fn acc_index(&self, a: usize, c: usize, ap: usize, b: usize) -> usize {
        ((a * self.ny + c) * self.nx + ap) * self.k + b
    }

    /// Enumerates assignments of each cell's state counts to its subclasses
    /// and looks for one with I(XY;X'|S) ≤ η against every rival.
    fn search(&self, problem: &CellProblem, split: &Split, eta: f64, budget: f64) -> Refine {
        if self.rivals == 0 {
            return Refine::Found;
        }
        let tables: Vec<Vec<Vec<u32>>> = self
            .per_cell
            .iter()
            .zip(split)
            .map(|(subs, cols)| {
                let rows: Vec<u32> = subs.iter().map(|(_, c)| *c).collect();
                contingency_tables(&rows, cols)
            })
            .collect();
        let size: f64 = tables.iter().map(|t| t.len() as f64).product();
        if size > budget {
            return Refine::OverBudget;
        }
        let mut acc = vec![vec![0u32; self.acc_len()]; self.rivals];
        if self.descend(problem, &tables, 0, &mut acc, eta) {
            Refine::Found
        } else {
            Refine::None(size)
        }
    }

    fn apply(&self, problem: &CellProblem, ci: usize, table: &[u32], acc: &mut [Vec<u32>], add: bool) {
        let cell = &problem.cells[ci];
        let cols = cell.allowed.len();
        for (row, (key, _)) in self.per_cell[ci].iter().enumerate() {
            for (col, &b) in cell.allowed.iter().enumerate() {
                let v = table[row * cols + col];
                if v == 0 {
                    continue;
                }
                for (j, &ap) in key.iter().enumerate() {
                    let idx = self.acc_index(cell.a, cell.c, ap, b);
                    if add {
                        acc[j][idx] += v;
                    } else {
                        acc[j][idx] -= v;
                    }
                }
            }
        }
    }

    fn descend(&self, problem: &CellProblem, tables: &[Vec<Vec<u32>>], ci: usize, acc: &mut [Vec<u32>], eta: f64) -> bool {
        if ci == tables.len() {
            return acc.iter().all(|t| self.cond_info(t, problem.n) <= eta + SLACK);
        }
        for table in &tables[ci] {
            self.apply(problem, ci, table, acc, true);
            let ok = self.descend(problem, tables, ci + 1, acc, eta);
            self.apply(problem, ci, table, acc, false);
            if ok {
                return true;
            }
        }
        false
    }

    /// I(XY;X'|S) from counts over (a, c, a', b).
    fn cond_info(&self, t: &[u32], n: usize) -> f64 {
        let (nx, ny, k) = (self.nx, self.ny, self.k);
        let nf = n as f64;
        let mut h_xys = vec![0u32; nx * ny * k];
        let mut h_xps = vec![0u32; nx * k];
        let mut h_s = vec![0u32; k];
        let mut h_all = 0.0;
        for a in 0..nx {
            for c in 0..ny {
                for ap in 0..nx {
                    for b in 0..k {
                        let v = t[self.acc_index(a, c, ap, b)];
                        if v == 0 {
                            continue;
                        }
                        h_all += plog(v as f64 / nf);
                        h_xys[(a * ny + c) * k + b] += v;
                        h_xps[ap * k + b] += v;
                        h_s[b] += v;
                    }
                }
            }
        }
        let h = |v: &[u32]| v.iter().map(|&c| plog(c as f64 / nf)).sum::<f64>();
        (h(&h_xys) + h(&h_xps) - h_all - h(&h_s)).max(0.0)
    }

    /// Rounds the relaxed conditionals within each subclass; returns the
    /// realized split and I(XY;X'|S) per rival.
    fn rounded(&self, problem: &CellProblem, r: &[Vec<f64>]) -> (Split, Vec<f64>) {
        let mut split: Split = problem.cells.iter().map(|c| vec![0; c.allowed.len()]).collect();
        let mut acc = vec![vec![0u32; self.acc_len()]; self.rivals];
        for (ci, subs) in self.per_cell.iter().enumerate() {
            let cols = problem.cells[ci].allowed.len();
            let mut table = vec![0u32; subs.len() * cols];
            for (row, (_, count)) in subs.iter().enumerate() {
                let part = CellProblem::round_counts(*count, &r[ci]);
                for (col, v) in part.into_iter().enumerate() {
                    table[row * cols + col] = v;
                    split[ci][col] += v;
                }
            }
            self.apply(problem, ci, &table, &mut acc, true);
        }
        let info = acc.iter().map(|t| self.cond_info(t, problem.n)).collect();
        (split, info)
    }
}

/// All nonnegative integer matrices (row-major) with the given row and
/// column sums.
pub(crate) fn contingency_tables(rows: &[u32], cols: &[u32]) -> Vec<Vec<u32>> {
    fn fill(rows: &[u32], r: usize, remaining: &mut Vec<u32>, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let nc = remaining.len();
        if r + 1 == rows.len() {
            // the last row takes whatever is left
            if remaining.iter().sum::<u32>() == rows[r] {
                let mut t = cur.clone();
                t.extend_from_slice(remaining);
                out.push(t);
            }
            return;
        }
        let mut row = vec![0u32; nc];
        place(rows, r, 0, rows[r], remaining, &mut row, cur, out);
    }
    #[allow(clippy::too_many_arguments)]
    fn place(
        rows: &[u32],
        r: usize,
        col: usize,
        left: u32,
        remaining: &mut Vec<u32>,
        row: &mut Vec<u32>,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        let nc = remaining.len();
        if col + 1 == nc {
            if left > remaining[col] {
                return;
            }
            row[col] = left;
            remaining[col] -= left;
            cur.extend_from_slice(row);
            fill(rows, r + 1, remaining, cur, out);
            cur.truncate(cur.len() - nc);
            remaining[col] += left;
            return;
        }
        for v in (0..=left.min(remaining[col])).rev() {
            row[col] = v;
            remaining[col] -= v;
            place(rows, r, col + 1, left - v, remaining, row, cur, out);
            remaining[col] += v;
        }
    }
    let mut out = Vec::new();
    if rows.is_empty() {
        if cols.iter().all(|&c| c == 0) {
            out.push(Vec::new());
        }
        return out;
    }
    let mut remaining = cols.to_vec();
    fill(rows, 0, &mut remaining, &mut Vec::new(), &mut out);
    out
}

/// Upper bound on the number of contingency tables, for reporting.
#[allow(dead_code)]
fn table_bound(rows: &[u32], cols: usize) -> f64 {
    rows.iter().map(|&m| binomial(m as usize + cols - 1, cols - 1)).product()
}

fn satisfying_pairs(ctx: &mut Context<'_>, rule: RivalRule) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for i in 0..ctx.book.len() {
        for k in Family::BOTH {
            if let Some(divergence) = ctx.check(i, k, rule)? {
                out.push(Candidate {
                    message: i,
                    state: k,
                    divergence,
                });
            }
        }
    }
    Ok(out)
}

/// Joint communication and compound-state identification: the unique
/// (i, σ_k) such that some s ∈ S_kⁿ puts (x_i, s, y) within η of the channel
/// and leaves every other explainable codeword conditionally independent.
/// Falls back to (0, σ₁).
pub fn decode_and(codebook: &Codebook, y: &[usize], model: &CavcModel, opts: JointOptions) -> Result<JointDecodeReport> {
    let mut ctx = Context::new(model, codebook, y, opts)?;
    let satisfying = satisfying_pairs(&mut ctx, RivalRule::Either)?;
    let verdict = match satisfying.as_slice() {
        [c] => Verdict::message_state(c.message, c.state),
        [] => Verdict::fallback(Task::And, VerdictFlag::NoCandidate),
        _ => Verdict::fallback(Task::And, VerdictFlag::Ambiguous),
    };
    Ok(JointDecodeReport {
        verdict,
        eta: opts.eta,
        satisfying,
        b_sets: None,
        explainable: ctx.explainable_lists(),
        mode: ctx.mode(),
    })
}

/// The and-task rule with the compound state dropped. Falls back to message 0.
pub fn decode_com(codebook: &Codebook, y: &[usize], model: &CavcModel, opts: JointOptions) -> Result<JointDecodeReport> {
    let mut ctx = Context::new(model, codebook, y, opts)?;
    let satisfying = satisfying_pairs(&mut ctx, RivalRule::Either)?;
    let mut messages: Vec<usize> = satisfying.iter().map(|c| c.message).collect();
    messages.dedup();
    let verdict = match messages.as_slice() {
        [m] => Verdict::message(Task::Com, *m),
        [] => Verdict::fallback(Task::Com, VerdictFlag::NoCandidate),
        _ => Verdict::fallback(Task::Com, VerdictFlag::Ambiguous),
    };
    Ok(JointDecodeReport {
        verdict,
        eta: opts.eta,
        satisfying,
        b_sets: None,
        explainable: ctx.explainable_lists(),
        mode: ctx.mode(),
    })
}

/// Communication or identification. B_k collects messages explained in
/// S_kⁿ whose rivals explained in the other family are conditionally
/// independent. B₁ = B₂ = {m} gives m; B_k = ∅ ≠ B_{3−k} gives σ_{3−k};
/// anything else is σ₁ flagged unresolved.
pub fn decode_or(codebook: &Codebook, y: &[usize], model: &CavcModel, opts: JointOptions) -> Result<JointDecodeReport> {
    let mut ctx = Context::new(model, codebook, y, opts)?;
    let satisfying = satisfying_pairs(&mut ctx, RivalRule::Opposite)?;
    let b = |k: Family| -> Vec<usize> { satisfying.iter().filter(|c| c.state == k).map(|c| c.message).collect() };
    let (b1, b2) = (b(Family::One), b(Family::Two));
    let verdict = match (b1.as_slice(), b2.as_slice()) {
        ([m1], [m2]) if m1 == m2 => Verdict::message(Task::Or, *m1),
        ([], [_, ..]) => Verdict::state(Task::Or, Family::Two),
        ([_, ..], []) => Verdict::state(Task::Or, Family::One),
        ([], []) => {
            let mut v = Verdict::fallback(Task::Or, VerdictFlag::Unresolved);
            v.flags.push(VerdictFlag::NoCandidate);
            v
        }
        _ => Verdict::fallback(Task::Or, VerdictFlag::Unresolved),
    };
    Ok(JointDecodeReport {
        verdict,
        eta: opts.eta,
        satisfying,
        b_sets: Some([b1, b2]),
        explainable: ctx.explainable_lists(),
        mode: ctx.mode(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::channel::ChannelKernel;

    fn book() -> Codebook {
        Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap()
    }

    #[test]
    fn tables_with_margins() {
        let t = contingency_tables(&[2, 1], &[1, 2]);
        // [[1,1],[0,1]] and [[0,2],[1,0]]
        assert_eq!(t.len(), 2);
        for m in &t {
            assert_eq!(m[0] + m[1], 2);
            assert_eq!(m[0] + m[2], 1);
        }
        assert_eq!(contingency_tables(&[3], &[1, 2]), vec![vec![1, 2]]);
        assert_eq!(contingency_tables(&[2, 2], &[2, 2]).len(), 3);
    }

    #[test]
    fn output_disjoint_noiseless_decodes_codeword_and_state() {
        let m = catalog::disjoint_output_noiseless();
        // σ₁ copies x into {0, 1}
        let y = [0, 0, 0, 1, 1, 1];
        let r = decode_and(&book(), &y, &m, JointOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::message_state(0, Family::One));
        assert_eq!(r.mode, SearchMode::ExactTypes);
        let r = decode_com(&book(), &y, &m, JointOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::message(Task::Com, 0));
        let r = decode_or(&book(), &y, &m, JointOptions::default()).unwrap();
        assert_eq!(r.b_sets, Some([vec![0], vec![]]));
        assert_eq!(r.verdict, Verdict::state(Task::Or, Family::One));
        // σ₂ image of codeword 1
        let y2: Vec<usize> = book().codeword(1).iter().map(|&a| a + 2).collect();
        let r = decode_and(&book(), &y2, &m, JointOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::message_state(1, Family::Two));
    }

    #[test]
    fn impossible_output_falls_back() {
        // noiseless-vs-flip with an output that neither map can produce from
        // either codeword: 000111 sent through both maps gives 000111 or
        // 111000; 001100 matches neither
        let m = catalog::noiseless_vs_flip();
        let y = [0, 0, 1, 1, 0, 0];
        let r = decode_and(&book(), &y, &m, JointOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::fallback(Task::And, VerdictFlag::NoCandidate));
        assert!(r.satisfying.is_empty());
    }

    #[test]
    fn or_decoder_both_sets_singleton() {
        // two noiseless maps onto disjoint output halves: B₁ = {m} and
        // B₂ = {m} cannot both hold, so use one shared identity state
        let kernel = ChannelKernel::from_fn(2, 2, 2, |x, _, y| if x == y { 1.0 } else { 0.0 }).unwrap();
        let m = CavcModel::new(kernel, vec![0], vec![1]).unwrap();
        let r = decode_or(&book(), &[0, 0, 0, 1, 1, 1], &m, JointOptions::default()).unwrap();
        assert_eq!(r.b_sets, Some([vec![0], vec![0]]));
        assert_eq!(r.verdict, Verdict::message(Task::Or, 0));
    }

    #[test]
    fn relaxation_mode_matches_exact_on_clean_instances() {
        let m = catalog::disjoint_output_noiseless();
        let y = [0, 0, 0, 1, 1, 1];
        let opts = JointOptions {
            mode: SearchMode::ConvexRelaxation,
            ..Default::default()
        };
        let r = decode_and(&book(), &y, &m, opts).unwrap();
        assert_eq!(r.verdict, Verdict::message_state(0, Family::One));
        assert_eq!(r.mode, SearchMode::ConvexRelaxation);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = catalog::disjoint_output_noiseless();
        assert!(decode_and(&book(), &[0, 1], &m, JointOptions::default()).is_err());
        assert!(decode_and(&book(), &[0; 6], &m, JointOptions::with_eta(0.0)).is_err());
        assert!(decode_or(&book(), &[9; 6], &m, JointOptions::default()).is_err());
    }
}
