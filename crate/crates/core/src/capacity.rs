//! Max-min mutual information over mixture hulls.
//!
//! Inner problems (min over mixtures for a fixed input law) are convex and
//! solved by Frank–Wolfe. The outer problem (max over input laws) is concave
//! and solved by Kelley cutting planes, using Σ_x p(x) D(W(·|x) ‖ P_Y) as the
//! supergradient cut of the minimizing channel.

use crate::channel::{mixture_unchecked, CavcModel, Dmc, Family, SimplexVector};
use crate::error::{CavcError, Result};
use crate::ext::ExtReal;
use crate::info::{binary_entropy, mi_raw};
use crate::lp::{LinearProgram, LpOptions, Relation};
use crate::symmetry::{closest_mixtures, grid_steps, hull_separation, simplex_grid, simplex_grid_size, DEFAULT_TOL};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityTask {
    Com,
    And,
    Or,
}

impl std::str::FromStr for CapacityTask {
    type Err = CavcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "com" => Ok(CapacityTask::Com),
            "and" => Ok(CapacityTask::And),
            "or" => Ok(CapacityTask::Or),
            other => Err(CavcError::Config(format!("unknown task {other:?}; expected com, and or or"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub inner_gap: f64,
    pub inner_max_iterations: usize,
    pub outer_gap: f64,
    pub outer_max_iterations: usize,
    /// Warm-start grid resolution, used when |X| ≤ 4.
    pub warm_start_resolution: f64,
    /// Hull intersection tolerance; shared with the separation test.
    pub tol: f64,
    pub lp: LpOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            inner_gap: 1e-8,
            inner_max_iterations: 10_000,
            outer_gap: 1e-6,
            outer_max_iterations: 400,
            warm_start_resolution: 0.02,
            tol: DEFAULT_TOL,
            lp: LpOptions::default(),
        }
    }
}

/// Minimizer of I(p, W_q) over one hull.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HullMinimum {
    pub value: f64,
    /// Weights over `model.family(family)`.
    pub q: SimplexVector,
    pub gap: f64,
    pub iterations: usize,
}

/// Minimizer over the hull intersection, in both parameterizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntersectionMinimum {
    pub value: ExtReal,
    pub q1: Option<SimplexVector>,
    pub q2: Option<SimplexVector>,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstMixtures {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<SimplexVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q2: Option<SimplexVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverTrace {
    pub outer_iterations: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub inner_max_gap: f64,
    pub warm_start_best: Option<f64>,
    pub converged: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub task: CapacityTask,
    pub value: ExtReal,
    pub optimal_input: SimplexVector,
    pub worst_mixtures: WorstMixtures,
    pub solver_trace: SolverTrace,
}

struct Mixer<'a> {
    model: &'a CavcModel,
    states: Vec<usize>,
    nx: usize,
    ny: usize,
}

impl<'a> Mixer<'a> {
    fn new(model: &'a CavcModel, states: &[usize]) -> Self {
        Mixer {
            model,
            states: states.to_vec(),
            nx: model.nx(),
            ny: model.ny(),
        }
    }

    fn channel(&self, q: &[f64]) -> Vec<f64> {
        mixture_unchecked(self.model.kernel(), &self.states, q).as_flat().to_vec()
    }

    fn vertex(&self, i: usize) -> Vec<f64> {
        let k = self.model.kernel();
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for x in 0..self.nx {
            out.extend_from_slice(k.row(x, self.states[i]));
        }
        out
    }

    /// g_s = Σ_{x,y} p(x) W(y|x,s) log(W_q(y|x) / P_Y(y)), with the one-sided
    /// limits where W_q vanishes.
    fn gradient(&self, p: &[f64], wq: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let py = output_law(p, wq, ny);
        let k = self.model.kernel();
        let mut col_mass = vec![0.0; ny];
        self.states
            .iter()
            .map(|&s| {
                col_mass.iter_mut().for_each(|v| *v = 0.0);
                for x in 0..nx {
                    for y in 0..ny {
                        col_mass[y] += p[x] * k.prob(x, s, y);
                    }
                }
                let mut g = 0.0;
                for x in 0..nx {
                    if p[x] == 0.0 {
                        continue;
                    }
                    for y in 0..ny {
                        let a = p[x] * k.prob(x, s, y);
                        if a == 0.0 {
                            continue;
                        }
                        let w = wq[x * ny + y];
                        if w > 0.0 {
                            g += a * (w / py[y]).log2();
                        } else if py[y] > 0.0 {
                            return f64::NEG_INFINITY;
                        } else {
                            g += a * (k.prob(x, s, y) / col_mass[y]).log2();
                        }
                    }
                }
                g
            })
            .collect()
    }
}

fn output_law(p: &[f64], w: &[f64], ny: usize) -> Vec<f64> {
    let mut py = vec![0.0; ny];
    for (x, &px) in p.iter().enumerate() {
        for (acc, &v) in py.iter_mut().zip(&w[x * ny..(x + 1) * ny]) {
            *acc += px * v;
        }
    }
    py
}

/// Minimizes a convex φ on [0, hi] by golden-section search.
fn golden_section(hi: f64, mut phi: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INV: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV * (b - a);
    let mut d = a + INV * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..90 {
        if b - a <= 1e-15 * (1.0 + hi) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV * (b - a);
            fd = phi(d);
        }
    }
    let mut best = ((a + b) / 2.0, phi((a + b) / 2.0));
    for t in [0.0, hi] {
        let v = phi(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

fn check_input(model: &CavcModel, p: &SimplexVector) -> Result<()> {
    if p.len() != model.nx() {
        return Err(CavcError::LengthMismatch {
            expected: model.nx(),
            got: p.len(),
        });
    }
    Ok(())
}

pub fn min_mi_over_hull(p_x: &SimplexVector, model: &CavcModel, family: Family) -> Result<HullMinimum> {
    min_mi_over_hull_with(p_x, model, family, &SolverOptions::default())
}

/// Pairwise Frank–Wolfe from the uniform mixture.
pub fn min_mi_over_hull_with(
    p_x: &SimplexVector,
    model: &CavcModel,
    family: Family,
    opts: &SolverOptions,
) -> Result<HullMinimum> {
    check_input(model, p_x)?;
    let mixer = Mixer::new(model, model.family(family));
    min_over_states(p_x.weights(), &mixer, opts)
}

fn min_over_states(p: &[f64], mixer: &Mixer, opts: &SolverOptions) -> Result<HullMinimum> {
    let ns = mixer.states.len();
    let ny = mixer.ny;
    let vertices: Vec<Vec<f64>> = (0..ns).map(|i| mixer.vertex(i)).collect();
    // A vertex minimizer is common; checking them first avoids slow
    // convergence toward a face.
    let vertex_values: Vec<f64> = vertices.iter().map(|v| mi_raw(p, v, ny)).collect();
    let mut q = vec![1.0 / ns as f64; ns];
    let mut wq = mixer.channel(&q);
    let mut value = mi_raw(p, &wq, ny);
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    if ns == 1 {
        return Ok(HullMinimum {
            value,
            q: SimplexVector::from_solver(q)?,
            gap: 0.0,
            iterations: 0,
        });
    }
    let best_vertex = (0..ns).min_by(|&a, &b| vertex_values[a].total_cmp(&vertex_values[b])).unwrap();
    if vertex_values[best_vertex] < value {
        q = vec![0.0; ns];
        q[best_vertex] = 1.0;
        wq = vertices[best_vertex].clone();
        value = vertex_values[best_vertex];
    }
    while iterations < opts.inner_max_iterations {
        let g = mixer.gradient(p, &wq);
        let (fw, gmin) = g
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        gap = value - gmin;
        if gap <= opts.inner_gap {
            break;
        }
        let (away, _) = g
            .iter()
            .enumerate()
            .filter(|(i, _)| q[*i] > 0.0)
            .fold((fw, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if away == fw {
            break;
        }
        let hi = q[away];
        let dir: Vec<f64> = vertices[fw].iter().zip(&vertices[away]).map(|(a, b)| a - b).collect();
        let mut trial = vec![0.0; wq.len()];
        let (step, new_value) = golden_section(hi, |t| {
            for ((o, &w), &d) in trial.iter_mut().zip(&wq).zip(&dir) {
                *o = (w + t * d).clamp(0.0, 1.0);
            }
            mi_raw(p, &trial, ny)
        });
        iterations += 1;
        if new_value >= value || step == 0.0 {
            // A stalled pairwise step usually means the away vertex holds
            // only rounding mass; retry with a plain step toward `fw`.
            let dir: Vec<f64> = vertices[fw].iter().zip(&wq).map(|(a, b)| a - b).collect();
            let (step, new_value) = golden_section(1.0, |t| {
                for ((o, &w), &d) in trial.iter_mut().zip(&wq).zip(&dir) {
                    *o = (w + t * d).clamp(0.0, 1.0);
                }
                mi_raw(p, &trial, ny)
            });
            if new_value >= value || step == 0.0 {
                break;
            }
            for (i, v) in q.iter_mut().enumerate() {
                *v = (1.0 - step) * *v + if i == fw { step } else { 0.0 };
                if *v < 1e-15 {
                    *v = 0.0;
                }
            }
            wq = mixer.channel(&q);
            value = new_value;
            continue;
        }
        q[fw] += step;
        q[away] = if step >= hi || q[away] - step < 1e-15 { 0.0 } else { q[away] - step };
        for ((w, &d), _) in wq.iter_mut().zip(&dir).zip(0..) {
            *w = (*w + step * d).clamp(0.0, 1.0);
        }
        value = new_value;
    }
    // Recompute from the weights so value and q agree exactly.
    let q = SimplexVector::from_solver(q)?;
    let value = mi_raw(p, &mixer.channel(q.weights()), ny);
    if gap > 1e-6 && iterations >= opts.inner_max_iterations {
        return Err(CavcError::NonConvergence {
            iterations,
            detail: format!("hull minimization gap {gap:.3e}; best value {value:.9} at q = {:?}", q.weights()),
        });
    }
    Ok(HullMinimum {
        value,
        q,
        gap: gap.max(0.0),
        iterations,
    })
}

pub fn min_mi_over_intersection(p_x: &SimplexVector, model: &CavcModel) -> Result<IntersectionMinimum> {
    min_mi_over_intersection_with(p_x, model, &SolverOptions::default())
}

/// Away-step Frank–Wolfe over {(q1, q2) : |W_q1 − W_q2| ≤ tol}, with the LP as
/// linear minimization oracle.
pub fn min_mi_over_intersection_with(
    p_x: &SimplexVector,
    model: &CavcModel,
    opts: &SolverOptions,
) -> Result<IntersectionMinimum> {
    check_input(model, p_x)?;
    let sep = hull_separation(model, opts.tol)?;
    if sep.intersection_empty {
        return Ok(IntersectionMinimum {
            value: ExtReal::Infinite,
            q1: None,
            q2: None,
            gap: 0.0,
            iterations: 0,
        });
    }
    let p = p_x.weights();
    let mixer = Mixer::new(model, model.family(Family::One));
    let n1 = mixer.states.len();
    let n2 = model.family(Family::Two).len();
    let ny = mixer.ny;

    let lmo = |g: &[f64]| -> Result<Vec<f64>> {
        let finite_min = g.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let finite_max = g.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let floor = if finite_min.is_finite() {
            finite_min - 10.0 * (1.0 + finite_max - finite_min)
        } else {
            -1.0
        };
        let mut c: Vec<f64> = g.iter().map(|&v| if v.is_finite() { v } else { floor }).collect();
        c.extend(std::iter::repeat(0.0).take(n2));
        let (a, b, _) = closest_mixtures(model, Some((&c, opts.tol)), &opts.lp)?;
        Ok(a.weights().iter().chain(b.weights()).copied().collect())
    };
    let q1_of = |v: &[f64]| v[..n1].to_vec();

    // Active set: vertices with convex weights.
    let start: Vec<f64> = sep.witness_q1.weights().iter().chain(sep.witness_q2.weights()).copied().collect();
    let mut active: Vec<(Vec<f64>, f64)> = vec![(start, 1.0)];
    let combine = |active: &[(Vec<f64>, f64)]| -> Vec<f64> {
        let mut out = vec![0.0; n1 + n2];
        for (v, w) in active {
            for (o, a) in out.iter_mut().zip(v) {
                *o += w * a;
            }
        }
        out
    };
    let mut z = combine(&active);
    let mut value = mi_raw(p, &mixer.channel(&q1_of(&z)), ny);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let max_iter = opts.inner_max_iterations.min(2000);
    while iterations < max_iter {
        let wq = mixer.channel(&q1_of(&z));
        let g = mixer.gradient(p, &wq);
        let v = lmo(&g)?;
        let lin = |u: &[f64]| -> f64 {
            u[..n1]
                .iter()
                .zip(&g)
                .map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b })
                .sum()
        };
        let gz = lin(&z);
        let gv = lin(&v);
        gap = gz - gv;
        if !(gap > opts.inner_gap) {
            break;
        }
        // Away vertex: the active vertex with the largest linear value.
        let (ai, ga) = active
            .iter()
            .enumerate()
            .map(|(i, (u, _))| (i, lin(u)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let away_gap = ga - gz;
        let (dir, hi, fw_step) = if gap >= away_gap || active.len() == 1 {
            (v.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<f64>>(), 1.0, true)
        } else {
            let wa = active[ai].1;
            (
                z.iter().zip(&active[ai].0).map(|(a, b)| a - b).collect::<Vec<f64>>(),
                wa / (1.0 - wa),
                false,
            )
        };
        let (step, new_value) = golden_section(hi, |t| {
            let q: Vec<f64> = z[..n1].iter().zip(&dir).map(|(a, d)| (a + t * d).max(0.0)).collect();
            mi_raw(p, &mixer.channel(&q), ny)
        });
        iterations += 1;
        if step == 0.0 || new_value > value {
            break;
        }
        if fw_step {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 - step;
            }
            match active.iter_mut().find(|(u, _)| max_abs_diff(u, &v) <= 1e-12) {
                Some(entry) => entry.1 += step,
                None => active.push((v, step)),
            }
        } else {
            for (_, w) in active.iter_mut() {
                *w *= 1.0 + step;
            }
            active[ai].1 -= step;
        }
        active.retain(|(_, w)| *w > 1e-14);
        let total: f64 = active.iter().map(|(_, w)| w).sum();
        active.iter_mut().for_each(|(_, w)| *w /= total);
        z = combine(&active);
        value = new_value;
    }
    let q1 = SimplexVector::from_solver(z[..n1].to_vec())?;
    let q2 = SimplexVector::from_solver(z[n1..].to_vec())?;
    let value = mi_raw(p, &mixer.channel(q1.weights()), ny);
    Ok(IntersectionMinimum {
        value: ExtReal::Finite(value),
        q1: Some(q1),
        q2: Some(q2),
        gap: if gap.is_finite() { gap.max(0.0) } else { 0.0 },
        iterations,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The inner minimum at one input law: value, minimizing channel, gap and the
/// tag of where it was found.
struct Evaluation {
    value: f64,
    channel: Vec<f64>,
    gap: f64,
    worst: WorstMixtures,
}

enum Objective {
    Union,
    Intersection,
}

fn evaluate(model: &CavcModel, objective: &Objective, p: &[f64], opts: &SolverOptions) -> Result<Evaluation> {
    let pv = SimplexVector::from_solver(p.to_vec())?;
    match objective {
        Objective::Union => {
            let a = min_mi_over_hull_with(&pv, model, Family::One, opts)?;
            let b = min_mi_over_hull_with(&pv, model, Family::Two, opts)?;
            // Ties go to family one.
            let (k, best) = if b.value < a.value { (Family::Two, b) } else { (Family::One, a) };
            let channel = mixture_unchecked(model.kernel(), model.family(k), best.q.weights())
                .as_flat()
                .to_vec();
            Ok(Evaluation {
                value: best.value,
                channel,
                gap: best.gap,
                worst: WorstMixtures {
                    family: Some(k),
                    q1: (k == Family::One).then(|| best.q.clone()),
                    q2: (k == Family::Two).then(|| best.q.clone()),
                },
            })
        }
        Objective::Intersection => {
            let r = min_mi_over_intersection_with(&pv, model, opts)?;
            let q1 = r.q1.clone().ok_or_else(|| CavcError::Inconsistent("intersection minimum without witness".into()))?;
            let channel = mixture_unchecked(model.kernel(), model.family(Family::One), q1.weights())
                .as_flat()
                .to_vec();
            Ok(Evaluation {
                value: r.value.finite().unwrap_or(f64::INFINITY),
                channel,
                gap: r.gap,
                worst: WorstMixtures {
                    family: None,
                    q1: r.q1,
                    q2: r.q2,
                },
            })
        }
    }
}

/// Cut coefficients D(W(·|x) ‖ P_Y), the supergradient of p ↦ I(p, W) on the simplex.
fn cut(p: &[f64], w: &[f64], ny: usize) -> Vec<f64> {
    let py = output_law(p, w, ny);
    (0..p.len())
        .map(|x| {
            w[x * ny..(x + 1) * ny]
                .iter()
                .zip(&py)
                .map(|(&a, &b)| if a > 0.0 { a * (a / b).log2() } else { 0.0 })
                .sum()
        })
        .collect()
}

const SHRINK: f64 = 1e-6;

fn shrink(p: &[f64]) -> Vec<f64> {
    let u = 1.0 / p.len() as f64;
    p.iter().map(|&v| (1.0 - SHRINK) * v + SHRINK * u).collect()
}

fn maximize(model: &CavcModel, objective: Objective, task: CapacityTask, opts: &SolverOptions) -> Result<CapacityResult> {
    let nx = model.nx();
    let ny = model.ny();
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(Vec<f64>, Evaluation)> = None;
    let mut inner_max_gap: f64 = 0.0;
    let mut warm_start_best = None;

    let consider = |p: Vec<f64>, cuts: &mut Vec<Vec<f64>>, best: &mut Option<(Vec<f64>, Evaluation)>, gap: &mut f64| -> Result<f64> {
        let e = evaluate(model, &objective, &p, opts)?;
        cuts.push(cut(&p, &e.channel, ny));
        *gap = gap.max(e.gap);
        let v = e.value;
        if best.as_ref().map_or(true, |(_, b)| v > b.value) {
            *best = Some((p, e));
        }
        Ok(v)
    };

    let uniform = vec![1.0 / nx as f64; nx];
    consider(uniform, &mut cuts, &mut best, &mut inner_max_gap)?;
    if nx <= 4 && nx > 1 {
        let steps = grid_steps(opts.warm_start_resolution)?;
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for g in simplex_grid(nx, steps) {
            let p = shrink(&g);
            let e = evaluate(model, &objective, &p, opts)?;
            scored.push((e.value, p));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        warm_start_best = scored.first().map(|s| s.0);
        for (_, p) in scored.into_iter().take(2 * nx + 1) {
            consider(p, &mut cuts, &mut best, &mut inner_max_gap)?;
        }
    }

    let mut upper = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = nx == 1;
    while !converged && iterations < opts.outer_max_iterations {
        // maximize t subject to t ≤ Σ_x p(x) c_x for every cut.
        let mut lp = LinearProgram::new(nx + 1);
        lp.set_objective(nx, -1.0);
        let ones: Vec<(usize, f64)> = (0..nx).map(|x| (x, 1.0)).collect();
        lp.add_row(&ones, Relation::Eq, 1.0);
        for c in &cuts {
            let mut terms: Vec<(usize, f64)> = c.iter().enumerate().map(|(x, &v)| (x, -v)).collect();
            terms.push((nx, 1.0));
            lp.add_row(&terms, Relation::Le, 0.0);
        }
        let sol = lp.solve(&opts.lp)?;
        upper = -sol.objective;
        let lower = best.as_ref().map_or(0.0, |b| b.1.value);
        iterations += 1;
        if upper - lower <= opts.outer_gap {
            converged = true;
            break;
        }
        let p = shrink(&sol.x[..nx]);
        consider(p, &mut cuts, &mut best, &mut inner_max_gap)?;
    }
    let (p, e) = best.ok_or_else(|| CavcError::Inconsistent("no evaluation".into()))?;
    let lower = e.value;
    if nx == 1 {
        upper = lower;
    }
    Ok(CapacityResult {
        task,
        value: ExtReal::Finite(lower),
        optimal_input: SimplexVector::from_solver(p)?,
        worst_mixtures: e.worst,
        solver_trace: SolverTrace {
            outer_iterations: iterations,
            lower_bound: lower,
            upper_bound: upper.max(lower),
            inner_max_gap,
            warm_start_best,
            converged,
            note: None,
        },
    })
}

pub fn capacity_com(model: &CavcModel) -> Result<CapacityResult> {
    capacity_com_with(model, &SolverOptions::default())
}

pub fn capacity_com_with(model: &CavcModel, opts: &SolverOptions) -> Result<CapacityResult> {
    maximize(model, Objective::Union, CapacityTask::Com, opts)
}

pub fn capacity_and(model: &CavcModel) -> Result<CapacityResult> {
    capacity_and_with(model, &SolverOptions::default())
}

pub fn capacity_and_with(model: &CavcModel, opts: &SolverOptions) -> Result<CapacityResult> {
    let sep = hull_separation(model, opts.tol)?;
    if !sep.intersection_empty {
        return Ok(CapacityResult {
            task: CapacityTask::And,
            value: ExtReal::ZERO,
            optimal_input: SimplexVector::uniform(model.nx()),
            worst_mixtures: WorstMixtures {
                family: None,
                q1: Some(sep.witness_q1),
                q2: Some(sep.witness_q2),
            },
            solver_trace: SolverTrace {
                outer_iterations: 0,
                lower_bound: 0.0,
                upper_bound: 0.0,
                inner_max_gap: 0.0,
                warm_start_best: None,
                converged: true,
                note: Some("hulls intersect".into()),
            },
        });
    }
    let mut r = capacity_com_with(model, opts)?;
    r.task = CapacityTask::And;
    Ok(r)
}

pub fn capacity_or(model: &CavcModel) -> Result<CapacityResult> {
    capacity_or_with(model, &SolverOptions::default())
}

pub fn capacity_or_with(model: &CavcModel, opts: &SolverOptions) -> Result<CapacityResult> {
    let sep = hull_separation(model, opts.tol)?;
    if sep.intersection_empty {
        return Ok(CapacityResult {
            task: CapacityTask::Or,
            value: ExtReal::Infinite,
            optimal_input: SimplexVector::uniform(model.nx()),
            worst_mixtures: WorstMixtures {
                family: None,
                q1: None,
                q2: None,
            },
            solver_trace: SolverTrace {
                outer_iterations: 0,
                lower_bound: f64::INFINITY,
                upper_bound: f64::INFINITY,
                inner_max_gap: 0.0,
                warm_start_best: None,
                converged: true,
                note: Some("hulls are disjoint".into()),
            },
        });
    }
    maximize(model, Objective::Intersection, CapacityTask::Or, opts)
}

pub fn capacity(model: &CavcModel, task: CapacityTask, opts: &SolverOptions) -> Result<CapacityResult> {
    match task {
        CapacityTask::Com => capacity_com_with(model, opts),
        CapacityTask::And => capacity_and_with(model, opts),
        CapacityTask::Or => capacity_or_with(model, opts),
    }
}

/// Grid estimate with a rigorous enclosure of the true capacity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityBracket {
    pub task: CapacityTask,
    pub lower: ExtReal,
    pub estimate: ExtReal,
    pub upper: ExtReal,
    pub input_resolution: f64,
    pub mixture_resolution: f64,
}

impl CapacityBracket {
    pub fn contains(&self, v: ExtReal) -> bool {
        self.lower <= v && v <= self.upper
    }
}

pub const ORACLE_LIMIT: f64 = 1e8;

/// Floating-point allowance added to both ends of every bracket.
const ROUNDING: f64 = 1e-12;

/// Uniform bound on |I(p, W) − I(p, W')| when every row moves by at most `d`
/// in total variation.
fn channel_continuity(d: f64, ny: usize, cap: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 0.5 {
        return cap;
    }
    (2.0 * (binary_entropy(d) + d * ((ny.max(2) - 1) as f64).log2())).min(cap)
}

/// Uniform bound on |I(p, W) − I(p', W)| when TV(p, p') ≤ d.
fn input_continuity(d: f64, ny: usize, cap: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 0.5 {
        return cap;
    }
    (binary_entropy(d) + d * ((ny.max(2) - 1) as f64).log2() + d * (ny as f64).log2()).min(cap)
}

/// Max over an input grid of the min over a mixture grid; the bracket widens
/// the grid value by continuity bounds for both discretizations.
pub fn capacity_grid_oracle(
    model: &CavcModel,
    task: CapacityTask,
    input_resolution: f64,
    mixture_resolution: f64,
) -> Result<CapacityBracket> {
    let sp = grid_steps(input_resolution)?;
    let sq = grid_steps(mixture_resolution)?;
    let (nx, ny) = (model.nx(), model.ny());
    let cap = (nx.min(ny) as f64).log2();
    let n1 = model.family(Family::One).len();
    let n2 = model.family(Family::Two).len();
    let points = simplex_grid_size(nx, sp) * (simplex_grid_size(n1, sq) + simplex_grid_size(n2, sq));
    if points > ORACLE_LIMIT {
        return Err(CavcError::BudgetExceeded {
            needed: points,
            budget: ORACLE_LIMIT,
            what: "capacity grid".into(),
        });
    }
    let bracket = |lower: ExtReal, estimate: ExtReal, upper: ExtReal| CapacityBracket {
        task,
        lower,
        estimate,
        upper,
        input_resolution,
        mixture_resolution,
    };
    let sep = hull_separation(model, DEFAULT_TOL)?;
    match task {
        CapacityTask::And if !sep.intersection_empty => return Ok(bracket(ExtReal::ZERO, ExtReal::ZERO, ExtReal::ZERO)),
        CapacityTask::Or if sep.intersection_empty => {
            return Ok(bracket(ExtReal::Infinite, ExtReal::Infinite, ExtReal::Infinite))
        }
        _ => {}
    }
    let p_grid = simplex_grid(nx, sp);
    let d_p = (nx - 1) as f64 / sp as f64;
    let delta_p = input_continuity(d_p, ny, cap);
    let channels = |family: Family| -> Vec<Vec<f64>> {
        let states = model.family(family);
        simplex_grid(states.len(), sq)
            .iter()
            .map(|q| mixture_unchecked(model.kernel(), states, q).as_flat().to_vec())
            .collect()
    };
    let max_min = |set: &[Vec<f64>]| -> f64 {
        p_grid
            .iter()
            .map(|p| set.iter().map(|w| mi_raw(p, w, ny)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    match task {
        CapacityTask::Com | CapacityTask::And => {
            let mut set = channels(Family::One);
            set.extend(channels(Family::Two));
            let g = max_min(&set);
            let kmax = n1.max(n2);
            let delta_q = channel_continuity((kmax - 1) as f64 / sq as f64, ny, cap);
            Ok(bracket(
                ExtReal::Finite((g - delta_q - ROUNDING).max(0.0)),
                ExtReal::Finite(g),
                ExtReal::Finite((g + delta_p).min(cap) + ROUNDING),
            ))
        }
        CapacityTask::Or => {
            // Grid points of hull one within ρ of hull two cover the intersection.
            let rho = DEFAULT_TOL + n1 as f64 / sq as f64;
            let near: Vec<Vec<f64>> = simplex_grid(n1, sq)
                .into_iter()
                .filter(|q| distance_to_hull_two(model, q).map_or(false, |d| d <= rho))
                .collect();
            let near_channels: Vec<Vec<f64>> = near
                .iter()
                .map(|q| mixture_unchecked(model.kernel(), model.family(Family::One), q).as_flat().to_vec())
                .collect();
            let mut projected: Vec<Vec<f64>> = Vec::new();
            for q in &near {
                let w = project_onto_intersection(model, q)?;
                if !projected.iter().any(|u| max_abs_diff(u, &w) <= 1e-12) {
                    projected.push(w);
                }
            }
            let low = max_min(&near_channels);
            let high = max_min(&projected);
            let delta_q = channel_continuity((n1 - 1).max(1) as f64 / sq as f64, ny, cap);
            Ok(bracket(
                ExtReal::Finite((low - delta_q - ROUNDING).max(0.0)),
                ExtReal::Finite(high),
                ExtReal::Finite((high + delta_p).min(cap) + ROUNDING),
            ))
        }
    }
}

fn distance_to_hull_two(model: &CavcModel, q1: &[f64]) -> Result<f64> {
    let w1 = mixture_unchecked(model.kernel(), model.family(Family::One), q1);
    let (_, d) = nearest_in_hull(model, Family::Two, &w1)?;
    Ok(d)
}

/// min over q in hull `k` of max |W_q − target|.
pub(crate) fn nearest_in_hull(model: &CavcModel, k: Family, target: &Dmc) -> Result<(Vec<f64>, f64)> {
    let states = model.family(k);
    let ns = states.len();
    let mut lp = LinearProgram::new(ns + 1);
    lp.set_objective(ns, 1.0);
    let ones: Vec<(usize, f64)> = (0..ns).map(|i| (i, 1.0)).collect();
    lp.add_row(&ones, Relation::Eq, 1.0);
    let kern = model.kernel();
    for x in 0..model.nx() {
        for y in 0..model.ny() {
            let mut up: Vec<(usize, f64)> = states.iter().enumerate().map(|(i, &s)| (i, kern.prob(x, s, y))).collect();
            let mut down: Vec<(usize, f64)> = up.iter().map(|&(i, c)| (i, -c)).collect();
            up.push((ns, -1.0));
            down.push((ns, -1.0));
            lp.add_row(&up, Relation::Le, target.prob(x, y));
            lp.add_row(&down, Relation::Le, -target.prob(x, y));
        }
    }
    let sol = lp.solve(&LpOptions::default())?;
    let q = SimplexVector::from_solver(sol.x[..ns].to_vec())?;
    let w = mixture_unchecked(kern, states, q.weights());
    Ok((q.weights().to_vec(), w.max_distance(target)))
}

/// A channel of the exact intersection closest (in max norm) to W_{q1}.
fn project_onto_intersection(model: &CavcModel, q1: &[f64]) -> Result<Vec<f64>> {
    let s1 = model.family(Family::One);
    let s2 = model.family(Family::Two);
    let (n1, n2) = (s1.len(), s2.len());
    let kern = model.kernel();
    let target = mixture_unchecked(kern, s1, q1);
    // vars: a (n1), b (n2), t
    let t = n1 + n2;
    let mut lp = LinearProgram::new(t + 1);
    lp.set_objective(t, 1.0);
    lp.add_row(&(0..n1).map(|i| (i, 1.0)).collect::<Vec<_>>(), Relation::Eq, 1.0);
    lp.add_row(&(n1..t).map(|i| (i, 1.0)).collect::<Vec<_>>(), Relation::Eq, 1.0);
    for x in 0..model.nx() {
        for y in 0..model.ny() {
            let wa: Vec<(usize, f64)> = s1.iter().enumerate().map(|(i, &s)| (i, kern.prob(x, s, y))).collect();
            let mut diff = wa.clone();
            diff.extend(s2.iter().enumerate().map(|(i, &s)| (n1 + i, -kern.prob(x, s, y))));
            lp.add_row(&diff, Relation::Le, DEFAULT_TOL);
            lp.add_row(&diff.iter().map(|&(i, c)| (i, -c)).collect::<Vec<_>>(), Relation::Le, DEFAULT_TOL);
            let mut up = wa.clone();
            up.push((t, -1.0));
            lp.add_row(&up, Relation::Le, target.prob(x, y));
            let mut down: Vec<(usize, f64)> = wa.iter().map(|&(i, c)| (i, -c)).collect();
            down.push((t, -1.0));
            lp.add_row(&down, Relation::Le, -target.prob(x, y));
        }
    }
    let sol = lp.solve(&LpOptions::default())?;
    let a = SimplexVector::from_solver(sol.x[..n1].to_vec())?;
    Ok(mixture_unchecked(kern, s1, a.weights()).as_flat().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::info::{binary_entropy, mutual_information};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn finite(v: ExtReal) -> f64 {
        v.finite().expect("finite capacity")
    }

    #[test]
    fn hull_minimum_examples() {
        let u = SimplexVector::uniform(2);
        let m = catalog::bsc_family_model(&[0.1, 0.2], &[0.3]);
        let r = min_mi_over_hull(&u, &m, Family::One).unwrap();
        assert!((r.value - (1.0 - binary_entropy(0.2))).abs() < 1e-9);
        assert!((r.q[1] - 1.0).abs() < 1e-9);

        let r = min_mi_over_hull(&u, &m, Family::Two).unwrap();
        assert!((r.value - (1.0 - binary_entropy(0.3))).abs() < 1e-12);

        let m = catalog::bsc_family_model(&[0.0, 0.5], &[0.1]);
        assert!(min_mi_over_hull(&u, &m, Family::One).unwrap().value < 1e-12);
    }

    #[test]
    fn adder_hull_minimum_is_interior() {
        // For uniform input the adder's mixture q gives I = H(Y) − h(q1); the
        // minimum over q is at q = (1/2, 1/2) with value 1/2.
        let m = catalog::adder_avc();
        let r = min_mi_over_hull(&SimplexVector::uniform(2), &m, Family::One).unwrap();
        assert!((r.value - 0.5).abs() < 1e-7, "{}", r.value);
        assert!((r.q[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn intersection_examples() {
        let u = SimplexVector::uniform(2);
        let m = catalog::bsc_family_model(&[0.1, 0.3], &[0.2, 0.4]);
        let r = min_mi_over_intersection(&u, &m).unwrap();
        assert!((finite(r.value) - (1.0 - binary_entropy(0.3))).abs() < 1e-7, "{:?}", r.value);

        let m = catalog::bsc_family_model(&[0.05, 0.1], &[0.3, 0.4]);
        assert_eq!(min_mi_over_intersection(&u, &m).unwrap().value, ExtReal::Infinite);

        let m = catalog::adder_avc();
        let a = finite(min_mi_over_intersection(&u, &m).unwrap().value);
        let b = min_mi_over_hull(&u, &m, Family::One).unwrap().value;
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn capacity_closed_forms() {
        let c = capacity_com(&catalog::noiseless(2)).unwrap();
        assert!((finite(c.value) - 1.0).abs() < 1e-6);

        let m = catalog::bsc_family_model(&[0.1], &[0.2]);
        let c = capacity_com(&m).unwrap();
        assert!((finite(c.value) - (1.0 - binary_entropy(0.2))).abs() < 1e-6);
        assert_eq!(c.worst_mixtures.family, Some(Family::Two));

        let m = catalog::bsc_family_model(&[0.05, 0.1], &[0.3, 0.4]);
        let c = capacity_and(&m).unwrap();
        assert!((finite(c.value) - (1.0 - binary_entropy(0.4))).abs() < 1e-6);
        assert!((finite(c.value) - 0.02905).abs() < 1e-5);
        assert_eq!(capacity_or(&m).unwrap().value, ExtReal::Infinite);

        let m = catalog::bsc_family_model(&[0.1, 0.3], &[0.2, 0.4]);
        let c = capacity_or(&m).unwrap();
        assert!((finite(c.value) - 0.11871).abs() < 1e-5);

        assert_eq!(capacity_and(&catalog::adder_avc()).unwrap().value, ExtReal::ZERO);
    }

    #[test]
    fn reported_values_are_reproducible() {
        for (name, m) in catalog::regression_set() {
            for task in [CapacityTask::Com, CapacityTask::Or] {
                let c = capacity(&m, task, &SolverOptions::default()).unwrap();
                let Some(v) = c.value.finite() else { continue };
                let (k, q) = match (&c.worst_mixtures.family, &c.worst_mixtures.q1, &c.worst_mixtures.q2) {
                    (Some(Family::Two), _, Some(q)) => (Family::Two, q),
                    (_, Some(q), _) => (Family::One, q),
                    _ => panic!("{name}: no mixture"),
                };
                let w = m.family_mixture(k, q).unwrap();
                let again = mutual_information(&c.optimal_input, &w).unwrap();
                assert!((again - v).abs() < 1e-6, "{name} {task:?}: {again} vs {v}");
                assert!(v <= (m.nx().min(m.ny()) as f64).log2() + 1e-12);
            }
        }
    }

    #[test]
    fn oracle_brackets() {
        let b = capacity_grid_oracle(&catalog::noiseless(2), CapacityTask::Com, 0.1, 0.1).unwrap();
        assert!(b.contains(ExtReal::Finite(1.0)));
        let m = catalog::bsc_family_model(&[0.1], &[0.2]);
        let b = capacity_grid_oracle(&m, CapacityTask::Com, 0.01, 0.01).unwrap();
        assert!(b.contains(ExtReal::Finite(1.0 - binary_entropy(0.2))));
        let b = capacity_grid_oracle(&catalog::adder_avc(), CapacityTask::Com, 0.01, 0.01).unwrap();
        let c = capacity_com(&catalog::adder_avc()).unwrap();
        assert!((finite(b.estimate) - finite(c.value)).abs() < 2e-3, "{:?} vs {:?}", b, c.value);
        assert!(b.contains(c.value));
    }

    #[test]
    fn solver_inside_bracket_on_random_models() {
        for seed in 0..10 {
            let m = catalog::random_model(2, 2, 2, 2, 500 + seed);
            for task in [CapacityTask::Com, CapacityTask::And, CapacityTask::Or] {
                let c = capacity(&m, task, &SolverOptions::default()).unwrap();
                let b = capacity_grid_oracle(&m, task, 0.01, 0.01).unwrap();
                assert!(b.contains(c.value), "seed {seed} {task:?}: {:?} not in {:?}", c.value, b);
            }
        }
    }

    #[test]
    fn avc_capacity_is_single_hull_max_min() {
        let k = catalog::random_kernel(2, 3, 3, 77);
        let m = CavcModel::avc(k.clone()).unwrap();
        let single = CavcModel::new(k, vec![0, 1, 2], vec![0, 1, 2]).unwrap();
        let a = finite(capacity_com(&m).unwrap().value);
        let b = finite(capacity_or(&single).unwrap().value);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn task_ordering_on_random_models() {
        for seed in 0..20 {
            let m = if seed % 2 == 0 {
                catalog::random_model(2, 2, 2, 3, seed)
            } else {
                catalog::random_model(3, 2, 1, 2, seed)
            };
            let and = capacity_and(&m).unwrap().value;
            let com = capacity_com(&m).unwrap().value;
            let or = capacity_or(&m).unwrap().value;
            assert!(and <= com.add(ExtReal::Finite(1e-9)), "seed {seed}");
            assert!(com <= or.add(ExtReal::Finite(1e-6)), "seed {seed}: {com} > {or}");
        }
    }

    #[test]
    fn relabeling_preserves_capacity() {
        let m = catalog::random_model(3, 2, 2, 3, 4);
        let r = m.relabeled(&[2, 0, 1], &[1, 2, 0]).unwrap();
        let a = finite(capacity_com(&m).unwrap().value);
        let b = finite(capacity_com(&r).unwrap().value);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hull_minimum_beats_random_mixtures(seed in 0u64..10_000) {
            let m = catalog::random_model(3, 3, 2, 3, seed);
            let mut rng = rng_from_seed(seed);
            let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() + 0.01).collect();
            let total: f64 = raw.iter().sum();
            let p = SimplexVector::from_solver(raw.iter().map(|v| v / total).collect()).unwrap();
            let r = min_mi_over_hull(&p, &m, Family::One).unwrap();
            for _ in 0..50 {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                let q = SimplexVector::from_solver(raw).unwrap();
                let w = m.family_mixture(Family::One, &q).unwrap();
                prop_assert!(r.value <= mutual_information(&p, &w).unwrap() + 1e-9);
            }
        }
    }
}
