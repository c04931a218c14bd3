//! Symmetrizability and hull separation as linear programs.
//!
//! Each check minimizes the max-norm violation of the defining equalities and
//! thresholds the optimum at `tol`, so every answer carries a witness and a
//! quantitative margin.

use crate::channel::{mixture_unchecked, CavcModel, Family, SimplexVector};
use crate::error::{CavcError, Result};
use crate::lp::{LinearProgram, LpOptions, Relation};
use serde::Serialize;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Cis1,
    Cis2,
    Trans,
}

impl WitnessKind {
    pub fn cis(k: Family) -> Self {
        match k {
            Family::One => WitnessKind::Cis1,
            Family::Two => WitnessKind::Cis2,
        }
    }
}

/// U(s|x) (and V(s|x) for trans) with the achieved max-norm residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryWitness {
    pub kind: WitnessKind,
    /// Global state indices that `u` rows range over.
    pub u_states: Vec<usize>,
    /// One row per input symbol.
    pub u: Vec<SimplexVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_states: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<SimplexVector>>,
    pub residual: f64,
    pub tol: f64,
    pub feasible: bool,
    pub lp_iterations: usize,
}

impl SymmetryWitness {
    /// Row U(·|x) as weights over `u_states`.
    pub fn u_row(&self, x: usize) -> &SimplexVector {
        &self.u[x]
    }

    pub fn v_row(&self, x: usize) -> Option<&SimplexVector> {
        self.v.as_ref().map(|v| &v[x])
    }

    /// Recomputes the residual of this witness against `model`.
    pub fn recompute_residual(&self, model: &CavcModel) -> f64 {
        match &self.v {
            None => cis_residual(model, &self.u_states, &self.u),
            Some(v) => trans_residual(model, &self.u_states, &self.u, self.v_states.as_deref().unwrap_or(&[]), v),
        }
    }
}

/// Σ_s A(s|a) W(y|b,s) as a vector over y.
fn attacked_row(model: &CavcModel, states: &[usize], rows: &[SimplexVector], a: usize, b: usize) -> Vec<f64> {
    let k = model.kernel();
    let mut out = vec![0.0; k.ny()];
    for (i, &s) in states.iter().enumerate() {
        let w = rows[a][i];
        if w != 0.0 {
            for (o, &p) in out.iter_mut().zip(k.row(b, s)) {
                *o += w * p;
            }
        }
    }
    out
}

pub(crate) fn cis_residual(model: &CavcModel, states: &[usize], u: &[SimplexVector]) -> f64 {
    let nx = model.nx();
    let mut worst: f64 = 0.0;
    for x in 0..nx {
        for xp in 0..nx {
            let lhs = attacked_row(model, states, u, xp, x);
            let rhs = attacked_row(model, states, u, x, xp);
            for (a, b) in lhs.iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

pub(crate) fn trans_residual(
    model: &CavcModel,
    u_states: &[usize],
    u: &[SimplexVector],
    v_states: &[usize],
    v: &[SimplexVector],
) -> f64 {
    let nx = model.nx();
    let mut worst: f64 = 0.0;
    for x in 0..nx {
        for xp in 0..nx {
            let lhs = attacked_row(model, u_states, u, xp, x);
            let rhs = attacked_row(model, v_states, v, x, xp);
            for (a, b) in lhs.iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(CavcError::Config(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn rows_from_solution(x: &[f64], offset: usize, nx: usize, width: usize) -> Result<Vec<SimplexVector>> {
    (0..nx)
        .map(|r| SimplexVector::from_solver(x[offset + r * width..offset + (r + 1) * width].to_vec()))
        .collect()
}

/// Adds `Σ_s A(s|a)` simplex rows for a block of variables.
fn add_simplex_rows(lp: &mut LinearProgram, offset: usize, rows: usize, width: usize) {
    for r in 0..rows {
        let terms: Vec<(usize, f64)> = (0..width).map(|i| (offset + r * width + i, 1.0)).collect();
        lp.add_row(&terms, Relation::Eq, 1.0);
    }
}

/// Adds −t ≤ expr ≤ t for a linear expression given as sparse terms.
fn add_abs_bound(lp: &mut LinearProgram, terms: &[(usize, f64)], t: usize) {
    let mut upper = terms.to_vec();
    upper.push((t, -1.0));
    lp.add_row(&upper, Relation::Le, 0.0);
    let mut lower: Vec<(usize, f64)> = terms.iter().map(|&(j, c)| (j, -c)).collect();
    lower.push((t, -1.0));
    lp.add_row(&lower, Relation::Le, 0.0);
}

pub fn check_cis(model: &CavcModel, family: Family, tol: f64) -> Result<SymmetryWitness> {
    check_cis_with(model, family, tol, &LpOptions::default())
}

pub fn check_cis_with(model: &CavcModel, family: Family, tol: f64, opts: &LpOptions) -> Result<SymmetryWitness> {
    check_tol(tol)?;
    let states = model.family(family).to_vec();
    let (nx, ns, ny) = (model.nx(), states.len(), model.ny());
    let t = nx * ns;
    let var = |x: usize, i: usize| x * ns + i;
    let mut lp = LinearProgram::new(t + 1);
    lp.set_objective(t, 1.0);
    add_simplex_rows(&mut lp, 0, nx, ns);
    let k = model.kernel();
    // The constraint for (x', x) is the negation of the one for (x, x').
    for x in 0..nx {
        for xp in x + 1..nx {
            for y in 0..ny {
                let mut terms = Vec::with_capacity(2 * ns);
                for (i, &s) in states.iter().enumerate() {
                    terms.push((var(xp, i), k.prob(x, s, y)));
                    terms.push((var(x, i), -k.prob(xp, s, y)));
                }
                add_abs_bound(&mut lp, &terms, t);
            }
        }
    }
    let sol = lp.solve(opts)?;
    let u = rows_from_solution(&sol.x, 0, nx, ns)?;
    let residual = cis_residual(model, &states, &u);
    Ok(SymmetryWitness {
        kind: WitnessKind::cis(family),
        u_states: states,
        u,
        v_states: None,
        v: None,
        residual,
        tol,
        feasible: residual <= tol,
        lp_iterations: sol.iterations,
    })
}

pub fn check_trans(model: &CavcModel, tol: f64) -> Result<SymmetryWitness> {
    check_trans_with(model, tol, &LpOptions::default())
}

pub fn check_trans_with(model: &CavcModel, tol: f64, opts: &LpOptions) -> Result<SymmetryWitness> {
    check_tol(tol)?;
    let s1 = model.family(Family::One).to_vec();
    let s2 = model.family(Family::Two).to_vec();
    let (nx, ny) = (model.nx(), model.ny());
    let (n1, n2) = (s1.len(), s2.len());
    let v_off = nx * n1;
    let t = v_off + nx * n2;
    let mut lp = LinearProgram::new(t + 1);
    lp.set_objective(t, 1.0);
    add_simplex_rows(&mut lp, 0, nx, n1);
    add_simplex_rows(&mut lp, v_off, nx, n2);
    let k = model.kernel();
    for x in 0..nx {
        for xp in 0..nx {
            for y in 0..ny {
                let mut terms = Vec::with_capacity(n1 + n2);
                for (i, &s) in s1.iter().enumerate() {
                    terms.push((xp * n1 + i, k.prob(x, s, y)));
                }
                for (i, &s) in s2.iter().enumerate() {
                    terms.push((v_off + x * n2 + i, -k.prob(xp, s, y)));
                }
                add_abs_bound(&mut lp, &terms, t);
            }
        }
    }
    let sol = lp.solve(opts)?;
    let u = rows_from_solution(&sol.x, 0, nx, n1)?;
    let v = rows_from_solution(&sol.x, v_off, nx, n2)?;
    let residual = trans_residual(model, &s1, &u, &s2, &v);
    Ok(SymmetryWitness {
        kind: WitnessKind::Trans,
        u_states: s1,
        u,
        v_states: Some(s2),
        v: Some(v),
        residual,
        tol,
        feasible: residual <= tol,
        lp_iterations: sol.iterations,
    })
}

/// Max-norm distance between the two mixture hulls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub distance: f64,
    /// Weights over `model.family(One)`.
    pub witness_q1: SimplexVector,
    /// Weights over `model.family(Two)`.
    pub witness_q2: SimplexVector,
    /// Separation gap under the uniform input: distance / |X|, or 0 when the
    /// hulls meet.
    pub eta: f64,
    pub intersection_empty: bool,
    pub tol: f64,
}

pub fn hull_separation(model: &CavcModel, tol: f64) -> Result<SeparationReport> {
    hull_separation_with(model, tol, &LpOptions::default())
}

pub fn hull_separation_with(model: &CavcModel, tol: f64, opts: &LpOptions) -> Result<SeparationReport> {
    check_tol(tol)?;
    let s1 = model.family(Family::One);
    let s2 = model.family(Family::Two);
    if let Some(pos) = s1.iter().position(|s| s2.contains(s)) {
        let shared = s1[pos];
        let pos2 = s2.iter().position(|&s| s == shared).unwrap_or(0);
        return Ok(SeparationReport {
            distance: 0.0,
            witness_q1: SimplexVector::point_mass(s1.len(), pos),
            witness_q2: SimplexVector::point_mass(s2.len(), pos2),
            eta: 0.0,
            intersection_empty: false,
            tol,
        });
    }
    let (q1, q2, _) = closest_mixtures(model, None, opts)?;
    let distance = mixture_distance(model, &q1, &q2);
    let empty = distance > tol;
    Ok(SeparationReport {
        distance,
        witness_q1: q1,
        witness_q2: q2,
        eta: if empty { distance / model.nx() as f64 } else { 0.0 },
        intersection_empty: empty,
        tol,
    })
}

pub(crate) fn mixture_distance(model: &CavcModel, q1: &SimplexVector, q2: &SimplexVector) -> f64 {
    let w1 = mixture_unchecked(model.kernel(), model.family(Family::One), q1.weights());
    let w2 = mixture_unchecked(model.kernel(), model.family(Family::Two), q2.weights());
    w1.max_distance(&w2)
}

/// Solves min over (q1, q2) of max |W_q1 − W_q2|, optionally with a linear
/// objective `lin` over (q1, q2) under the constraint distance ≤ lin.bound.
/// Returns the weights and the LP iteration count.
pub(crate) fn closest_mixtures(
    model: &CavcModel,
    lin: Option<(&[f64], f64)>,
    opts: &LpOptions,
) -> Result<(SimplexVector, SimplexVector, usize)> {
    let s1 = model.family(Family::One);
    let s2 = model.family(Family::Two);
    let (n1, n2) = (s1.len(), s2.len());
    let t = n1 + n2;
    let mut lp = LinearProgram::new(t + 1);
    match lin {
        None => lp.set_objective(t, 1.0),
        Some((c, bound)) => {
            for (j, &v) in c.iter().enumerate() {
                lp.set_objective(j, v);
            }
            lp.add_row(&[(t, 1.0)], Relation::Le, bound);
        }
    }
    add_simplex_rows(&mut lp, 0, 1, n1);
    add_simplex_rows(&mut lp, n1, 1, n2);
    let k = model.kernel();
    for x in 0..model.nx() {
        for y in 0..model.ny() {
            let mut terms = Vec::with_capacity(t);
            for (i, &s) in s1.iter().enumerate() {
                terms.push((i, k.prob(x, s, y)));
            }
            for (i, &s) in s2.iter().enumerate() {
                terms.push((n1 + i, -k.prob(x, s, y)));
            }
            add_abs_bound(&mut lp, &terms, t);
        }
    }
    let sol = lp.solve(opts)?;
    let q1 = SimplexVector::from_solver(sol.x[..n1].to_vec())?;
    let q2 = SimplexVector::from_solver(sol.x[n1..t].to_vec())?;
    Ok((q1, q2, sol.iterations))
}

/// Positive deterministic capacity per task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TaskVerdicts {
    pub com: bool,
    pub and: bool,
    pub or: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witnesses {
    pub cis1: SymmetryWitness,
    pub cis2: SymmetryWitness,
    pub trans: SymmetryWitness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub cis1: bool,
    pub cis2: bool,
    pub trans: bool,
    pub any_symmetrizable: bool,
    pub intersection_empty: bool,
    pub positive_capacity: TaskVerdicts,
    pub separation: SeparationReport,
    pub witnesses: Witnesses,
    pub tol: f64,
}

pub fn classify(model: &CavcModel, tol: f64) -> Result<ClassificationReport> {
    classify_with(model, tol, &LpOptions::default())
}

pub fn classify_with(model: &CavcModel, tol: f64, opts: &LpOptions) -> Result<ClassificationReport> {
    let cis1 = check_cis_with(model, Family::One, tol, opts)?;
    let cis2 = check_cis_with(model, Family::Two, tol, opts)?;
    let trans = check_trans_with(model, tol, opts)?;
    let separation = hull_separation_with(model, tol, opts)?;
    let any = cis1.feasible || cis2.feasible || trans.feasible;
    let empty = separation.intersection_empty;
    Ok(ClassificationReport {
        cis1: cis1.feasible,
        cis2: cis2.feasible,
        trans: trans.feasible,
        any_symmetrizable: any,
        intersection_empty: empty,
        positive_capacity: TaskVerdicts {
            com: !any,
            and: !any && empty,
            or: !trans.feasible,
        },
        separation,
        witnesses: Witnesses { cis1, cis2, trans },
        tol,
    })
}

/// Which defining equations the grid oracle evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Cis(Family),
    Trans,
}

/// Hard cap on grid evaluations.
pub const GRID_LIMIT: f64 = 1e8;

/// All points of the simplex over `k` coordinates with weights in multiples
/// of 1/steps.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    fn rec(i: usize, left: usize, cur: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            return;
        }
        for c in 0..=left {
            cur[i] = c;
            rec(i + 1, left - c, cur, steps, out);
        }
    }
    rec(0, steps, &mut cur, steps, &mut out);
    out
}

/// Number of grid points: C(steps + k − 1, k − 1).
pub fn simplex_grid_size(k: usize, steps: usize) -> f64 {
    let mut v = 1.0;
    for i in 1..k {
        v = v * (steps + i) as f64 / i as f64;
    }
    v.round()
}

pub(crate) fn grid_steps(resolution: f64) -> Result<usize> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(CavcError::Config(format!("grid resolution must lie in (0, 1], got {resolution}")));
    }
    Ok((1.0 / resolution).round().max(1.0) as usize)
}

/// Result of an exhaustive grid search for a symmetrizing channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOracleResult {
    pub residual: f64,
    pub u: Vec<Vec<f64>>,
    pub v: Option<Vec<Vec<f64>>>,
    pub points: f64,
    /// Worst-case residual change from snapping an optimum onto the grid.
    pub discretization_bound: f64,
}

/// Minimum residual over all grid channels; an upper bound on the LP optimum.
pub fn grid_oracle_symmetrizable(model: &CavcModel, kind: GridKind, resolution: f64) -> Result<GridOracleResult> {
    let steps = grid_steps(resolution)?;
    let nx = model.nx();
    let (u_states, v_states) = match kind {
        GridKind::Cis(k) => (model.family(k).to_vec(), None),
        GridKind::Trans => (
            model.family(Family::One).to_vec(),
            Some(model.family(Family::Two).to_vec()),
        ),
    };
    let gu = simplex_grid_size(u_states.len(), steps);
    let gv = v_states.as_ref().map_or(1.0, |v| simplex_grid_size(v.len(), steps));
    let points = gu.powi(nx as i32) * gv.powi(nx as i32);
    if points > GRID_LIMIT {
        return Err(CavcError::BudgetExceeded {
            needed: points,
            budget: GRID_LIMIT,
            what: "symmetrizability grid".into(),
        });
    }
    let u_grid = simplex_grid(u_states.len(), steps);
    let v_grid = v_states.as_ref().map(|v| simplex_grid(v.len(), steps));
    let k = model.kernel();
    let ny = k.ny();
    // mix[g][a][b*ny + y] = Σ_s grid_g(s) W(y|b,s): attack row `g` placed on symbol a is independent of a.
    let precompute = |grid: &[Vec<f64>], states: &[usize]| -> Vec<Vec<f64>> {
        grid.iter()
            .map(|g| {
                let mut out = vec![0.0; nx * ny];
                for b in 0..nx {
                    for (w, &s) in g.iter().zip(states) {
                        for y in 0..ny {
                            out[b * ny + y] += w * k.prob(b, s, y);
                        }
                    }
                }
                out
            })
            .collect()
    };
    let mu = precompute(&u_grid, &u_states);
    let mv = match (&v_grid, &v_states) {
        (Some(g), Some(s)) => Some(precompute(g, s)),
        _ => None,
    };
    let total_u = u_grid.len().pow(nx as u32);
    let total_v = v_grid.as_ref().map_or(1, |g| g.len().pow(nx as u32));
    let decode = |mut idx: usize, base: usize| -> Vec<usize> {
        let mut out = vec![0; nx];
        for o in out.iter_mut().rev() {
            *o = idx % base;
            idx /= base;
        }
        out
    };
    let mut best = f64::INFINITY;
    let mut best_u = Vec::new();
    let mut best_v = Vec::new();
    for iu in 0..total_u {
        let cu = decode(iu, u_grid.len());
        if mv.is_none() {
            let mut worst: f64 = 0.0;
            'pairs: for x in 0..nx {
                for xp in x + 1..nx {
                    for y in 0..ny {
                        let d = (mu[cu[xp]][x * ny + y] - mu[cu[x]][xp * ny + y]).abs();
                        worst = worst.max(d);
                        if worst >= best {
                            break 'pairs;
                        }
                    }
                }
            }
            if worst < best {
                best = worst;
                best_u = cu;
            }
            continue;
        }
        let mv = mv.as_ref().unwrap();
        for iv in 0..total_v {
            let cv = decode(iv, v_grid.as_ref().unwrap().len());
            let mut worst: f64 = 0.0;
            'all: for x in 0..nx {
                for xp in 0..nx {
                    for y in 0..ny {
                        let d = (mu[cu[xp]][x * ny + y] - mv[cv[x]][xp * ny + y]).abs();
                        worst = worst.max(d);
                        if worst >= best {
                            break 'all;
                        }
                    }
                }
            }
            if worst < best {
                best = worst;
                best_u = cu.clone();
                best_v = cv;
            }
        }
    }
    let kmax = u_states.len().max(v_states.as_ref().map_or(0, |v| v.len()));
    Ok(GridOracleResult {
        residual: best,
        u: best_u.iter().map(|&g| u_grid[g].clone()).collect(),
        v: v_grid.map(|g| best_v.iter().map(|&i| g[i].clone()).collect()),
        points,
        discretization_bound: 2.0 * kmax as f64 / steps as f64,
    })
}
