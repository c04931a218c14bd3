//! Dense two-phase simplex.
//!
//! Entering columns follow Bland's smallest-index rule. Among rows tied in the
//! ratio test the largest pivot wins, then the smallest basic index; the
//! tableau is rebuilt from the original rows every few dozen pivots.
//!
//! Problems here are tiny (tens of variables, a few hundred rows), so a dense
//! tableau is simpler and plenty fast.

use crate::error::{CavcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Reduced-cost and pivot-element threshold.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol: 1e-9,
            max_iterations: 100_000,
        }
    }
}

/// minimize cᵀx subject to the rows, x ≥ 0.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        LinearProgram {
            vars,
            objective: vec![0.0; vars],
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn set_objective(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    /// Adds Σ coef·x_j (rel) rhs from sparse (index, coefficient) terms.
    pub fn add_row(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut row = vec![0.0; self.vars];
        for &(j, c) in terms {
            row[j] += c;
        }
        self.rows.push((row, rel, rhs));
    }

    pub fn solve(&self, opts: &LpOptions) -> Result<LpSolution> {
        Tableau::build(self).run(self, opts)
    }
}

struct Tableau {
    m: usize,
    structural: usize,
    artificial_start: usize,
    width: usize,
    cells: Vec<f64>,
    original: Vec<f64>,
    costs: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
    iterations: usize,
    trace: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.vars;
        let slacks = lp.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let artificial_start = n + slacks;
        let width = artificial_start + m + 1;
        let mut cells = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut slack = n;
        for (i, (coef, rel, rhs)) in lp.rows.iter().enumerate() {
            let row = &mut cells[i * width..(i + 1) * width];
            row[..n].copy_from_slice(coef);
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[width - 1] = *rhs;
            if *rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row[artificial_start + i] = 1.0;
            basis[i] = artificial_start + i;
        }
        Tableau {
            m,
            structural: n,
            artificial_start,
            width,
            original: cells.clone(),
            cells,
            costs: Vec::new(),
            obj: vec![0.0; width],
            basis,
            active: vec![true; m],
            iterations: 0,
            trace: Vec::new(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for v in &mut self.cells[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.cells[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r || !self.active[i] {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                for (v, &pv) in self.cells[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.cells[i * w + c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, &pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Sets the reduced-cost row for costs `c` (indexed by column).
    fn price(&mut self, c: &[f64]) {
        self.costs = c.to_vec();
        self.obj = vec![0.0; self.width];
        self.obj[..c.len()].copy_from_slice(c);
        for i in 0..self.m {
            if !self.active[i] {
                continue;
            }
            let cb = c.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..self.width {
                    self.obj[j] -= cb * self.at(i, j);
                }
            }
        }
    }

    /// Recomputes B⁻¹A from the original rows to shed accumulated round-off.
    fn refactor(&mut self) -> Result<()> {
        let w = self.width;
        let rows: Vec<usize> = (0..self.m).filter(|&i| self.active[i]).collect();
        let k = rows.len();
        // Augmented system [B | A] restricted to active rows.
        let mut b: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| rows.iter().map(|&r| self.original[i * w + self.basis[r]]).collect())
            .collect();
        let mut a: Vec<Vec<f64>> = rows.iter().map(|&i| self.original[i * w..(i + 1) * w].to_vec()).collect();
        for col in 0..k {
            let p = (col..k)
                .max_by(|&x, &y| b[x][col].abs().total_cmp(&b[y][col].abs()))
                .unwrap_or(col);
            if b[p][col].abs() < 1e-13 {
                return Err(self.failure("basis became singular"));
            }
            b.swap(col, p);
            a.swap(col, p);
            let d = b[col][col];
            b[col].iter_mut().for_each(|v| *v /= d);
            a[col].iter_mut().for_each(|v| *v /= d);
            for r in 0..k {
                if r == col {
                    continue;
                }
                let f = b[r][col];
                if f != 0.0 {
                    let (pb, pa) = (b[col].clone(), a[col].clone());
                    b[r].iter_mut().zip(&pb).for_each(|(v, x)| *v -= f * x);
                    a[r].iter_mut().zip(&pa).for_each(|(v, x)| *v -= f * x);
                }
            }
        }
        // Row `col` of the solution belongs to the basic variable of rows[col].
        for (col, &i) in rows.iter().enumerate() {
            self.cells[i * w..(i + 1) * w].copy_from_slice(&a[col]);
            let bc = self.basis[i];
            for r in &rows {
                self.cells[r * w + bc] = if *r == i { 1.0 } else { 0.0 };
            }
        }
        let costs = std::mem::take(&mut self.costs);
        self.price(&costs);
        Ok(())
    }

    fn iterate(&mut self, columns: usize, opts: &LpOptions) -> Result<()> {
        let mut since_refactor = 0;
        let mut verified = false;
        loop {
            if since_refactor >= 32 {
                self.refactor()?;
                since_refactor = 0;
            }
            if self.iterations >= opts.max_iterations {
                return Err(self.failure("iteration limit reached"));
            }
            let Some(enter) = (0..columns).find(|&j| self.obj[j] < -opts.tol) else {
                if verified || since_refactor == 0 {
                    return Ok(());
                }
                self.refactor()?;
                since_refactor = 0;
                verified = true;
                continue;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let a = self.at(i, enter);
                if a > opts.tol {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            let prev = self.at(r, enter);
                            let better_tie = a > prev * (1.0 + 1e-9) || a >= prev / (1.0 + 1e-9) && self.basis[i] < self.basis[r];
                            if ratio < best && !tie || tie && better_tie {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                if since_refactor > 0 {
                    self.refactor()?;
                    since_refactor = 0;
                    continue;
                }
                return Err(self.failure("objective unbounded below"));
            };
            self.pivot(r, enter);
            self.iterations += 1;
            since_refactor += 1;
            verified = false;
            if self.trace.len() == 8 {
                self.trace.remove(0);
            }
            self.trace.push(-self.obj[self.width - 1]);
        }
    }

    fn failure(&self, what: &str) -> CavcError {
        let tail: Vec<String> = self.trace.iter().map(|v| format!("{v:.3e}")).collect();
        CavcError::NonConvergence {
            iterations: self.iterations,
            detail: format!("simplex: {what}; recent objectives [{}]", tail.join(", ")),
        }
    }

    fn run(mut self, lp: &LinearProgram, opts: &LpOptions) -> Result<LpSolution> {
        let total = self.artificial_start + self.m;
        let mut phase_one = vec![0.0; total];
        phase_one[self.artificial_start..].iter_mut().for_each(|c| *c = 1.0);
        self.price(&phase_one);
        self.iterate(self.artificial_start, opts)?;
        let infeasibility = -self.obj[self.width - 1];
        let scale = 1.0 + lp.rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeasibility > 1e-7 * scale {
            return Err(self.failure(&format!("constraints infeasible (phase one residual {infeasibility:.3e})")));
        }
        for i in 0..self.m {
            if self.basis[i] < self.artificial_start {
                continue;
            }
            let swap = (0..self.artificial_start).find(|&j| self.at(i, j).abs() > 1e-9);
            match swap {
                Some(j) => self.pivot(i, j),
                None => self.active[i] = false,
            }
        }
        let mut costs = vec![0.0; self.artificial_start];
        costs[..self.structural].copy_from_slice(&lp.objective);
        self.price(&costs);
        self.iterate(self.artificial_start, opts)?;
        let mut x = vec![0.0; self.structural];
        for i in 0..self.m {
            if self.active[i] && self.basis[i] < self.structural {
                x[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations: self.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, -3.0);
        lp.set_objective(1, -5.0);
        lp.add_row(&[(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(&[(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(&[(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let s = lp.solve(&LpOptions::default()).unwrap();
        assert_abs_diff_eq!(s.objective, -36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y, x + y = 1, x >= 0.25, y - x >= -0.5
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.set_objective(1, 1.0);
        lp.add_row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(&[(0, 1.0)], Relation::Ge, 0.25);
        lp.add_row(&[(1, 1.0), (0, -1.0)], Relation::Ge, -0.5);
        let s = lp.solve(&LpOptions::default()).unwrap();
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-9);
        assert!(s.x[0] >= 0.25 - 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(&[(0, 1.0)], Relation::Ge, 2.0);
        lp.add_row(&[(0, 1.0)], Relation::Le, 1.0);
        let err = lp.solve(&LpOptions::default()).unwrap_err();
        assert!(matches!(err, CavcError::NonConvergence { .. }));
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, -1.0);
        assert!(lp.solve(&LpOptions::default()).is_err());
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 1.0);
        lp.add_row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_row(&[(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let s = lp.solve(&LpOptions::default()).unwrap();
        assert_abs_diff_eq!(s.objective, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example under the largest-coefficient rule.
        let mut lp = LinearProgram::new(4);
        for (j, c) in [-0.75, 150.0, -0.02, 6.0].into_iter().enumerate() {
            lp.set_objective(j, c);
        }
        lp.add_row(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add_row(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add_row(&[(2, 1.0)], Relation::Le, 1.0);
        let s = lp.solve(&LpOptions::default()).unwrap();
        assert_abs_diff_eq!(s.objective, -0.05, epsilon = 1e-9);
    }
}
