//! Finite alphabets, distributions, state-dependent kernels and CAVC models.

use crate::error::{CavcError, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Tolerance on row sums when a kernel or distribution is constructed.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(CavcError::ModelMismatch("alphabet must be nonempty".into()));
        }
        Ok(Alphabet { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(CavcError::ModelMismatch("alphabet must be nonempty".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(CavcError::ModelMismatch(format!("duplicate label {a:?}")));
            }
        }
        Ok(Alphabet {
            size: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => i.to_string(),
        }
    }
}

/// Which of the two compound states (and hence state families) is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "sigma1")]
    One,
    #[serde(rename = "sigma2")]
    Two,
}

impl Family {
    pub const BOTH: [Family; 2] = [Family::One, Family::Two];

    pub fn other(self) -> Family {
        match self {
            Family::One => Family::Two,
            Family::Two => Family::One,
        }
    }

    /// 0 for σ₁, 1 for σ₂.
    pub fn index(self) -> usize {
        match self {
            Family::One => 0,
            Family::Two => 1,
        }
    }

    pub fn from_number(k: u8) -> Result<Family> {
        match k {
            1 => Ok(Family::One),
            2 => Ok(Family::Two),
            other => Err(CavcError::Config(format!("family must be 1 or 2, got {other}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::One => write!(f, "sigma1"),
            Family::Two => write!(f, "sigma2"),
        }
    }
}

/// A probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexVector {
    weights: Vec<f64>,
}

impl SimplexVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(weights, STOCHASTIC_TOL)
    }

    /// Like [`SimplexVector::new`] but accepts a looser row-sum tolerance, for
    /// vectors produced by iterative solvers.
    pub fn with_tolerance(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(CavcError::InvalidDistribution("empty support".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(CavcError::InvalidDistribution(format!("entry {w} is negative or not finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(CavcError::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(SimplexVector { weights })
    }

    /// Clips tiny negative round-off and renormalizes. Used on solver output only.
    pub fn from_solver(mut weights: Vec<f64>) -> Result<Self> {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(CavcError::InvalidDistribution("solver returned a zero vector".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(SimplexVector { weights })
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        SimplexVector {
            weights: vec![1.0 / len as f64; len],
        }
    }

    pub fn point_mass(len: usize, at: usize) -> Self {
        assert!(at < len);
        let mut weights = vec![0.0; len];
        weights[at] = 1.0;
        SimplexVector { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Draw an index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights, rng)
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// A single-letter channel W(y|x), row-major in x.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmc {
    inputs: usize,
    outputs: usize,
    probs: Vec<f64>,
}

impl Dmc {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let inputs = rows.len();
        if inputs == 0 {
            return Err(CavcError::ModelMismatch("channel has no inputs".into()));
        }
        let outputs = rows[0].len();
        let mut probs = Vec::with_capacity(inputs * outputs);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != outputs {
                return Err(CavcError::LengthMismatch {
                    expected: outputs,
                    got: row.len(),
                });
            }
            check_row(row, x, 0)?;
            probs.extend_from_slice(row);
        }
        Ok(Dmc {
            inputs,
            outputs,
            probs,
        })
    }

    pub(crate) fn from_flat_unchecked(inputs: usize, outputs: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), inputs * outputs);
        Dmc {
            inputs,
            outputs,
            probs,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.outputs + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.outputs..(x + 1) * self.outputs]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Max-norm distance between two channels of equal shape.
    pub fn max_distance(&self, other: &Dmc) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_row(row: &[f64], x: usize, s: usize) -> Result<()> {
    for (y, &p) in row.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(CavcError::EntryOutOfRange { x, s, y, value: p });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(CavcError::NotStochastic { x, s, sum });
    }
    Ok(())
}

/// W(y|x,s) over finite input, state and output alphabets.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelKernel {
    input: Alphabet,
    state: Alphabet,
    output: Alphabet,
    probs: Vec<f64>,
}

impl ChannelKernel {
    /// `table[x][s][y]`; rows must be stochastic within 1e-12. Rows are not
    /// renormalized.
    pub fn new(
        input: Alphabet,
        state: Alphabet,
        output: Alphabet,
        table: &[Vec<Vec<f64>>],
    ) -> Result<Self> {
        let (nx, ns, ny) = (input.size(), state.size(), output.size());
        if table.len() != nx {
            return Err(CavcError::LengthMismatch {
                expected: nx,
                got: table.len(),
            });
        }
        let mut probs = Vec::with_capacity(nx * ns * ny);
        for (x, per_state) in table.iter().enumerate() {
            if per_state.len() != ns {
                return Err(CavcError::LengthMismatch {
                    expected: ns,
                    got: per_state.len(),
                });
            }
            for (s, row) in per_state.iter().enumerate() {
                if row.len() != ny {
                    return Err(CavcError::LengthMismatch {
                        expected: ny,
                        got: row.len(),
                    });
                }
                check_row(row, x, s)?;
                probs.extend_from_slice(row);
            }
        }
        Ok(ChannelKernel {
            input,
            state,
            output,
            probs,
        })
    }

    /// Convenience constructor with unlabeled alphabets.
    pub fn from_table(table: &[Vec<Vec<f64>>]) -> Result<Self> {
        let nx = table.len();
        let ns = table.first().map_or(0, |t| t.len());
        let ny = table.first().and_then(|t| t.first()).map_or(0, |r| r.len());
        ChannelKernel::new(Alphabet::new(nx)?, Alphabet::new(ns)?, Alphabet::new(ny)?, table)
    }

    /// Builds W(y|x,s) from a function of (x, s, y).
    pub fn from_fn(nx: usize, ns: usize, ny: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let table: Vec<Vec<Vec<f64>>> = (0..nx)
            .map(|x| (0..ns).map(|s| (0..ny).map(|y| f(x, s, y)).collect()).collect())
            .collect();
        ChannelKernel::from_table(&table)
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn state(&self) -> &Alphabet {
        &self.state
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    pub fn nx(&self) -> usize {
        self.input.size()
    }

    pub fn ns(&self) -> usize {
        self.state.size()
    }

    pub fn ny(&self) -> usize {
        self.output.size()
    }

    #[inline]
    pub fn prob(&self, x: usize, s: usize, y: usize) -> f64 {
        self.probs[(x * self.ns() + s) * self.ny() + y]
    }

    pub fn row(&self, x: usize, s: usize) -> &[f64] {
        let ny = self.ny();
        let start = (x * self.ns() + s) * ny;
        &self.probs[start..start + ny]
    }

    /// The table as nested `[x][s][y]` vectors.
    pub fn to_table(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.nx())
            .map(|x| (0..self.ns()).map(|s| self.row(x, s).to_vec()).collect())
            .collect()
    }

    /// Single-state channel W(·|·, s).
    pub fn state_channel(&self, s: usize) -> Dmc {
        let ny = self.ny();
        let mut probs = Vec::with_capacity(self.nx() * ny);
        for x in 0..self.nx() {
            probs.extend_from_slice(self.row(x, s));
        }
        Dmc::from_flat_unchecked(self.nx(), ny, probs)
    }
}

/// W_q(y|x) = Σ_s q(s) W(y|x,s), where `q[i]` weights state `states[i]`.
pub fn mixture_channel(kernel: &ChannelKernel, states: &[usize], q: &SimplexVector) -> Result<Dmc> {
    if states.len() != q.len() {
        return Err(CavcError::ModelMismatch(format!(
            "{} mixture weights for {} states",
            q.len(),
            states.len()
        )));
    }
    if let Some(&s) = states.iter().find(|&&s| s >= kernel.ns()) {
        return Err(CavcError::ModelMismatch(format!(
            "state {s} outside state alphabet of size {}",
            kernel.ns()
        )));
    }
    Ok(mixture_unchecked(kernel, states, q.weights()))
}

pub(crate) fn mixture_unchecked(kernel: &ChannelKernel, states: &[usize], q: &[f64]) -> Dmc {
    let (nx, ny) = (kernel.nx(), kernel.ny());
    let mut probs = vec![0.0; nx * ny];
    for x in 0..nx {
        for (&s, &w) in states.iter().zip(q) {
            if w == 0.0 {
                continue;
            }
            for (acc, &p) in probs[x * ny..(x + 1) * ny].iter_mut().zip(kernel.row(x, s)) {
                *acc += w * p;
            }
        }
    }
    Dmc::from_flat_unchecked(nx, ny, probs)
}

/// Draws y_i ~ W(·|x_i, s_i) independently; reproducible for a given seed.
pub fn channel_sample(kernel: &ChannelKernel, x: &[usize], s: &[usize], seed: u64) -> Result<Vec<usize>> {
    let mut rng = rng_from_seed(seed);
    channel_sample_with(kernel, x, s, &mut rng)
}

pub fn channel_sample_with<R: Rng + ?Sized>(
    kernel: &ChannelKernel,
    x: &[usize],
    s: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if x.len() != s.len() {
        return Err(CavcError::LengthMismatch {
            expected: x.len(),
            got: s.len(),
        });
    }
    let mut y = Vec::with_capacity(x.len());
    for (&xi, &si) in x.iter().zip(s) {
        if xi >= kernel.nx() {
            return Err(CavcError::SymbolOutOfRange {
                symbol: xi,
                size: kernel.nx(),
            });
        }
        if si >= kernel.ns() {
            return Err(CavcError::SymbolOutOfRange {
                symbol: si,
                size: kernel.ns(),
            });
        }
        y.push(sample_index(kernel.row(xi, si), rng));
    }
    Ok(y)
}

/// A compound arbitrarily varying channel: one kernel, two (possibly
/// overlapping) state families.
#[derive(Debug, Clone, PartialEq)]
pub struct CavcModel {
    kernel: ChannelKernel,
    family_one: Vec<usize>,
    family_two: Vec<usize>,
}

impl CavcModel {
    pub fn new(kernel: ChannelKernel, family_one: Vec<usize>, family_two: Vec<usize>) -> Result<Self> {
        let ns = kernel.ns();
        for (name, fam) in [("family one", &family_one), ("family two", &family_two)] {
            if fam.is_empty() {
                return Err(CavcError::ModelMismatch(format!("{name} is empty")));
            }
            for (i, &s) in fam.iter().enumerate() {
                if s >= ns {
                    return Err(CavcError::ModelMismatch(format!("{name} names state {s} >= {ns}")));
                }
                if fam[..i].contains(&s) {
                    return Err(CavcError::ModelMismatch(format!("{name} repeats state {s}")));
                }
            }
        }
        if let Some(s) = (0..ns).find(|s| !family_one.contains(s) && !family_two.contains(s)) {
            return Err(CavcError::ModelMismatch(format!("state {s} belongs to neither family")));
        }
        Ok(CavcModel {
            kernel,
            family_one,
            family_two,
        })
    }

    /// The AVC special case S₁ = S₂ = all states.
    pub fn avc(kernel: ChannelKernel) -> Result<Self> {
        let all: Vec<usize> = (0..kernel.ns()).collect();
        CavcModel::new(kernel, all.clone(), all)
    }

    pub fn kernel(&self) -> &ChannelKernel {
        &self.kernel
    }

    pub fn family(&self, k: Family) -> &[usize] {
        match k {
            Family::One => &self.family_one,
            Family::Two => &self.family_two,
        }
    }

    /// States of S₁ ∪ S₂ in index order.
    pub fn union_states(&self) -> Vec<usize> {
        (0..self.kernel.ns())
            .filter(|s| self.family_one.contains(s) || self.family_two.contains(s))
            .collect()
    }

    pub fn families_share_state(&self) -> bool {
        self.family_one.iter().any(|s| self.family_two.contains(s))
    }

    pub fn nx(&self) -> usize {
        self.kernel.nx()
    }

    pub fn ny(&self) -> usize {
        self.kernel.ny()
    }

    /// Mixture over family `k` with weights indexed like `self.family(k)`.
    pub fn family_mixture(&self, k: Family, q: &SimplexVector) -> Result<Dmc> {
        mixture_channel(&self.kernel, self.family(k), q)
    }

    /// Same model with inputs and outputs relabeled by the given permutations
    /// (`new index = perm[old index]`).
    pub fn relabeled(&self, input_perm: &[usize], output_perm: &[usize]) -> Result<Self> {
        let k = &self.kernel;
        let mut table = vec![vec![vec![0.0; k.ny()]; k.ns()]; k.nx()];
        for x in 0..k.nx() {
            for s in 0..k.ns() {
                for y in 0..k.ny() {
                    table[input_perm[x]][s][output_perm[y]] = k.prob(x, s, y);
                }
            }
        }
        CavcModel::new(
            ChannelKernel::from_table(&table)?,
            self.family_one.clone(),
            self.family_two.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = ChannelKernel::from_table(&[vec![vec![0.5, 0.4]]]).unwrap_err();
        assert!(matches!(err, CavcError::NotStochastic { x: 0, s: 0, .. }));
        let err = ChannelKernel::from_table(&[vec![vec![1.5, -0.5]]]).unwrap_err();
        assert!(matches!(err, CavcError::EntryOutOfRange { .. }));
    }

    #[test]
    fn alphabet_labels_must_be_distinct() {
        assert!(Alphabet::with_labels(vec!["a".into(), "a".into()]).is_err());
        assert!(Alphabet::new(0).is_err());
        assert_eq!(Alphabet::with_labels(vec!["a".into(), "b".into()]).unwrap().size(), 2);
    }

    #[test]
    fn model_families_must_cover_states() {
        let k = catalog::adder_kernel();
        assert!(CavcModel::new(k.clone(), vec![0], vec![0]).is_err());
        assert!(CavcModel::new(k.clone(), vec![], vec![0, 1]).is_err());
        assert!(CavcModel::new(k, vec![0], vec![1]).is_ok());
    }

    #[test]
    fn point_mass_mixture_is_the_state_channel() {
        let k = catalog::adder_kernel();
        let w = mixture_channel(&k, &[0, 1], &SimplexVector::point_mass(2, 1)).unwrap();
        assert_eq!(w, k.state_channel(1));
    }

    #[test]
    fn adder_half_mixture() {
        let k = catalog::adder_kernel();
        let w = mixture_channel(&k, &[0, 1], &SimplexVector::uniform(2)).unwrap();
        assert_eq!(w.row(0), &[0.5, 0.5, 0.0]);
        assert_eq!(w.row(1), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn bsc_mixture_averages_crossovers() {
        let m = catalog::bsc_family_model(&[0.1, 0.3], &[0.2]);
        let w = m.family_mixture(Family::One, &SimplexVector::uniform(2)).unwrap();
        assert_abs_diff_eq!(w.prob(0, 1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(w.prob(1, 0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(w.prob(0, 0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn out_of_range_mixture_state_is_a_model_mismatch() {
        let k = catalog::adder_kernel();
        let err = mixture_channel(&k, &[0, 5], &SimplexVector::uniform(2)).unwrap_err();
        assert!(matches!(err, CavcError::ModelMismatch(_)));
    }

    #[test]
    fn deterministic_adder_samples() {
        let k = catalog::adder_kernel();
        for seed in 0..5 {
            assert_eq!(channel_sample(&k, &[0, 1], &[1, 1], seed).unwrap(), vec![1, 2]);
        }
        assert!(channel_sample(&k, &[0, 1], &[1], 0).is_err());
    }

    #[test]
    fn noiseless_state_copies_input() {
        let m = catalog::bsc_family_model(&[0.0], &[0.5]);
        let x: Vec<usize> = (0..200).map(|i| (i * 7 + 3) % 2).collect();
        let y = channel_sample(m.kernel(), &x, &vec![0; x.len()], 99).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn bsc_flip_fraction_concentrates() {
        let m = catalog::bsc_family_model(&[0.2], &[0.2]);
        let n = 100_000;
        let x = vec![0usize; n];
        let y = channel_sample(m.kernel(), &x, &vec![0; n], 2024).unwrap();
        let flips = y.iter().filter(|&&b| b == 1).count() as f64 / n as f64;
        assert!((flips - 0.2).abs() < 0.01, "flip fraction {flips}");
    }

    #[test]
    fn sampled_conditionals_match_kernel_rows() {
        let k = catalog::random_kernel(3, 2, 4, 5);
        let n = 100_000;
        let mut rng = rng_from_seed(17);
        let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let y = channel_sample(&k, &x, &s, 18).unwrap();
        let mut counts = vec![[0usize; 4]; 6];
        let mut totals = vec![0usize; 6];
        for i in 0..n {
            counts[x[i] * 2 + s[i]][y[i]] += 1;
            totals[x[i] * 2 + s[i]] += 1;
        }
        let bound = 5.0 * (1.0 / n as f64).sqrt();
        for cell in 0..6 {
            for yy in 0..4 {
                let emp = counts[cell][yy] as f64 / totals[cell] as f64;
                let dev = (emp - k.prob(cell / 2, cell % 2, yy)).abs();
                // per-row sample size is ~n/6, so compare against the n-based bound scaled accordingly
                assert!(dev <= bound * 6f64.sqrt(), "cell {cell} y {yy}: {dev}");
            }
        }
    }

    proptest! {
        #[test]
        fn mixtures_are_row_stochastic(seed in 0u64..1000, nx in 1usize..4, ns in 1usize..4, ny in 1usize..5) {
            let k = catalog::random_kernel(nx, ns, ny, seed);
            let mut rng = rng_from_seed(seed ^ 0xABCD);
            let raw: Vec<f64> = (0..ns).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            let q = SimplexVector::with_tolerance(raw.iter().map(|w| w / total).collect(), 1e-12).unwrap();
            let states: Vec<usize> = (0..ns).collect();
            let w = mixture_channel(&k, &states, &q).unwrap();
            for x in 0..nx {
                let sum: f64 = w.row(x).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }
}
