//! Entropies, mutual information, divergence and empirical joint types.
//!
//! All logarithms are base 2.

use crate::channel::{Dmc, SimplexVector};
use crate::error::{CavcError, Result};
use crate::ext::ExtReal;

#[inline]
pub(crate) fn plog(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&v| plog(v)).sum()
}

pub fn binary_entropy(p: f64) -> f64 {
    plog(p) + plog(1.0 - p)
}

fn check_dims(p_x: &SimplexVector, w: &Dmc) -> Result<()> {
    if p_x.len() != w.inputs() {
        return Err(CavcError::LengthMismatch {
            expected: w.inputs(),
            got: p_x.len(),
        });
    }
    Ok(())
}

/// I(X;Y) for input law `p_x` through `w`, computed as H(Y) − H(Y|X).
pub fn mutual_information(p_x: &SimplexVector, w: &Dmc) -> Result<f64> {
    check_dims(p_x, w)?;
    Ok(mi_raw(p_x.weights(), w.as_flat(), w.outputs()))
}

/// I(X;Y) computed as H(X) − H(X|Y); a second path for cross-checking.
pub fn mutual_information_via_input(p_x: &SimplexVector, w: &Dmc) -> Result<f64> {
    check_dims(p_x, w)?;
    let (nx, ny) = (w.inputs(), w.outputs());
    let mut h_x_given_y = 0.0;
    for y in 0..ny {
        let py: f64 = (0..nx).map(|x| p_x[x] * w.prob(x, y)).sum();
        if py <= 0.0 {
            continue;
        }
        for x in 0..nx {
            let joint = p_x[x] * w.prob(x, y);
            if joint > 0.0 {
                h_x_given_y -= joint * (joint / py).log2();
            }
        }
    }
    Ok((entropy(p_x.weights()) - h_x_given_y).max(0.0))
}

/// Flat-slice I(X;Y) = Σ p(x)W(y|x) log(W(y|x)/P_Y(y)); clamped at zero.
pub(crate) fn mi_raw(p: &[f64], w: &[f64], ny: usize) -> f64 {
    let mut py = vec![0.0; ny];
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (acc, &v) in py.iter_mut().zip(&w[x * ny..(x + 1) * ny]) {
            *acc += px * v;
        }
    }
    let mut total = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &v) in w[x * ny..(x + 1) * ny].iter().enumerate() {
            if v > 0.0 {
                total += px * v * (v / py[y]).log2();
            }
        }
    }
    total.max(0.0)
}

/// D(p‖q) in bits; infinite when p charges a point q does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<ExtReal> {
    if p.len() != q.len() {
        return Err(CavcError::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(ExtReal::Infinite);
            }
            d += a * (a / b).log2();
        }
    }
    Ok(ExtReal::Finite(d.max(0.0)))
}

/// Empirical joint distribution of r aligned sequences, stored as counts in
/// row-major order over the axis alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointType {
    sizes: Vec<usize>,
    counts: Vec<u64>,
    len: usize,
}

pub fn joint_type(sequences: &[&[usize]], sizes: &[usize]) -> Result<JointType> {
    if sequences.len() != sizes.len() {
        return Err(CavcError::LengthMismatch {
            expected: sizes.len(),
            got: sequences.len(),
        });
    }
    let n = sequences.first().map_or(0, |s| s.len());
    if sequences.is_empty() || n == 0 {
        return Err(CavcError::InvalidDistribution("joint type of empty sequences".into()));
    }
    for seq in sequences {
        if seq.len() != n {
            return Err(CavcError::LengthMismatch {
                expected: n,
                got: seq.len(),
            });
        }
    }
    let mut t = JointType::zero(sizes.to_vec());
    for i in 0..n {
        let mut cell = 0;
        for (seq, &size) in sequences.iter().zip(sizes) {
            let a = seq[i];
            if a >= size {
                return Err(CavcError::SymbolOutOfRange { symbol: a, size });
            }
            cell = cell * size + a;
        }
        t.counts[cell] += 1;
    }
    t.len = n;
    Ok(t)
}

impl JointType {
    fn zero(sizes: Vec<usize>) -> Self {
        let cells = sizes.iter().product();
        JointType {
            sizes,
            counts: vec![0; cells],
            len: 0,
        }
    }

    /// Builds a type from explicit counts.
    pub fn from_counts(sizes: Vec<usize>, counts: Vec<u64>) -> Result<Self> {
        let cells: usize = sizes.iter().product();
        if counts.len() != cells {
            return Err(CavcError::LengthMismatch {
                expected: cells,
                got: counts.len(),
            });
        }
        let len = counts.iter().sum::<u64>() as usize;
        if len == 0 {
            return Err(CavcError::InvalidDistribution("type with no samples".into()));
        }
        Ok(JointType { sizes, counts, len })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, cell: &[usize]) -> u64 {
        self.counts[self.flat_index(cell)]
    }

    pub fn flat_index(&self, cell: &[usize]) -> usize {
        cell.iter().zip(&self.sizes).fold(0, |acc, (&a, &s)| acc * s + a)
    }

    /// Normalized counts.
    pub fn probs(&self) -> Vec<f64> {
        let n = self.len as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Marginal onto `axes`, in the given order.
    pub fn marginal(&self, axes: &[usize]) -> Result<JointType> {
        check_axes(&self.sizes, &[axes])?;
        let sizes: Vec<usize> = axes.iter().map(|&a| self.sizes[a]).collect();
        let mut out = JointType::zero(sizes);
        out.len = self.len;
        let mut cell = vec![0usize; self.sizes.len()];
        for &c in &self.counts {
            if c > 0 {
                let idx = axes.iter().fold(0, |acc, &a| acc * self.sizes[a] + cell[a]);
                out.counts[idx] += c;
            }
            advance(&mut cell, &self.sizes);
        }
        Ok(out)
    }

    /// Entropy of the marginal on `axes` (0 for the empty set).
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy(&self.marginal(axes)?.probs()))
    }
}

fn advance(cell: &mut [usize], sizes: &[usize]) {
    for i in (0..cell.len()).rev() {
        cell[i] += 1;
        if cell[i] < sizes[i] {
            return;
        }
        cell[i] = 0;
    }
}

fn check_axes(sizes: &[usize], groups: &[&[usize]]) -> Result<()> {
    let mut seen = vec![false; sizes.len()];
    for g in groups {
        for &a in *g {
            if a >= sizes.len() {
                return Err(CavcError::SymbolOutOfRange {
                    symbol: a,
                    size: sizes.len(),
                });
            }
            if seen[a] {
                return Err(CavcError::OverlappingAxes(a));
            }
            seen[a] = true;
        }
    }
    Ok(())
}

/// I(A;B|C) = H(AC) + H(BC) − H(ABC) − H(C) from the normalized type.
pub fn conditional_mutual_information(t: &JointType, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    check_axes(t.sizes(), &[a, b, c])?;
    let cat = |parts: &[&[usize]]| -> Vec<usize> { parts.iter().flat_map(|p| p.iter().copied()).collect() };
    let h_ac = t.entropy_of(&cat(&[a, c]))?;
    let h_bc = t.entropy_of(&cat(&[b, c]))?;
    let h_abc = t.entropy_of(&cat(&[a, b, c]))?;
    let h_c = t.entropy_of(c)?;
    Ok((h_ac + h_bc - h_abc - h_c).max(0.0))
}

/// Outer product of marginals, flattened row-major.
pub fn product_distribution(marginals: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for m in marginals {
        out = out.iter().flat_map(|&a| m.iter().map(move |&b| a * b)).collect();
    }
    out
}

/// Entrywise ε-typicality: every cell of the normalized type is within `eps`
/// of `target`.
pub fn is_typical(t: &JointType, target: &[f64], eps: f64) -> Result<bool> {
    if target.len() != t.counts.len() {
        return Err(CavcError::LengthMismatch {
            expected: t.counts.len(),
            got: target.len(),
        });
    }
    if !(eps >= 0.0) {
        return Err(CavcError::Config(format!("typicality slack must be nonnegative, got {eps}")));
    }
    Ok(max_deviation(&t.probs(), target) <= eps)
}

pub(crate) fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn bsc(p: f64) -> Dmc {
        Dmc::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]]).unwrap()
    }

    #[test]
    fn mutual_information_examples() {
        let u = SimplexVector::uniform(2);
        assert_abs_diff_eq!(mutual_information(&u, &bsc(0.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mutual_information(&u, &bsc(0.5)).unwrap(), 0.0, epsilon = 1e-15);
        let skew = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(mutual_information(&skew, &bsc(0.5)).unwrap(), 0.0, epsilon = 1e-15);
        let v = mutual_information(&u, &bsc(0.2)).unwrap();
        assert!((v - 0.27807).abs() < 1e-5);
        assert_abs_diff_eq!(v, 1.0 - binary_entropy(0.2), epsilon = 1e-12);
    }

    #[test]
    fn mutual_information_rejects_dimension_mismatch() {
        assert!(mutual_information(&SimplexVector::uniform(3), &bsc(0.1)).is_err());
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(kl_divergence(&[0.4, 0.6], &[0.4, 0.6]).unwrap(), ExtReal::ZERO);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap().finite().unwrap(), 1.0);
        let d = kl_divergence(&[0.3, 0.7], &[0.5, 0.5]).unwrap().finite().unwrap();
        assert!((d - 0.11871).abs() < 1e-5);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), ExtReal::Infinite);
    }

    #[test]
    fn joint_type_examples() {
        let t = joint_type(&[&[0, 0, 1, 1]], &[2]).unwrap();
        assert_eq!(t.counts(), &[2, 2]);
        let t = joint_type(&[&[0, 0, 1, 1], &[0, 1, 0, 1]], &[2, 2]).unwrap();
        assert_eq!(t.counts(), &[1, 1, 1, 1]);
        let t = joint_type(&[&[0, 0], &[0, 1], &[0, 1]], &[2, 2, 2]).unwrap();
        assert_eq!(t.count(&[0, 0, 0]), 1);
        assert_eq!(t.count(&[0, 1, 1]), 1);
        assert_eq!(t.counts().iter().sum::<u64>(), 2);
        assert!(matches!(
            joint_type(&[&[0, 1], &[0]], &[2, 2]),
            Err(CavcError::LengthMismatch { .. })
        ));
        assert!(matches!(
            joint_type(&[&[0, 2]], &[2]),
            Err(CavcError::SymbolOutOfRange { symbol: 2, size: 2 })
        ));
    }

    #[test]
    fn conditional_mi_examples() {
        let t = joint_type(&[&[0, 1, 0, 1], &[0, 0, 0, 0]], &[2, 2]).unwrap();
        assert_eq!(conditional_mutual_information(&t, &[0], &[1], &[]).unwrap(), 0.0);
        let t = joint_type(&[&[0, 0, 1, 1], &[0, 1, 0, 1]], &[2, 2]).unwrap();
        assert_abs_diff_eq!(conditional_mutual_information(&t, &[0], &[1], &[]).unwrap(), 0.0);
        let t = joint_type(&[&[0, 1, 0, 1], &[0, 1, 0, 1]], &[2, 2]).unwrap();
        assert_abs_diff_eq!(conditional_mutual_information(&t, &[0], &[1], &[]).unwrap(), 1.0);
        assert!(matches!(
            conditional_mutual_information(&t, &[0], &[0], &[]),
            Err(CavcError::OverlappingAxes(0))
        ));
    }

    #[test]
    fn typicality_examples() {
        let t = JointType::from_counts(vec![2], vec![1, 1]).unwrap();
        assert!(is_typical(&t, &[0.5, 0.5], 0.0).unwrap());
        let t = JointType::from_counts(vec![2], vec![6, 4]).unwrap();
        assert!(!is_typical(&t, &[0.5, 0.5], 0.05).unwrap());
        let t = JointType::from_counts(vec![2], vec![52, 48]).unwrap();
        assert!(is_typical(&t, &[0.5, 0.5], 0.05).unwrap());
        assert!(is_typical(&t, &[0.5], 0.05).is_err());
    }

    fn random_simplex(rng: &mut impl Rng, len: usize, sparse: bool) -> Vec<f64> {
        let mut raw: Vec<f64> = (0..len)
            .map(|_| if sparse && rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() + 1e-9 })
            .collect();
        if raw.iter().all(|&v| v == 0.0) {
            raw[0] = 1.0;
        }
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }

    fn random_sequences(seed: u64, arity: usize, n: usize, size: usize) -> Vec<Vec<usize>> {
        let mut rng = rng_from_seed(seed);
        (0..arity).map(|_| (0..n).map(|_| rng.gen_range(0..size)).collect()).collect()
    }

    proptest! {
        #[test]
        fn two_mutual_information_paths_agree(seed in 0u64..10_000, nx in 1usize..5, ny in 1usize..5) {
            let k = catalog::random_kernel(nx, 1, ny, seed);
            let mut rng = rng_from_seed(seed + 1);
            let p = SimplexVector::with_tolerance(random_simplex(&mut rng, nx, true), 1e-12).unwrap();
            let w = k.state_channel(0);
            let a = mutual_information(&p, &w).unwrap();
            let b = mutual_information_via_input(&p, &w).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(a <= (nx.min(ny) as f64).log2() + 1e-12);
        }

        #[test]
        fn divergence_is_nonnegative_and_zero_only_on_equality(seed in 0u64..10_000, len in 1usize..6) {
            let mut rng = rng_from_seed(seed);
            let p = random_simplex(&mut rng, len, true);
            let q = random_simplex(&mut rng, len, false);
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= ExtReal::ZERO);
            if max_deviation(&p, &q) > 1e-6 {
                prop_assert!(d > ExtReal::ZERO);
            }
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), ExtReal::ZERO);
        }

        #[test]
        fn marginal_of_joint_type_is_type_of_sequence(seed in 0u64..10_000, n in 1usize..40) {
            let seqs = random_sequences(seed, 3, n, 3);
            let refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
            let t = joint_type(&refs, &[3, 3, 3]).unwrap();
            for axis in 0..3 {
                prop_assert_eq!(t.marginal(&[axis]).unwrap(), joint_type(&[refs[axis]], &[3]).unwrap());
            }
            prop_assert_eq!(
                t.marginal(&[2, 0]).unwrap(),
                joint_type(&[refs[2], refs[0]], &[3, 3]).unwrap()
            );
        }

        #[test]
        fn chain_rule_for_mutual_information(seed in 0u64..10_000, n in 1usize..60) {
            let seqs = random_sequences(seed, 3, n, 2);
            let refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
            let t = joint_type(&refs, &[2, 2, 2]).unwrap();
            let whole = conditional_mutual_information(&t, &[0], &[1, 2], &[]).unwrap();
            let first = conditional_mutual_information(&t, &[0], &[1], &[]).unwrap();
            let second = conditional_mutual_information(&t, &[0], &[2], &[1]).unwrap();
            prop_assert!(first >= 0.0 && second >= 0.0);
            prop_assert!((whole - first - second).abs() < 1e-9);
        }
    }
}
