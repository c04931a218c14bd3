use super::{Codebook, Task, Verdict, VerdictFlag};
use crate::error::{CavcError, Result};
use serde::Serialize;

/// Empirical I(X;Y) in bits from a joint count table `counts[a·ny + b]`.
pub(crate) fn mi_from_counts(counts: &[u32], nx: usize, ny: usize) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let mut row = vec![0u32; nx];
    let mut col = vec![0u32; ny];
    for a in 0..nx {
        for b in 0..ny {
            let c = counts[a * ny + b];
            row[a] += c;
            col[b] += c;
        }
    }
    let nf = n as f64;
    let mut total = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let c = counts[a * ny + b];
            if c > 0 {
                let c = c as f64;
                total += c * (c * nf / (row[a] as f64 * col[b] as f64)).log2();
            }
        }
    }
    (total / nf).max(0.0)
}

pub(crate) fn pair_counts(x: &[usize], y: &[usize], nx: usize, ny: usize) -> Vec<u32> {
    let mut counts = vec![0u32; nx * ny];
    for (&a, &b) in x.iter().zip(y) {
        counts[a * ny + b] += 1;
    }
    counts
}

/// Empirical mutual information of the joint type of (x, y).
pub fn empirical_mutual_information(x: &[usize], y: &[usize], nx: usize, ny: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CavcError::LengthMismatch { expected: x.len(), got: y.len() });
    }
    check_symbols(x, nx)?;
    check_symbols(y, ny)?;
    Ok(mi_from_counts(&pair_counts(x, y, nx, ny), nx, ny))
}

fn check_symbols(seq: &[usize], size: usize) -> Result<()> {
    match seq.iter().find(|&&v| v >= size) {
        Some(&symbol) => Err(CavcError::SymbolOutOfRange { symbol, size }),
        None => Ok(()),
    }
}

/// Empirical I(X;Y) of every codeword against `y`.
pub fn mmi_statistics(codebook: &Codebook, y: &[usize], ny: usize) -> Result<Vec<f64>> {
    if y.len() != codebook.n() {
        return Err(CavcError::LengthMismatch { expected: codebook.n(), got: y.len() });
    }
    check_symbols(y, ny)?;
    let nx = codebook.input_size();
    Ok(codebook
        .codewords()
        .iter()
        .map(|w| mi_from_counts(&pair_counts(w, y, nx, ny), nx, ny))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmiReport {
    pub verdict: Verdict,
    pub threshold: f64,
    /// Messages whose statistic reached the threshold.
    pub clearing: Vec<usize>,
    /// Statistic of the decoded message, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
}

impl MmiReport {
    /// The unique clearing message, or `None` (the ⊥ outcome).
    pub fn unique(&self) -> Option<usize> {
        match self.clearing.as_slice() {
            [m] => Some(*m),
            _ => None,
        }
    }
}

/// Threshold decoding: the unique message whose empirical mutual information
/// with `y` is at least `rate + delta`; otherwise message 0, flagged.
pub fn mmi_decode(codebook: &Codebook, y: &[usize], ny: usize, rate: f64, delta: f64) -> Result<MmiReport> {
    let stats = mmi_statistics(codebook, y, ny)?;
    Ok(report_from_statistics(&stats, rate + delta))
}

/// A small relative slack keeps exact ties (e.g. I = R + δ computed two ways)
/// on the accepting side.
pub(crate) fn clears(statistic: f64, threshold: f64) -> bool {
    statistic >= threshold - 1e-12 * threshold.abs().max(1.0)
}

pub(crate) fn report_from_statistics(stats: &[f64], threshold: f64) -> MmiReport {
    let clearing: Vec<usize> = (0..stats.len()).filter(|&i| clears(stats[i], threshold)).collect();
    let statistic = match clearing.as_slice() {
        [m] => Some(stats[*m]),
        _ => None,
    };
    report_from_clearing(clearing, threshold, statistic)
}

pub(crate) fn report_from_clearing(clearing: Vec<usize>, threshold: f64, statistic: Option<f64>) -> MmiReport {
    let verdict = match clearing.as_slice() {
        [m] => Verdict::message(Task::Com, *m),
        [] => Verdict::fallback(Task::Com, VerdictFlag::NoCandidate),
        _ => Verdict::fallback(Task::Com, VerdictFlag::Ambiguous),
    };
    MmiReport {
        verdict,
        threshold,
        clearing,
        statistic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SimplexVector;
    use crate::codec::generate_codebook;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn book() -> Codebook {
        Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap()
    }

    #[test]
    fn noiseless_output_decodes_first_codeword() {
        let y = [0, 0, 0, 1, 1, 1];
        assert!((empirical_mutual_information(&y, &y, 2, 2).unwrap() - 1.0).abs() < 1e-12);
        let r = mmi_decode(&book(), &y, 2, 0.5, 0.1).unwrap();
        assert_eq!(r.verdict, Verdict::message(Task::Com, 0));
        assert_eq!(r.clearing, vec![0]);
    }

    #[test]
    fn independent_output_falls_back() {
        // a constant output has a product joint type with every codeword
        let y = [1; 6];
        let stats = mmi_statistics(&book(), &y, 2).unwrap();
        assert!(stats.iter().all(|&s| s == 0.0), "{stats:?}");
        let r = mmi_decode(&book(), &y, 2, 0.3, 0.05).unwrap();
        assert!(r.verdict.fallback);
        assert_eq!(r.verdict.flags, vec![VerdictFlag::NoCandidate]);
        assert_eq!(r.verdict.decoded_message(), Some(0));
        assert_eq!(r.unique(), None);
    }

    #[test]
    fn two_clearing_codewords_are_ambiguous() {
        let b = Codebook::from_codewords(vec![vec![0, 1, 0, 1], vec![0, 1, 0, 1]], 2).unwrap();
        let r = mmi_decode(&b, &[0, 1, 0, 1], 2, 0.1, 0.1).unwrap();
        assert_eq!(r.verdict.flags, vec![VerdictFlag::Ambiguous]);
        assert_eq!(r.clearing, vec![0, 1]);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            mmi_decode(&book(), &[0, 1], 2, 0.1, 0.1),
            Err(CavcError::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn permutation_equivariant(seed in 0u64..500, m in 1usize..6) {
            let b = generate_codebook(&SimplexVector::uniform(2), 10, m, seed).unwrap();
            let mut rng = rng_from_seed(seed + 1);
            let y: Vec<usize> = (0..10).map(|_| rand::Rng::gen_range(&mut rng, 0..3)).collect();
            let mut perm: Vec<usize> = (0..10).collect();
            perm.shuffle(&mut rng);
            let words: Vec<Vec<usize>> = b.codewords().iter().map(|w| perm.iter().map(|&p| w[p]).collect()).collect();
            let pb = Codebook::from_codewords(words, 2).unwrap();
            let py: Vec<usize> = perm.iter().map(|&p| y[p]).collect();
            let a = mmi_decode(&b, &y, 3, 0.1, 0.05).unwrap();
            let c = mmi_decode(&pb, &py, 3, 0.1, 0.05).unwrap();
            prop_assert_eq!(a.verdict, c.verdict);
        }
    }
}
