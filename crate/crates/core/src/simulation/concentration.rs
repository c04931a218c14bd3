use crate::channel::{channel_sample_with, CavcModel, Family, SimplexVector};
use crate::codec::codebook::{base_word, shuffled};
use crate::codec::{realizable_counts, training_length, TransmissionFrame};
use crate::error::{CavcError, Result};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

/// Empirical tail frequency against a stated bound with 3σ sampling slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub bound: f64,
    pub slack: f64,
    pub exceed: usize,
    pub trials: usize,
    pub empirical: f64,
    /// The bound is at least 1 and says nothing.
    pub vacuous: bool,
    pub holds: bool,
}

impl TailCheck {
    fn new(bound: f64, exceed: usize, trials: usize) -> Self {
        let b = bound.min(1.0);
        let slack = 3.0 * (b * (1.0 - b) / trials.max(1) as f64).sqrt();
        let empirical = exceed as f64 / trials.max(1) as f64;
        TailCheck {
            bound,
            slack,
            exceed,
            trials,
            empirical,
            vacuous: bound >= 1.0,
            holds: empirical <= bound + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UrnReport {
    pub total: usize,
    pub white: usize,
    pub draws: usize,
    pub t: f64,
    pub mean: f64,
    pub tail: TailCheck,
}

/// Draws `draws` of `total` balls without replacement, `white` of them
/// white, and compares P[|i − E i| ≥ t·draws] with 2e^{−2t²·draws}.
pub fn urn_concentration_check(total: usize, white: usize, draws: usize, t: f64, trials: usize, seed: u64) -> Result<UrnReport> {
    if draws > total || white > total {
        return Err(CavcError::Config(format!("urn of {total} balls cannot have {white} white or give {draws} draws")));
    }
    if !(t >= 0.0) || trials == 0 {
        return Err(CavcError::Config("urn check needs t >= 0 and at least one trial".into()));
    }
    let mean = draws as f64 * white as f64 / total.max(1) as f64;
    let cut = t * draws as f64;
    let exceed = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let whites = sample(&mut rng, total, draws).iter().filter(|&b| b < white).count();
            (whites as f64 - mean).abs() >= cut - 1e-12
        })
        .count();
    let bound = 2.0 * (-2.0 * t * t * draws as f64).exp();
    Ok(UrnReport {
        total,
        white,
        draws,
        t,
        mean,
        tail: TailCheck::new(bound, exceed, trials),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationSplitReport {
    pub n: usize,
    pub training_len: usize,
    pub eta: f64,
    /// Training part of length |X|·⌈log₂ n⌉, bound 2·max|S_k|·n^{−2η²|X|}.
    pub training: TailCheck,
    /// Payload part of length n, bound 2·max|S_k|·e^{−2η²n}.
    pub payload: TailCheck,
}

fn max_type_gap(part: &[usize], reference: &[f64], ns: usize) -> f64 {
    let mut counts = vec![0usize; ns];
    for &s in part {
        counts[s] += 1;
    }
    let len = part.len().max(1) as f64;
    counts
        .iter()
        .zip(reference)
        .map(|(&c, &r)| (c as f64 / len - r).abs())
        .fold(0.0, f64::max)
}

/// Shuffles the frame positions of `s` (length n + |X|·⌈log₂ n⌉) and counts
/// how often each part's state type leaves the η-neighbourhood of the type
/// of `s`.
pub fn permutation_split_check(
    model: &CavcModel,
    n: usize,
    s: &[usize],
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<PermutationSplitReport> {
    if n < 2 || trials == 0 || !(eta > 0.0) {
        return Err(CavcError::Config("split check needs n >= 2, eta > 0 and trials > 0".into()));
    }
    let nx = model.nx();
    let l = training_length(nx, n);
    if s.len() != n + l {
        return Err(CavcError::LengthMismatch { expected: n + l, got: s.len() });
    }
    if !Family::BOTH.iter().any(|&k| s.iter().all(|v| model.family(k).contains(v))) {
        return Err(CavcError::ModelMismatch("state sequence must lie in one family".into()));
    }
    let ns = model.kernel().ns();
    let mut reference = vec![0.0; ns];
    for &v in s {
        reference[v] += 1.0 / s.len() as f64;
    }
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let frame = TransmissionFrame::random(n, l, derive_seed(seed, i as u64));
            let logical = frame.gather(s).expect("length checked");
            let (payload, training) = logical.split_at(n);
            (
                max_type_gap(training, &reference, ns) > eta,
                max_type_gap(payload, &reference, ns) > eta,
            )
        })
        .collect();
    let states = model.family(Family::One).len().max(model.family(Family::Two).len()) as f64;
    let training_bound = 2.0 * states * (n as f64).powf(-2.0 * eta * eta * nx as f64);
    let payload_bound = 2.0 * states * (-2.0 * eta * eta * n as f64).exp();
    Ok(PermutationSplitReport {
        n,
        training_len: l,
        eta,
        training: TailCheck::new(training_bound, outcomes.iter().filter(|o| o.0).count(), trials),
        payload: TailCheck::new(payload_bound, outcomes.iter().filter(|o| o.1).count(), trials),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lb1Report {
    pub n: usize,
    pub eps: f64,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// Largest entrywise gap seen over all trials.
    pub worst_gap: f64,
    pub max_failure_rate: f64,
    pub holds: bool,
}

/// With x uniform on the type class of `p_x` and `s` fixed, measures how
/// often the joint type of (x, y) leaves the ε-box around P_X × Z̃, where Z̃
/// mixes the state channels by their frequency in `s`.
pub fn lb1_check(
    model: &CavcModel,
    s: &[usize],
    p_x: &SimplexVector,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<Lb1Report> {
    let n = s.len();
    if n == 0 || trials == 0 || !(eps > 0.0) {
        return Err(CavcError::Config("lb1 check needs n > 0, eps > 0 and trials > 0".into()));
    }
    let (nx, ny, ns) = (model.nx(), model.ny(), model.kernel().ns());
    if p_x.len() != nx {
        return Err(CavcError::LengthMismatch { expected: nx, got: p_x.len() });
    }
    if let Some(&v) = s.iter().find(|&&v| v >= ns) {
        return Err(CavcError::SymbolOutOfRange { symbol: v, size: ns });
    }
    let counts = realizable_counts(p_x, n);
    let base = base_word(&counts);
    let mut freq = vec![0.0; ns];
    for &v in s {
        freq[v] += 1.0 / n as f64;
    }
    let mut target = vec![0.0; nx * ny];
    for a in 0..nx {
        let pa = counts[a] as f64 / n as f64;
        for (st, &f) in freq.iter().enumerate() {
            if f > 0.0 {
                for b in 0..ny {
                    target[a * ny + b] += pa * f * model.kernel().prob(a, st, b);
                }
            }
        }
    }
    let gaps: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let x = shuffled(&base, &mut rng);
            let y = channel_sample_with(model.kernel(), &x, s, &mut rng)?;
            let mut joint = vec![0.0; nx * ny];
            for (&a, &b) in x.iter().zip(&y) {
                joint[a * ny + b] += 1.0 / n as f64;
            }
            Ok(joint.iter().zip(&target).map(|(j, t)| (j - t).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let failures = gaps.iter().filter(|&&g| g > eps).count();
    let failure_rate = failures as f64 / trials as f64;
    Ok(Lb1Report {
        n,
        eps,
        trials,
        failures,
        failure_rate,
        worst_gap: gaps.iter().copied().fold(0.0, f64::max),
        max_failure_rate: 0.05,
        holds: failure_rate <= 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn urn_tail_respects_bound() {
        let r = urn_concentration_check(1000, 400, 100, 0.2, 2000, 1).unwrap();
        assert!((r.tail.bound - 2.0 * (-8.0f64).exp()).abs() < 1e-12);
        assert!(r.tail.holds, "{r:?}");
        assert_eq!(r.mean, 40.0);
    }

    #[test]
    fn full_draw_never_deviates() {
        let r = urn_concentration_check(50, 20, 50, 0.01, 200, 3).unwrap();
        assert_eq!(r.tail.exceed, 0);
    }

    #[test]
    fn zero_t_is_vacuous() {
        let r = urn_concentration_check(50, 20, 10, 0.0, 100, 3).unwrap();
        assert!(r.tail.vacuous && r.tail.holds);
        assert_eq!(r.tail.bound, 2.0);
        assert!(urn_concentration_check(5, 2, 6, 0.1, 10, 0).is_err());
    }

    #[test]
    fn constant_states_never_split_unevenly() {
        let m = catalog::bsc_family_model(&[0.1, 0.2], &[0.3]);
        let l = training_length(2, 64);
        let r = permutation_split_check(&m, 64, &vec![1; 64 + l], 0.05, 200, 0).unwrap();
        assert_eq!(r.payload.exceed, 0);
        assert_eq!(r.training.exceed, 0);
    }

    #[test]
    fn balanced_states_payload_tail() {
        let m = catalog::bsc_family_model(&[0.1, 0.2], &[0.3]);
        let l = training_length(2, 256);
        let s: Vec<usize> = (0..256 + l).map(|i| i % 2).collect();
        let r = permutation_split_check(&m, 256, &s, 0.1, 2000, 4).unwrap();
        assert!(r.payload.holds && r.training.holds, "{r:?}");
        assert!(r.training.empirical >= r.payload.empirical);
        let mixed: Vec<usize> = (0..256 + l).map(|i| i % 3).collect();
        assert!(permutation_split_check(&m, 256, &mixed, 0.1, 10, 4).is_err());
    }

    #[test]
    fn lb1_at_moderate_length() {
        let m = catalog::bsc_family_model(&[0.05, 0.3], &[0.4]);
        let s: Vec<usize> = (0..600).map(|i| if i % 3 == 0 { 1 } else { 0 }).collect();
        let r = lb1_check(&m, &s, &SimplexVector::uniform(2), 0.05, 300, 2).unwrap();
        assert!(r.holds, "{r:?}");
    }
}
