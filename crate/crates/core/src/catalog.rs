//! Reference models used by tests, the CLI and the bundled model files.

use crate::channel::{ChannelKernel, CavcModel};
use crate::rng::rng_from_seed;
use rand::Rng;

/// Y = X + S over binary X and S.
pub fn adder_kernel() -> ChannelKernel {
    ChannelKernel::from_fn(2, 2, 3, |x, s, y| if y == x + s { 1.0 } else { 0.0 }).unwrap()
}

/// The binary adder as an AVC (both families are {0, 1}).
pub fn adder_avc() -> CavcModel {
    CavcModel::avc(adder_kernel()).unwrap()
}

/// Binary-input binary-output model whose states are BSCs: the first
/// `family_one.len()` states form S₁ and the rest S₂.
pub fn bsc_family_model(family_one: &[f64], family_two: &[f64]) -> CavcModel {
    let flips: Vec<f64> = family_one.iter().chain(family_two).copied().collect();
    let kernel = ChannelKernel::from_fn(2, flips.len(), 2, |x, s, y| if x == y { 1.0 - flips[s] } else { flips[s] }).unwrap();
    let n1 = family_one.len();
    CavcModel::new(kernel, (0..n1).collect(), (n1..flips.len()).collect()).unwrap()
}

/// The trans-symmetrizable, non-cis-symmetrizable model with Sₖ = X × {k}.
///
/// State (x', k) has index `x' + (k-1)|X|`; output (a, b) has index `a|X| + b`.
/// Under k = 1 the output is (x, x'), under k = 2 it is (x', x).
pub fn example_one(nx: usize) -> CavcModel {
    let kernel = ChannelKernel::from_fn(nx, 2 * nx, nx * nx, |x, s, y| {
        let (xp, k) = (s % nx, s / nx);
        let target = if k == 0 { x * nx + xp } else { xp * nx + x };
        if y == target {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    CavcModel::new(kernel, (0..nx).collect(), (nx..2 * nx).collect()).unwrap()
}

/// Two adder AVCs on disjoint output alphabets {0,1,2} and {3,4,5}:
/// cis-symmetrizable in both families but not trans-symmetrizable.
pub fn disjoint_output_adders() -> CavcModel {
    let kernel = ChannelKernel::from_fn(2, 4, 6, |x, s, y| {
        let target = if s < 2 { x + s } else { 3 + x + (s - 2) };
        if y == target {
            1.0
        } else {
            0.0
        }
    })
    .unwrap();
    CavcModel::new(kernel, vec![0, 1], vec![2, 3]).unwrap()
}

/// σ₁ copies x into {0,1}, σ₂ copies it into {2,3}; one state per family.
pub fn disjoint_output_noiseless() -> CavcModel {
    let kernel = ChannelKernel::from_fn(2, 2, 4, |x, s, y| if y == 2 * s + x { 1.0 } else { 0.0 }).unwrap();
    CavcModel::new(kernel, vec![0], vec![1]).unwrap()
}

/// Single-state identity channel on `nx` symbols.
pub fn noiseless(nx: usize) -> CavcModel {
    CavcModel::avc(ChannelKernel::from_fn(nx, 1, nx, |x, _, y| if x == y { 1.0 } else { 0.0 }).unwrap()).unwrap()
}

/// Noiseless channel (σ₁) against the always-flip channel (σ₂).
pub fn noiseless_vs_flip() -> CavcModel {
    bsc_family_model(&[0.0], &[1.0])
}

/// Kernel with random rows. Rows are normalized in floating point, which keeps
/// them within the construction tolerance.
pub fn random_kernel(nx: usize, ns: usize, ny: usize, seed: u64) -> ChannelKernel {
    let mut rng = rng_from_seed(seed);
    let table: Vec<Vec<Vec<f64>>> = (0..nx)
        .map(|_| (0..ns).map(|_| random_row(&mut rng, ny)).collect())
        .collect();
    ChannelKernel::from_table(&table).unwrap()
}

fn random_row(rng: &mut impl Rng, ny: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..ny).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let rest: f64 = row[1..].iter().sum();
    row[0] = 1.0 - rest;
    row
}

/// Random model with disjoint families of sizes `n1` and `n2`.
pub fn random_model(nx: usize, n1: usize, n2: usize, ny: usize, seed: u64) -> CavcModel {
    let kernel = random_kernel(nx, n1 + n2, ny, seed);
    CavcModel::new(kernel, (0..n1).collect(), (n1..n1 + n2).collect()).unwrap()
}

/// Random model whose kernel entries lie in {0, 1/2, 1}: each row is a point
/// mass or an even split between two outputs.
pub fn random_half_model(nx: usize, n1: usize, n2: usize, ny: usize, seed: u64) -> CavcModel {
    let mut rng = rng_from_seed(seed);
    let ns = n1 + n2;
    let table: Vec<Vec<Vec<f64>>> = (0..nx)
        .map(|_| {
            (0..ns)
                .map(|_| {
                    let mut row = vec![0.0; ny];
                    let a = rng.gen_range(0..ny);
                    if ny > 1 && rng.gen_bool(0.5) {
                        let mut b = rng.gen_range(0..ny - 1);
                        if b >= a {
                            b += 1;
                        }
                        row[a] = 0.5;
                        row[b] = 0.5;
                    } else {
                        row[a] = 1.0;
                    }
                    row
                })
                .collect()
        })
        .collect();
    CavcModel::new(ChannelKernel::from_table(&table).unwrap(), (0..n1).collect(), (n1..ns).collect()).unwrap()
}

/// Named models used for solver-versus-oracle regression.
pub fn regression_set() -> Vec<(String, CavcModel)> {
    let mut set = vec![
        ("bsc_single_pair".to_string(), bsc_family_model(&[0.1], &[0.2])),
        ("bsc_overlapping".to_string(), bsc_family_model(&[0.1, 0.3], &[0.2, 0.4])),
        ("bsc_disjoint".to_string(), bsc_family_model(&[0.05, 0.1], &[0.3, 0.4])),
        ("adder_avc".to_string(), adder_avc()),
        ("example_one".to_string(), example_one(2)),
        ("noiseless_vs_flip".to_string(), noiseless_vs_flip()),
    ];
    for seed in 0..4u64 {
        set.push((format!("random_{seed}"), random_model(2, 2, 2, 2, 1000 + seed)));
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one_outputs() {
        let m = example_one(2);
        // x = 1, state (0, 1) -> (1, 0); state (0, 2) -> (0, 1)
        assert_eq!(m.kernel().prob(1, 0, 2), 1.0);
        assert_eq!(m.kernel().prob(1, 2, 1), 1.0);
        assert!(!m.families_share_state());
    }

    #[test]
    fn random_rows_are_stochastic() {
        for seed in 0..50 {
            random_kernel(3, 3, 4, seed);
            random_half_model(2, 2, 2, 3, seed);
        }
    }
}
