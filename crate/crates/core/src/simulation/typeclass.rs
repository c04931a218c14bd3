use crate::codec::joint::contingency_tables;
use crate::codec::mmi::{clears, mi_from_counts};
use crate::error::{CavcError, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

/// Largest table count enumerated exactly per output type.
const TABLE_LIMIT: f64 = 2e5;

/// Draws how many codewords, independent of y and uniform on one type class,
/// clear the MMI threshold against y. Only counts up to 2 are distinguished.
pub(crate) struct ClearingSampler {
    counts: Vec<usize>,
    ny: usize,
    threshold: f64,
    ln_fact: Vec<f64>,
    enumerate: bool,
}

impl ClearingSampler {
    pub(crate) fn new(counts: Vec<usize>, ny: usize, threshold: f64) -> Self {
        let n: usize = counts.iter().sum();
        let mut ln_fact = vec![0.0; n + 1];
        for i in 1..=n {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let bound: f64 = counts.iter().map(|&c| binomial(c + ny - 1, ny - 1)).product();
        ClearingSampler {
            counts,
            ny,
            threshold,
            ln_fact,
            enumerate: bound <= TABLE_LIMIT,
        }
    }

    fn output_counts(&self, y: &[usize]) -> Result<Vec<u32>> {
        let n: usize = self.counts.iter().sum();
        if y.len() != n {
            return Err(CavcError::LengthMismatch { expected: n, got: y.len() });
        }
        let mut m = vec![0u32; self.ny];
        for &c in y {
            *m.get_mut(c).ok_or(CavcError::SymbolOutOfRange { symbol: c, size: self.ny })? += 1;
        }
        Ok(m)
    }

    /// P(a uniform codeword of the type clears the threshold against y).
    pub(crate) fn clear_probability(&self, y: &[usize]) -> Result<f64> {
        let cols = self.output_counts(y)?;
        let rows: Vec<u32> = self.counts.iter().map(|&c| c as u32).collect();
        let nx = rows.len();
        let n: usize = self.counts.iter().sum();
        let fixed: f64 = self.counts.iter().map(|&c| self.ln_fact[c]).sum::<f64>()
            + cols.iter().map(|&c| self.ln_fact[c as usize]).sum::<f64>()
            - self.ln_fact[n];
        let mut p = 0.0;
        for t in contingency_tables(&rows, &cols) {
            if clears(mi_from_counts(&t, nx, self.ny), self.threshold) {
                let ln: f64 = fixed - t.iter().map(|&k| self.ln_fact[k as usize]).sum::<f64>();
                p += ln.exp();
            }
        }
        Ok(p.clamp(0.0, 1.0))
    }

    pub(crate) fn count_clearing<R: Rng + ?Sized>(&self, y: &[usize], others: usize, rng: &mut R) -> Result<usize> {
        if others == 0 {
            return Ok(0);
        }
        if self.enumerate {
            let p = self.clear_probability(y)?;
            if p == 0.0 {
                return Ok(0);
            }
            let b = Binomial::new(others as u64, p).map_err(|e| CavcError::Inconsistent(e.to_string()))?;
            return Ok(b.sample(rng) as usize);
        }
        let cols = self.output_counts(y)?;
        let mut found = 0;
        for _ in 0..others {
            let t = self.sample_table(&cols, rng)?;
            if clears(mi_from_counts(&t, self.counts.len(), self.ny), self.threshold) {
                found += 1;
                if found == 2 {
                    break;
                }
            }
        }
        Ok(found)
    }

    /// Joint counts of (x, y) for x uniform on the type class: a multivariate
    /// hypergeometric draw per input symbol.
    fn sample_table<R: Rng + ?Sized>(&self, cols: &[u32], rng: &mut R) -> Result<Vec<u32>> {
        let ny = self.ny;
        let mut left: Vec<u64> = cols.iter().map(|&c| c as u64).collect();
        let mut pop: u64 = left.iter().sum();
        let mut table = vec![0u32; self.counts.len() * ny];
        for (a, &na) in self.counts.iter().enumerate() {
            let mut draws = na as u64;
            let mut rest = pop;
            for c in 0..ny {
                let k = if c + 1 == ny || draws == 0 {
                    draws
                } else {
                    Hypergeometric::new(rest, left[c], draws)
                        .map_err(|e| CavcError::Inconsistent(e.to_string()))?
                        .sample(rng)
                };
                table[a * ny + c] = k as u32;
                draws -= k;
                rest -= left[c];
            }
            for c in 0..ny {
                left[c] -= table[a * ny + c] as u64;
            }
            pop -= na as u64;
        }
        Ok(table)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::codebook::{base_word, shuffled};
    use crate::codec::mmi::pair_counts;
    use crate::rng::rng_from_seed;

    #[test]
    fn exact_probability_matches_shuffles() {
        let counts = vec![6, 6];
        let s = ClearingSampler::new(counts.clone(), 2, 0.1);
        let y = [0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1, 0];
        let p = s.clear_probability(&y).unwrap();
        let base = base_word(&counts);
        let mut rng = rng_from_seed(2);
        let trials = 20_000;
        let hits = (0..trials)
            .filter(|_| {
                let x = shuffled(&base, &mut rng);
                clears(mi_from_counts(&pair_counts(&x, &y, 2, 2), 2, 2), 0.1)
            })
            .count();
        let emp = hits as f64 / trials as f64;
        assert!((emp - p).abs() < 4.0 * (p * (1.0 - p) / trials as f64).sqrt() + 1e-3, "{emp} vs {p}");
    }

    #[test]
    fn sampled_tables_have_the_right_margins() {
        let s = ClearingSampler::new(vec![3, 4, 5], 3, 0.2);
        let cols = [2u32, 6, 4];
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            let t = s.sample_table(&cols, &mut rng).unwrap();
            for a in 0..3 {
                assert_eq!(t[a * 3..a * 3 + 3].iter().sum::<u32>() as usize, [3, 4, 5][a]);
            }
            for c in 0..3 {
                assert_eq!(t[c] + t[3 + c] + t[6 + c], cols[c]);
            }
        }
    }
}
