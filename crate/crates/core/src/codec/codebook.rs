use crate::channel::{CavcModel, Family, SimplexVector};
use crate::error::{CavcError, Result};
use crate::info::{conditional_mutual_information, joint_type, JointType};
use crate::rng::rng_from_seed;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Constant-composition codebook: every codeword has the symbol counts
/// `composition`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Codebook {
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    composition: Vec<usize>,
    codewords: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

#[derive(Deserialize)]
struct RawCodebook {
    #[serde(default)]
    n: Option<usize>,
    #[serde(rename = "M", default)]
    m: Option<usize>,
    composition: Vec<usize>,
    codewords: Vec<Vec<usize>>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Symbol counts at length `n` closest to `n·p` (largest remainder).
pub fn realizable_counts(p: &SimplexVector, n: usize) -> Vec<usize> {
    let scaled: Vec<f64> = p.weights().iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|v| v.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Draws `m` codewords independently and uniformly from the type class of `p`
/// at length `n`.
pub fn generate_codebook(p: &SimplexVector, n: usize, m: usize, seed: u64) -> Result<Codebook> {
    if n == 0 || m == 0 {
        return Err(CavcError::Config("codebook needs n >= 1 and M >= 1".into()));
    }
    let closest = realizable_counts(p, n);
    let exact = p
        .weights()
        .iter()
        .zip(&closest)
        .all(|(w, &c)| (w * n as f64 - c as f64).abs() <= 1e-9 * n as f64);
    if !exact {
        return Err(CavcError::Unrealizable { n, closest });
    }
    let mut rng = rng_from_seed(seed);
    let base = base_word(&closest);
    let codewords = (0..m).map(|_| shuffled(&base, &mut rng)).collect();
    let mut book = Codebook {
        n,
        m,
        composition: closest,
        codewords,
        seed: Some(seed),
        warnings: Vec::new(),
    };
    book.note_duplicates();
    Ok(book)
}

pub(crate) fn base_word(counts: &[usize]) -> Vec<usize> {
    counts.iter().enumerate().flat_map(|(a, &c)| std::iter::repeat(a).take(c)).collect()
}

pub(crate) fn shuffled<R: Rng + ?Sized>(base: &[usize], rng: &mut R) -> Vec<usize> {
    let mut w = base.to_vec();
    w.shuffle(rng);
    w
}

impl Codebook {
    /// Builds a codebook from explicit codewords over an input alphabet of
    /// size `nx`; all codewords must share one composition.
    pub fn from_codewords(codewords: Vec<Vec<usize>>, nx: usize) -> Result<Self> {
        let first = codewords.first().ok_or_else(|| CavcError::Config("codebook has no codewords".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(CavcError::Config("codewords are empty".into()));
        }
        let composition = counts_of(first, nx)?;
        for w in &codewords {
            if w.len() != n {
                return Err(CavcError::LengthMismatch { expected: n, got: w.len() });
            }
            if counts_of(w, nx)? != composition {
                return Err(CavcError::InvalidDistribution(format!(
                    "codeword {w:?} does not have composition {composition:?}"
                )));
            }
        }
        let mut book = Codebook {
            n,
            m: codewords.len(),
            composition,
            codewords,
            seed: None,
            warnings: Vec::new(),
        };
        book.note_duplicates();
        Ok(book)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCodebook = serde_json::from_str(text).map_err(|e| CavcError::Parse(e.to_string()))?;
        let nx = raw.composition.len();
        let mut book = Codebook::from_codewords(raw.codewords, nx)?;
        if raw.composition != book.composition {
            return Err(CavcError::Parse("declared composition does not match the codewords".into()));
        }
        if raw.n.is_some_and(|n| n != book.n) || raw.m.is_some_and(|m| m != book.m) {
            return Err(CavcError::Parse("declared n or M does not match the codewords".into()));
        }
        book.seed = raw.seed;
        Ok(book)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("codebook serializes")
    }

    fn note_duplicates(&mut self) {
        self.warnings.clear();
        let mut seen: BTreeMap<&[usize], usize> = BTreeMap::new();
        let mut found = Vec::new();
        for (i, w) in self.codewords.iter().enumerate() {
            if let Some(&j) = seen.get(w.as_slice()) {
                found.push(format!("codewords {j} and {i} coincide"));
            } else {
                seen.insert(w, i);
            }
        }
        self.warnings = found;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn input_size(&self) -> usize {
        self.composition.len()
    }

    pub fn composition(&self) -> &[usize] {
        &self.composition
    }

    pub fn codewords(&self) -> &[Vec<usize>] {
        &self.codewords
    }

    pub fn codeword(&self, i: usize) -> &[usize] {
        &self.codewords[i]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn has_duplicates(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// (1/n) log₂ M.
    pub fn rate(&self) -> f64 {
        (self.m as f64).log2() / self.n as f64
    }

    /// Input type as a probability vector.
    pub fn input_type(&self) -> Vec<f64> {
        self.composition.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

fn counts_of(w: &[usize], nx: usize) -> Result<Vec<usize>> {
    let mut c = vec![0; nx];
    for &a in w {
        if a >= nx {
            return Err(CavcError::SymbolOutOfRange { symbol: a, size: nx });
        }
        c[a] += 1;
    }
    Ok(c)
}

/// Outcome of checking one of the three counting bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NiceBound {
    /// Joint types whose gate held and were compared against the bound.
    pub checked: usize,
    /// Joint types skipped because the gate condition failed.
    pub gated_out: usize,
    pub violations: usize,
    /// Smallest (bound exponent − log₂ observed) over checked types.
    pub worst_slack: Option<f64>,
}

impl NiceBound {
    fn record(&mut self, slack: f64) {
        self.checked += 1;
        if slack < -1e-9 {
            self.violations += 1;
        }
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NiceCodeReport {
    pub eps: f64,
    pub rate: f64,
    /// Whether every (x, s) probe was enumerated rather than sampled.
    pub exhaustive: bool,
    pub state_probes: usize,
    pub sequence_probes: usize,
    /// Pair counts |{j : (x, x_j, s) has a given joint type}|.
    pub pair_count: NiceBound,
    /// Fraction of codewords with a given joint type against s.
    pub state_fraction: NiceBound,
    /// Fraction of codewords with some rival at a given joint type.
    pub rival_fraction: NiceBound,
}

impl NiceCodeReport {
    pub fn holds(&self) -> bool {
        self.pair_count.holds() && self.state_fraction.holds() && self.rival_fraction.holds()
    }
}

/// Checks the three counting properties of a good constant-composition code
/// against state sequences from S₁ⁿ ∪ S₂ⁿ (and, for the pair counts, every
/// input sequence). Probes are enumerated when at most `max_probes` are
/// needed and sampled with `seed` otherwise.
pub fn verify_nice_code(
    codebook: &Codebook,
    model: &CavcModel,
    eps: f64,
    max_probes: usize,
    seed: u64,
) -> Result<NiceCodeReport> {
    if codebook.input_size() != model.nx() {
        return Err(CavcError::ModelMismatch("codebook and model input alphabets differ".into()));
    }
    let n = codebook.n();
    let nx = model.nx();
    let ns = model.kernel().ns();
    let rate = codebook.rate();
    let mut rng = rng_from_seed(seed);

    let f1 = model.family(Family::One);
    let f2 = model.family(Family::Two);
    let count_s = (f1.len() as f64).powi(n as i32) + (f2.len() as f64).powi(n as i32);
    let count_x = (nx as f64).powi(n as i32);
    let exhaustive = count_s * count_x <= max_probes as f64;

    let states: Vec<Vec<usize>> = if exhaustive {
        let mut all: Vec<Vec<usize>> = Vec::new();
        for fam in [f1, f2] {
            for_each_sequence(fam, n, |s| all.push(s.to_vec()));
        }
        all.sort();
        all.dedup();
        all
    } else {
        let k = (max_probes as f64).sqrt().max(1.0) as usize;
        (0..k)
            .map(|_| {
                let fam = if rng.gen_bool(0.5) { f1 } else { f2 };
                (0..n).map(|_| fam[rng.gen_range(0..fam.len())]).collect()
            })
            .collect()
    };
    let per_state_x = if exhaustive { 0 } else { (max_probes / states.len().max(1)).max(1) };

    let mut report = NiceCodeReport {
        eps,
        rate,
        exhaustive,
        state_probes: states.len(),
        sequence_probes: 0,
        pair_count: NiceBound::default(),
        state_fraction: NiceBound::default(),
        rival_fraction: NiceBound::default(),
    };
    let big_n = codebook.len() as f64;
    let words = codebook.codewords();

    for s in &states {
        // fraction of codewords per joint type of (x_i, s)
        let mut by_type: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for w in words {
            *by_type.entry(joint_type(&[w, s], &[nx, ns])?.counts().to_vec()).or_default() += 1;
        }
        for (counts, c) in by_type {
            let t = JointType::from_counts(vec![nx, ns], counts)?;
            let i_xs = conditional_mutual_information(&t, &[0], &[1], &[])?;
            if i_xs > eps {
                report.state_fraction.record(-(n as f64) * eps / 2.0 - (c as f64 / big_n).log2());
            } else {
                report.state_fraction.gated_out += 1;
            }
        }

        // codewords having some rival at a given joint type of (x_i, x_j, s)
        let mut rivals: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for (i, wi) in words.iter().enumerate() {
            for (j, wj) in words.iter().enumerate() {
                if i != j {
                    let key = joint_type(&[wi, wj, s], &[nx, nx, ns])?.counts().to_vec();
                    let entry = rivals.entry(key).or_default();
                    if entry.last() != Some(&i) {
                        entry.push(i);
                    }
                }
            }
        }
        for (counts, holders) in rivals {
            let t = JointType::from_counts(vec![nx, nx, ns], counts)?;
            let i_x_xs = conditional_mutual_information(&t, &[0], &[1, 2], &[])?;
            let i_xp_s = conditional_mutual_information(&t, &[1], &[2], &[])?;
            if i_x_xs - (rate - i_xp_s).max(0.0) > eps {
                report
                    .rival_fraction
                    .record(-(n as f64) * eps / 2.0 - (holders.len() as f64 / big_n).log2());
            } else {
                report.rival_fraction.gated_out += 1;
            }
        }

        // pair counts against every (or a sample of) input sequence x
        let check_x = |x: &[usize], report: &mut NiceCodeReport| -> Result<()> {
            report.sequence_probes += 1;
            let mut by_type: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
            for w in words {
                *by_type.entry(joint_type(&[x, w, s], &[nx, nx, ns])?.counts().to_vec()).or_default() += 1;
            }
            for (counts, c) in by_type {
                let t = JointType::from_counts(vec![nx, nx, ns], counts)?;
                let i_xp_xs = conditional_mutual_information(&t, &[1], &[0, 2], &[])?;
                let exponent = n as f64 * ((rate - i_xp_xs).max(0.0) + eps);
                report.pair_count.record(exponent - (c as f64).log2());
            }
            Ok(())
        };
        if exhaustive {
            let symbols: Vec<usize> = (0..nx).collect();
            let mut xs = Vec::new();
            for_each_sequence(&symbols, n, |x| xs.push(x.to_vec()));
            for x in &xs {
                check_x(x, &mut report)?;
            }
        } else {
            for _ in 0..per_state_x {
                let x: Vec<usize> = (0..n).map(|_| rng.gen_range(0..nx)).collect();
                check_x(&x, &mut report)?;
            }
        }
    }
    Ok(report)
}

/// Calls `f` on every sequence of length `n` over `alphabet`, in
/// lexicographic order of positions into `alphabet`.
pub(crate) fn for_each_sequence(alphabet: &[usize], n: usize, mut f: impl FnMut(&[usize])) {
    let k = alphabet.len();
    if k == 0 {
        return;
    }
    let mut idx = vec![0usize; n];
    let mut seq: Vec<usize> = vec![alphabet[0]; n];
    loop {
        f(&seq);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < k {
                seq[pos] = alphabet[idx[pos]];
                break;
            }
            idx[pos] = 0;
            seq[pos] = alphabet[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use proptest::prelude::*;

    #[test]
    fn uniform_binary_single_codeword() {
        let b = generate_codebook(&SimplexVector::uniform(2), 4, 1, 5).unwrap();
        assert_eq!(b.codeword(0).iter().filter(|&&a| a == 1).count(), 2);
        assert_eq!(b.composition(), &[2, 2]);
        assert!(!b.has_duplicates());
    }

    #[test]
    fn point_mass_composition_duplicates_with_warning() {
        let b = generate_codebook(&SimplexVector::point_mass(2, 0), 5, 3, 1).unwrap();
        assert!(b.codewords().iter().all(|w| w == &vec![0; 5]));
        assert!(b.has_duplicates());
        assert_eq!(b.warnings().len(), 2);
    }

    #[test]
    fn fixed_seed_reproduces() {
        let p = SimplexVector::uniform(2);
        assert_eq!(generate_codebook(&p, 6, 2, 9).unwrap(), generate_codebook(&p, 6, 2, 9).unwrap());
        assert_ne!(
            generate_codebook(&p, 6, 8, 9).unwrap().codewords(),
            generate_codebook(&p, 6, 8, 10).unwrap().codewords()
        );
    }

    #[test]
    fn unrealizable_type_names_closest_counts() {
        let p = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        match generate_codebook(&p, 4, 1, 0) {
            Err(CavcError::Unrealizable { n: 4, closest }) => assert_eq!(closest, vec![1, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let b = generate_codebook(&SimplexVector::uniform(3), 6, 4, 2).unwrap();
        let text = b.to_json();
        assert!(text.contains("\"M\":4"));
        assert_eq!(Codebook::from_json(&text).unwrap(), b);
        assert!(Codebook::from_json(r#"{"composition":[1,1],"codewords":[[0,1],[0,0]]}"#).is_err());
    }

    #[test]
    fn mixed_compositions_rejected() {
        assert!(Codebook::from_codewords(vec![vec![0, 1], vec![1, 1]], 2).is_err());
    }

    #[test]
    fn pair_count_bound_holds_on_distinct_pair() {
        let model = catalog::bsc_family_model(&[0.1], &[0.2]);
        let b = Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap();
        let r = verify_nice_code(&b, &model, 0.5, 1 << 20, 0).unwrap();
        assert!(r.exhaustive);
        assert!(r.pair_count.holds(), "{r:?}");
        assert!(r.pair_count.worst_slack.unwrap() >= 0.0);
        // one state per family: every state sequence is constant
        assert_eq!(r.state_fraction.checked, 0);
    }

    #[test]
    fn two_codewords_cannot_be_nice_against_correlated_states() {
        let model = catalog::bsc_family_model(&[0.0, 0.5], &[0.1, 0.2]);
        let b = Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap();
        let r = verify_nice_code(&b, &model, 0.5, 1 << 20, 0).unwrap();
        assert!(r.state_fraction.checked > 0 && r.rival_fraction.checked > 0);
        assert!(!r.state_fraction.holds());
        assert!(!r.holds());
    }

    #[test]
    fn gate_skips_independent_state_types() {
        let model = catalog::bsc_family_model(&[0.1], &[0.2]);
        let b = Codebook::from_codewords(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 1, 0, 1, 0, 1]], 2).unwrap();
        // eps above any attainable I(X;S) gates every state-fraction check out
        let r = verify_nice_code(&b, &model, 1.5, 1 << 20, 0).unwrap();
        assert_eq!(r.state_fraction.checked, 0);
        assert!(r.state_fraction.gated_out > 0);
        assert!(r.state_fraction.holds());
    }

    #[test]
    fn duplicated_codewords_break_rival_bound() {
        let model = catalog::bsc_family_model(&[0.1], &[0.2]);
        let w = vec![0, 0, 0, 1, 1, 1];
        let b = Codebook::from_codewords(vec![w.clone(), w], 2).unwrap();
        let r = verify_nice_code(&b, &model, 0.5, 1 << 20, 0).unwrap();
        assert!(r.rival_fraction.violations > 0);
    }

    #[test]
    fn sampled_probes_when_budget_is_small() {
        let model = catalog::bsc_family_model(&[0.1], &[0.2]);
        let b = generate_codebook(&SimplexVector::uniform(2), 12, 3, 4).unwrap();
        let r = verify_nice_code(&b, &model, 0.5, 400, 1).unwrap();
        assert!(!r.exhaustive);
        assert!(r.sequence_probes <= 400);
    }

    #[test]
    fn sequence_enumeration_order() {
        let mut seen = Vec::new();
        for_each_sequence(&[3, 5], 2, |s| seen.push(s.to_vec()));
        assert_eq!(seen, vec![vec![3, 3], vec![3, 5], vec![5, 3], vec![5, 5]]);
    }

    proptest! {
        #[test]
        fn codewords_share_composition(n in 1usize..20, m in 1usize..6, seed in 0u64..1000) {
            let counts = realizable_counts(&SimplexVector::uniform(3), n);
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            let p = SimplexVector::new(counts.iter().map(|&c| c as f64 / n as f64).collect()).unwrap();
            let b = generate_codebook(&p, n, m, seed).unwrap();
            for w in b.codewords() {
                prop_assert_eq!(counts_of(w, 3).unwrap(), counts.clone());
            }
        }
    }
}
