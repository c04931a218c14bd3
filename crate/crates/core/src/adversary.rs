//! State-sequence adversaries and exact error evaluation at tiny blocklengths.
//!
//! The adversary knows the compound state, the code and the frame layout but
//! not the message. Exact evaluation enumerates every output block.

use crate::channel::{mixture_channel, CavcModel, Dmc, Family, SimplexVector};
use crate::codec::{Decoder, Task, Verdict};
use crate::error::{CavcError, Result};
use crate::rng::rng_from_seed;
use crate::symmetry::{check_cis, check_trans, hull_separation, SymmetryWitness, WitnessKind, DEFAULT_TOL};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_ENUMERATION_BUDGET: f64 = 1e8;
/// Largest |Y|ⁿ a decode table may cover.
pub const DEFAULT_TABLE_BUDGET: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Iid,
    #[serde(alias = "cis")]
    CisSymmetrizing,
    #[serde(alias = "trans")]
    TransSymmetrizing,
    #[serde(alias = "emulate")]
    IntersectionEmulation,
    #[serde(alias = "exhaustive")]
    ExhaustiveWorstCase,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Iid => "iid",
            AttackKind::CisSymmetrizing => "cis",
            AttackKind::TransSymmetrizing => "trans",
            AttackKind::IntersectionEmulation => "emulate",
            AttackKind::ExhaustiveWorstCase => "exhaustive",
        })
    }
}

impl FromStr for AttackKind {
    type Err = CavcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(AttackKind::Iid),
            "cis" | "cis_symmetrizing" => Ok(AttackKind::CisSymmetrizing),
            "trans" | "trans_symmetrizing" => Ok(AttackKind::TransSymmetrizing),
            "emulate" | "intersection_emulation" => Ok(AttackKind::IntersectionEmulation),
            "exhaustive" | "exhaustive_worst_case" => Ok(AttackKind::ExhaustiveWorstCase),
            other => Err(CavcError::Config(format!("unknown attack '{other}'"))),
        }
    }
}

/// How a symmetrizing adversary picks the codeword it imitates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpuriousRule {
    /// Uniform over messages other than the sent one (the sent one when M = 1).
    #[default]
    ExcludeSent,
    /// Uniform over all messages, as in the averaged-state converse.
    Uniform,
}

impl SpuriousRule {
    pub fn choose<R: Rng + ?Sized>(self, sent: usize, m: usize, rng: &mut R) -> usize {
        match self {
            SpuriousRule::Uniform => rng.gen_range(0..m),
            SpuriousRule::ExcludeSent if m < 2 => sent,
            SpuriousRule::ExcludeSent => {
                let j = rng.gen_range(0..m - 1);
                if j >= sent {
                    j + 1
                } else {
                    j
                }
            }
        }
    }

    /// (message, probability) pairs of the spurious choice.
    pub fn weights(self, sent: usize, m: usize) -> Vec<(usize, f64)> {
        match self {
            SpuriousRule::Uniform => (0..m).map(|j| (j, 1.0 / m as f64)).collect(),
            SpuriousRule::ExcludeSent if m < 2 => vec![(sent, 1.0)],
            SpuriousRule::ExcludeSent => (0..m).filter(|&j| j != sent).map(|j| (j, 1.0 / (m - 1) as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackParams {
    /// Per-family i.i.d. laws, indexed like `model.family(k)`.
    Iid { laws: [Option<SimplexVector>; 2] },
    CisSymmetrizing { witness: SymmetryWitness },
    TransSymmetrizing { witness: SymmetryWitness },
    /// i.i.d. laws whose mixtures are the closest points of the two hulls.
    IntersectionEmulation { q: [SimplexVector; 2], distance: f64 },
    ExhaustiveWorstCase,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackStrategy {
    pub params: AttackParams,
    /// Active compound state; `None` applies the per-kind rule.
    pub compound_choice: Option<Family>,
    pub spurious: SpuriousRule,
}

/// Per-position state distributions (global state, probability), mixed over
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLaw {
    pub components: Vec<(f64, Vec<Vec<(usize, f64)>>)>,
}

fn sparse(states: &[usize], p: &SimplexVector) -> Vec<(usize, f64)> {
    states.iter().zip(p.weights()).filter(|(_, &w)| w > 0.0).map(|(&s, &w)| (s, w)).collect()
}

fn require_feasible(witness: &SymmetryWitness) -> Result<()> {
    if !witness.feasible {
        return Err(CavcError::InfeasibleWitness {
            residual: witness.residual,
            tol: witness.tol,
        });
    }
    Ok(())
}

fn witness_family(witness: &SymmetryWitness) -> Option<Family> {
    match witness.kind {
        WitnessKind::Cis1 => Some(Family::One),
        WitnessKind::Cis2 => Some(Family::Two),
        WitnessKind::Trans => None,
    }
}

/// i.i.d. states from `p_s` (indexed like `model.family(k)`) under σ_k.
pub fn iid_attack(model: &CavcModel, k: Family, p_s: SimplexVector) -> Result<AttackStrategy> {
    let want = model.family(k).len();
    if p_s.len() != want {
        return Err(CavcError::LengthMismatch { expected: want, got: p_s.len() });
    }
    let mut laws = [None, None];
    laws[k.index()] = Some(p_s);
    Ok(AttackStrategy {
        params: AttackParams::Iid { laws },
        compound_choice: Some(k),
        spurious: SpuriousRule::default(),
    })
}

/// i.i.d. states from weights over the whole state alphabet; the support
/// must lie inside one family.
pub fn iid_attack_global(model: &CavcModel, weights: &SimplexVector) -> Result<AttackStrategy> {
    if weights.len() != model.kernel().ns() {
        return Err(CavcError::LengthMismatch {
            expected: model.kernel().ns(),
            got: weights.len(),
        });
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&s| weights.weights()[s] > 0.0).collect();
    for k in Family::BOTH {
        let fam = model.family(k);
        if support.iter().all(|s| fam.contains(s)) {
            let p = fam.iter().map(|&s| weights.weights()[s]).collect();
            return iid_attack(model, k, SimplexVector::new(p)?);
        }
    }
    Err(CavcError::ModelMismatch(format!("i.i.d. support {support:?} spans both families")))
}

/// i.i.d. laws for both compound states.
pub fn iid_pair(model: &CavcModel, p1: SimplexVector, p2: SimplexVector) -> Result<AttackStrategy> {
    for (k, p) in [(Family::One, &p1), (Family::Two, &p2)] {
        if p.len() != model.family(k).len() {
            return Err(CavcError::LengthMismatch {
                expected: model.family(k).len(),
                got: p.len(),
            });
        }
    }
    Ok(AttackStrategy {
        params: AttackParams::Iid { laws: [Some(p1), Some(p2)] },
        compound_choice: None,
        spurious: SpuriousRule::default(),
    })
}

pub fn cis_strategy(witness: SymmetryWitness, spurious: SpuriousRule) -> Result<AttackStrategy> {
    require_feasible(&witness)?;
    let k = witness_family(&witness)
        .ok_or_else(|| CavcError::Config("cis attack needs a cis witness".into()))?;
    Ok(AttackStrategy {
        params: AttackParams::CisSymmetrizing { witness },
        compound_choice: Some(k),
        spurious,
    })
}

pub fn trans_strategy(witness: SymmetryWitness, spurious: SpuriousRule) -> Result<AttackStrategy> {
    require_feasible(&witness)?;
    if witness.kind != WitnessKind::Trans {
        return Err(CavcError::Config("trans attack needs a trans witness".into()));
    }
    Ok(AttackStrategy {
        params: AttackParams::TransSymmetrizing { witness },
        compound_choice: None,
        spurious,
    })
}

/// i.i.d. attacks at the closest pair of hull points.
pub fn emulation_strategy(model: &CavcModel) -> Result<AttackStrategy> {
    let sep = hull_separation(model, DEFAULT_TOL)?;
    Ok(AttackStrategy {
        params: AttackParams::IntersectionEmulation {
            q: [sep.witness_q1, sep.witness_q2],
            distance: sep.distance,
        },
        compound_choice: None,
        spurious: SpuriousRule::default(),
    })
}

pub fn exhaustive_strategy(family: Option<Family>) -> AttackStrategy {
    AttackStrategy {
        params: AttackParams::ExhaustiveWorstCase,
        compound_choice: family,
        spurious: SpuriousRule::default(),
    }
}

/// Builds the bundled attack of the given kind for `model`. Symmetrizing
/// kinds fail when the model admits no witness.
pub fn default_strategy(model: &CavcModel, kind: AttackKind, family: Option<Family>) -> Result<AttackStrategy> {
    let mut strategy = match kind {
        AttackKind::Iid => {
            let p = |k: Family| SimplexVector::uniform(model.family(k).len());
            iid_pair(model, p(Family::One), p(Family::Two))?
        }
        AttackKind::CisSymmetrizing => {
            let order = match family {
                Some(k) => vec![k],
                None => Family::BOTH.to_vec(),
            };
            let mut last = None;
            for k in order {
                let w = check_cis(model, k, DEFAULT_TOL)?;
                if w.feasible {
                    return cis_strategy(w, SpuriousRule::default());
                }
                last = Some(w);
            }
            let w = last.expect("at least one family");
            return Err(CavcError::InfeasibleWitness {
                residual: w.residual,
                tol: w.tol,
            });
        }
        AttackKind::TransSymmetrizing => trans_strategy(check_trans(model, DEFAULT_TOL)?, SpuriousRule::default())?,
        AttackKind::IntersectionEmulation => emulation_strategy(model)?,
        AttackKind::ExhaustiveWorstCase => exhaustive_strategy(None),
    };
    if family.is_some() {
        strategy.compound_choice = family;
    }
    Ok(strategy)
}

impl AttackStrategy {
    pub fn kind(&self) -> AttackKind {
        match self.params {
            AttackParams::Iid { .. } => AttackKind::Iid,
            AttackParams::CisSymmetrizing { .. } => AttackKind::CisSymmetrizing,
            AttackParams::TransSymmetrizing { .. } => AttackKind::TransSymmetrizing,
            AttackParams::IntersectionEmulation { .. } => AttackKind::IntersectionEmulation,
            AttackParams::ExhaustiveWorstCase => AttackKind::ExhaustiveWorstCase,
        }
    }

    pub fn with_spurious(mut self, rule: SpuriousRule) -> Self {
        self.spurious = rule;
        self
    }

    /// Compound states this strategy attacks.
    pub fn families(&self) -> Vec<Family> {
        if let Some(k) = self.compound_choice {
            return vec![k];
        }
        match &self.params {
            AttackParams::Iid { laws } => Family::BOTH.into_iter().filter(|k| laws[k.index()].is_some()).collect(),
            AttackParams::CisSymmetrizing { witness } => witness_family(witness).into_iter().collect(),
            _ => Family::BOTH.to_vec(),
        }
    }

    /// Whether the attack imitates a second codeword.
    pub fn needs_spurious(&self) -> bool {
        matches!(
            self.params,
            AttackParams::CisSymmetrizing { .. } | AttackParams::TransSymmetrizing { .. }
        )
    }

    fn check_active(&self, active: Family) -> Result<()> {
        if !self.families().contains(&active) {
            return Err(CavcError::Config(format!("{} attack does not cover {active}", self.kind())));
        }
        Ok(())
    }

    /// Position-independent law under σ_k for the i.i.d. kinds.
    fn iid_law(&self, model: &CavcModel, k: Family) -> Result<Option<Vec<(usize, f64)>>> {
        let states = model.family(k);
        Ok(match &self.params {
            AttackParams::Iid { laws } => match &laws[k.index()] {
                Some(p) => Some(sparse(states, p)),
                None => return Err(CavcError::Config(format!("no i.i.d. law for {k}"))),
            },
            AttackParams::IntersectionEmulation { q, .. } => Some(sparse(states, &q[k.index()])),
            _ => None,
        })
    }

    /// Symmetrizing rows (global states) per input symbol under σ_k.
    fn rows(&self, k: Family) -> Option<Vec<Vec<(usize, f64)>>> {
        let (states, rows) = match &self.params {
            AttackParams::CisSymmetrizing { witness } => (&witness.u_states, &witness.u),
            AttackParams::TransSymmetrizing { witness } => match k {
                Family::One => (&witness.u_states, &witness.u),
                Family::Two => (witness.v_states.as_ref()?, witness.v.as_ref()?),
            },
            _ => return None,
        };
        Some(rows.iter().map(|r| sparse(states, r)).collect())
    }

    /// End-to-end channel of an i.i.d. kind under σ_k.
    pub fn induced_channel(&self, model: &CavcModel, k: Family) -> Result<Option<Dmc>> {
        let q = match &self.params {
            AttackParams::Iid { laws } => laws[k.index()].as_ref(),
            AttackParams::IntersectionEmulation { q, .. } => Some(&q[k.index()]),
            _ => None,
        };
        q.map(|q| mixture_channel(model.kernel(), model.family(k), q)).transpose()
    }

    /// Draws a state sequence of length `n` under σ_`active`. Symmetrizing
    /// kinds read `spurious`, the transmitted sequence they imitate.
    pub fn sample_states<R: Rng + ?Sized>(
        &self,
        model: &CavcModel,
        active: Family,
        n: usize,
        spurious: Option<&[usize]>,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.check_active(active)?;
        if let Some(law) = self.iid_law(model, active)? {
            return Ok((0..n).map(|_| draw(&law, rng)).collect());
        }
        match self.rows(active) {
            Some(rows) => {
                let x = spurious.ok_or_else(|| CavcError::Config(format!("{} attack needs a spurious codeword", self.kind())))?;
                if x.len() != n {
                    return Err(CavcError::LengthMismatch { expected: n, got: x.len() });
                }
                x.iter()
                    .map(|&a| {
                        rows.get(a)
                            .map(|r| draw(r, rng))
                            .ok_or(CavcError::SymbolOutOfRange { symbol: a, size: rows.len() })
                    })
                    .collect()
            }
            None => Err(CavcError::Config("the exhaustive adversary has no sampling form; use exact evaluation".into())),
        }
    }

    /// Exact law of the state sequence under σ_`active` when message `sent`
    /// is transmitted as `words[sent]`.
    pub fn state_law(&self, model: &CavcModel, active: Family, words: &[Vec<usize>], sent: usize) -> Result<StateLaw> {
        self.check_active(active)?;
        let n = words.get(sent).map(Vec::len).ok_or(CavcError::Inconsistent("sent index outside codebook".into()))?;
        if let Some(law) = self.iid_law(model, active)? {
            return Ok(StateLaw {
                components: vec![(1.0, vec![law; n])],
            });
        }
        let rows = self
            .rows(active)
            .ok_or_else(|| CavcError::Config("the exhaustive adversary has no state law".into()))?;
        let components = self
            .spurious
            .weights(sent, words.len())
            .into_iter()
            .map(|(j, w)| (w, words[j].iter().map(|&a| rows[a].clone()).collect()))
            .collect();
        Ok(StateLaw { components })
    }
}

fn draw<R: Rng + ?Sized>(law: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(s, p) in law {
        acc += p;
        if u < acc {
            return s;
        }
    }
    law.last().expect("nonempty law").0
}

/// A state sequence drawn by a symmetrizing attack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSample {
    pub family: Family,
    pub spurious: usize,
    pub states: Vec<usize>,
}

/// Picks a spurious message by `rule` and draws sᵢ ~ U(·|x_{m′,i}); the
/// active compound state is the witness's family.
pub fn cis_attack(
    model: &CavcModel,
    witness: &SymmetryWitness,
    codewords: &[Vec<usize>],
    sent: usize,
    rule: SpuriousRule,
    seed: u64,
) -> Result<AttackSample> {
    let strategy = cis_strategy(witness.clone(), rule)?;
    let family = strategy.families()[0];
    symmetrizing_sample(model, &strategy, family, codewords, sent, seed)
}

/// Under σ₁ imitates a spurious codeword through U, under σ₂ through V.
pub fn trans_attack(
    model: &CavcModel,
    witness: &SymmetryWitness,
    codewords: &[Vec<usize>],
    sent: usize,
    active: Family,
    rule: SpuriousRule,
    seed: u64,
) -> Result<AttackSample> {
    let strategy = trans_strategy(witness.clone(), rule)?;
    symmetrizing_sample(model, &strategy, active, codewords, sent, seed)
}

fn symmetrizing_sample(
    model: &CavcModel,
    strategy: &AttackStrategy,
    family: Family,
    codewords: &[Vec<usize>],
    sent: usize,
    seed: u64,
) -> Result<AttackSample> {
    if codewords.is_empty() || sent >= codewords.len() {
        return Err(CavcError::Config("attack needs a nonempty codebook containing the sent message".into()));
    }
    let mut rng = rng_from_seed(seed);
    let spurious = strategy.spurious.choose(sent, codewords.len(), &mut rng);
    let x = &codewords[spurious];
    let states = strategy.sample_states(model, family, x.len(), Some(x), &mut rng)?;
    Ok(AttackSample {
        family,
        spurious,
        states,
    })
}

/// P(y) for every y ∈ Yⁿ (first position most significant) when `x` is sent
/// and states follow `law`.
pub fn output_distribution(model: &CavcModel, x: &[usize], law: &StateLaw) -> Vec<f64> {
    let ny = model.ny();
    let kern = model.kernel();
    let mut total = vec![0.0; ny.pow(x.len() as u32)];
    let mut row = vec![0.0; ny];
    for (weight, positions) in &law.components {
        let mut dist = vec![*weight];
        for (&a, states) in x.iter().zip(positions) {
            row.iter_mut().for_each(|v| *v = 0.0);
            for &(s, p) in states {
                for (acc, &w) in row.iter_mut().zip(kern.row(a, s)) {
                    *acc += p * w;
                }
            }
            dist = extend(&dist, &row);
        }
        for (t, d) in total.iter_mut().zip(dist) {
            *t += d;
        }
    }
    total
}

fn extend(dist: &[f64], row: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dist.len() * row.len());
    for &d in dist {
        for &r in row {
            out.push(d * r);
        }
    }
    out
}

/// Output law for a fixed state sequence: Wⁿ(·|x, s).
fn fixed_state_distribution(model: &CavcModel, x: &[usize], s: &[usize]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for (&a, &st) in x.iter().zip(s) {
        dist = extend(&dist, model.kernel().row(a, st));
    }
    dist
}

fn index_to_sequence(mut idx: usize, base: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

/// Decoder verdicts on every y ∈ Yⁿ, in the order of
/// [`output_distribution`].
#[derive(Debug, Clone)]
pub struct DecodeTable {
    pub n: usize,
    pub ny: usize,
    pub verdicts: Vec<Verdict>,
}

impl DecodeTable {
    pub fn build(decoder: &dyn Decoder, ny: usize, budget: f64) -> Result<Self> {
        let n = decoder.block_len();
        let size = (ny as f64).powi(n as i32);
        if size > budget {
            return Err(CavcError::BudgetExceeded {
                needed: size,
                budget,
                what: "decode table over all output blocks".into(),
            });
        }
        let verdicts = (0..size as usize)
            .into_par_iter()
            .map(|i| decoder.decode(&index_to_sequence(i, ny, n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecodeTable { n, ny, verdicts })
    }

    pub fn task(&self) -> Option<Task> {
        self.verdicts.first().map(|v| v.task)
    }

    /// Σ_y P(y)·1[verdict(y) ∉ correct set for (sent, active)].
    pub fn error_under(&self, dist: &[f64], sent: usize, active: Family) -> f64 {
        dist.iter()
            .zip(&self.verdicts)
            .filter(|(&p, v)| p > 0.0 && v.is_error(sent, active))
            .map(|(p, _)| p)
            .sum()
    }
}

/// Exact average error per attacked compound state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactAttackError {
    pub attack: AttackKind,
    /// Message-averaged error under σ₁ and σ₂ (`None` when not attacked).
    pub per_family: [Option<f64>; 2],
    /// max over attacked compound states.
    pub max: f64,
    /// Worst state sequence per family (exhaustive attack only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_states: Option<[Option<Vec<usize>>; 2]>,
}

/// Exact error of `table` against `strategy` when message i is sent as
/// `words[i]`.
pub fn exact_attack_error(
    model: &CavcModel,
    words: &[Vec<usize>],
    table: &DecodeTable,
    strategy: &AttackStrategy,
    budget: f64,
) -> Result<ExactAttackError> {
    if words.is_empty() {
        return Err(CavcError::Config("empty codebook".into()));
    }
    if let Some(w) = words.iter().find(|w| w.len() != table.n) {
        return Err(CavcError::LengthMismatch { expected: table.n, got: w.len() });
    }
    let mut per_family = [None, None];
    let mut worst_states: [Option<Vec<usize>>; 2] = [None, None];
    for k in strategy.families() {
        let err = if strategy.kind() == AttackKind::ExhaustiveWorstCase {
            let w = exhaustive_worst_case(model, words, table, k, budget)?;
            worst_states[k.index()] = Some(w.states);
            w.error
        } else {
            let mut total = 0.0;
            for (i, x) in words.iter().enumerate() {
                let law = strategy.state_law(model, k, words, i)?;
                total += table.error_under(&output_distribution(model, x, &law), i, k);
            }
            total / words.len() as f64
        };
        per_family[k.index()] = Some(err);
    }
    let max = per_family.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    Ok(ExactAttackError {
        attack: strategy.kind(),
        per_family,
        max,
        worst_states: (strategy.kind() == AttackKind::ExhaustiveWorstCase).then_some(worst_states),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCase {
    pub family: Family,
    /// Lexicographically first maximizer.
    pub states: Vec<usize>,
    pub error: f64,
    pub sequences: usize,
}

/// max over s ∈ S_kⁿ of the message-averaged error, by enumeration.
pub fn exhaustive_worst_case(
    model: &CavcModel,
    words: &[Vec<usize>],
    table: &DecodeTable,
    k: Family,
    budget: f64,
) -> Result<WorstCase> {
    let states = model.family(k);
    let n = table.n;
    let count = (states.len() as f64).powi(n as i32);
    let needed = count * table.verdicts.len() as f64 * words.len() as f64;
    if needed > budget {
        return Err(CavcError::BudgetExceeded {
            needed,
            budget,
            what: "exhaustive state enumeration".into(),
        });
    }
    let errors: Vec<f64> = (0..count as usize)
        .into_par_iter()
        .map(|idx| {
            let s: Vec<usize> = index_to_sequence(idx, states.len(), n).into_iter().map(|i| states[i]).collect();
            let total: f64 = words
                .iter()
                .enumerate()
                .map(|(i, x)| table.error_under(&fixed_state_distribution(model, x, &s), i, k))
                .sum();
            total / words.len() as f64
        })
        .collect();
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e > errors[best] + 1e-12 {
            best = i;
        }
    }
    Ok(WorstCase {
        family: k,
        states: index_to_sequence(best, states.len(), n).into_iter().map(|i| states[i]).collect(),
        error: errors[best],
        sequences: errors.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConverseCase {
    /// One family is cis-symmetrizable.
    Cis(Family),
    /// The model is trans-symmetrizable.
    Trans,
    /// The two hulls meet.
    Emulation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingBoundReport {
    pub case: ConverseCase,
    pub task: Task,
    pub m: usize,
    pub per_family: [Option<f64>; 2],
    pub max_error: f64,
    /// Quantity the bound constrains: the attacked family's error (cis) or
    /// the sum over both families (trans, emulation).
    pub bounded: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Exact error against the averaged-state adversary of the converse, with
/// the lower bound it must respect: P_k ≥ (M−1)/(2M) for a cis witness,
/// P₁+P₂ ≥ (M−1)/M for a trans witness and P₁+P₂ ≥ 1 for hull emulation
/// against the and- and identify tasks.
pub fn averaging_attack_error_bound(
    model: &CavcModel,
    words: &[Vec<usize>],
    table: &DecodeTable,
    case: ConverseCase,
) -> Result<AveragingBoundReport> {
    let task = table.task().ok_or_else(|| CavcError::Config("empty decode table".into()))?;
    let m = words.len() as f64;
    let strategy = match case {
        ConverseCase::Cis(k) => cis_strategy(check_cis(model, k, DEFAULT_TOL)?, SpuriousRule::Uniform)?,
        ConverseCase::Trans => trans_strategy(check_trans(model, DEFAULT_TOL)?, SpuriousRule::Uniform)?,
        ConverseCase::Emulation => {
            if !matches!(task, Task::And | Task::Identify) {
                return Err(CavcError::Config(format!("the emulation bound concerns and/identify, not {task}")));
            }
            let s = emulation_strategy(model)?;
            if let AttackParams::IntersectionEmulation { distance, .. } = s.params {
                if distance > DEFAULT_TOL {
                    return Err(CavcError::Config(format!("hulls are {distance} apart; nothing to emulate")));
                }
            }
            s
        }
    };
    let e = exact_attack_error(model, words, table, &strategy, DEFAULT_ENUMERATION_BUDGET)?;
    let sum: f64 = e.per_family.iter().flatten().sum();
    let (bounded, bound) = match case {
        ConverseCase::Cis(k) => (e.per_family[k.index()].unwrap_or(0.0), (m - 1.0) / (2.0 * m)),
        ConverseCase::Trans => (sum, (m - 1.0) / m),
        ConverseCase::Emulation => (sum, 1.0),
    };
    Ok(AveragingBoundReport {
        case,
        task,
        m: words.len(),
        per_family: e.per_family,
        max_error: e.max,
        bounded,
        bound,
        holds: bounded >= bound - 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::codec::{Codebook, JointDecoder, JointOptions, MmiDecoder};

    fn pair_book(n: usize) -> Vec<Vec<usize>> {
        vec![vec![0; n], vec![1; n]]
    }

    #[test]
    fn point_mass_iid_is_constant() {
        let m = catalog::bsc_family_model(&[0.1, 0.3], &[0.2]);
        let a = iid_attack(&m, Family::One, SimplexVector::point_mass(2, 1)).unwrap();
        let s = a.sample_states(&m, Family::One, 20, None, &mut rng_from_seed(1)).unwrap();
        assert!(s.iter().all(|&v| v == 1));
        assert!(a.sample_states(&m, Family::Two, 3, None, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn cross_family_support_rejected() {
        let m = catalog::bsc_family_model(&[0.1], &[0.2]);
        assert!(iid_attack_global(&m, &SimplexVector::uniform(2)).is_err());
        let a = iid_attack_global(&m, &SimplexVector::point_mass(2, 1)).unwrap();
        assert_eq!(a.families(), vec![Family::Two]);
    }

    #[test]
    fn bsc_mixture_crossover() {
        let m = catalog::bsc_family_model(&[0.1, 0.3], &[0.2]);
        let a = iid_attack(&m, Family::One, SimplexVector::uniform(2)).unwrap();
        let ch = a.induced_channel(&m, Family::One).unwrap().unwrap();
        assert!((ch.prob(0, 1) - 0.2).abs() < 1e-12);
        let n = 100_000;
        let mut rng = rng_from_seed(3);
        let s = a.sample_states(&m, Family::One, n, None, &mut rng).unwrap();
        let y = crate::channel::channel_sample(m.kernel(), &vec![0; n], &s, 4).unwrap();
        let rate = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        assert!((rate - 0.2).abs() < 4.0 * (0.16f64 / n as f64).sqrt(), "{rate}");
    }

    #[test]
    fn adder_cis_attack_copies_spurious_codeword() {
        let m = catalog::adder_avc();
        let w = check_cis(&m, Family::One, DEFAULT_TOL).unwrap();
        let words = vec![vec![0, 0], vec![1, 1]];
        let a = cis_attack(&m, &w, &words, 0, SpuriousRule::ExcludeSent, 5).unwrap();
        assert_eq!(a.spurious, 1);
        assert_eq!(a.states, vec![1, 1]);
        // a single codeword imitates itself
        let one = cis_attack(&m, &w, &words[..1], 0, SpuriousRule::ExcludeSent, 5).unwrap();
        assert_eq!(one.spurious, 0);
    }

    #[test]
    fn cis_symmetry_makes_likelihoods_equal() {
        let m = catalog::adder_avc();
        let w = check_cis(&m, Family::One, DEFAULT_TOL).unwrap();
        let s = cis_strategy(w, SpuriousRule::ExcludeSent).unwrap();
        let words = vec![vec![0, 1, 1, 0], vec![1, 1, 0, 0]];
        let p0 = output_distribution(&m, &words[0], &s.state_law(&m, Family::One, &words, 0).unwrap());
        let p1 = output_distribution(&m, &words[1], &s.state_law(&m, Family::One, &words, 1).unwrap());
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((p0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn example_one_trans_attack_swaps_roles() {
        let m = catalog::example_one(2);
        let w = check_trans(&m, DEFAULT_TOL).unwrap();
        let words = pair_book(2);
        let a = trans_attack(&m, &w, &words, 0, Family::One, SpuriousRule::ExcludeSent, 0).unwrap();
        // state (x', 1) with x' = 1 has index 1
        assert_eq!(a.states, vec![1, 1]);
        let s = trans_strategy(w, SpuriousRule::ExcludeSent).unwrap();
        let p = output_distribution(&m, &words[0], &s.state_law(&m, Family::One, &words, 0).unwrap());
        let q = output_distribution(&m, &words[1], &s.state_law(&m, Family::Two, &words, 1).unwrap());
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_witness_rejected() {
        let m = catalog::example_one(2);
        let w = check_cis(&m, Family::One, DEFAULT_TOL).unwrap();
        assert!(!w.feasible);
        assert!(matches!(
            cis_strategy(w, SpuriousRule::ExcludeSent),
            Err(CavcError::InfeasibleWitness { .. })
        ));
    }

    #[test]
    fn adder_converse_bound_for_mmi() {
        let m = catalog::adder_avc();
        let book = Codebook::from_codewords(vec![vec![0, 0, 1, 1], vec![1, 1, 0, 0]], 2).unwrap();
        let d = MmiDecoder::new(book.clone(), 3, 0.05);
        let table = DecodeTable::build(&d, 3, DEFAULT_TABLE_BUDGET).unwrap();
        let r = averaging_attack_error_bound(&m, book.codewords(), &table, ConverseCase::Cis(Family::One)).unwrap();
        assert_eq!(r.bound, 0.25);
        assert!(r.holds, "{r:?}");
        assert!(r.max_error >= 0.25);
    }

    #[test]
    fn example_one_trans_bound_for_or_decoder() {
        let m = catalog::example_one(2);
        let book = Codebook::from_codewords(vec![vec![0, 0, 1, 1], vec![1, 1, 0, 0]], 2).unwrap();
        let d = JointDecoder::new(book.clone(), m.clone(), Task::Or, JointOptions::default()).unwrap();
        let table = DecodeTable::build(&d, m.ny(), DEFAULT_TABLE_BUDGET).unwrap();
        let r = averaging_attack_error_bound(&m, book.codewords(), &table, ConverseCase::Trans).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.max_error >= 0.25);
    }

    #[test]
    fn emulation_bound_on_shared_families() {
        let m = catalog::adder_avc();
        let book = Codebook::from_codewords(vec![vec![0, 1, 0, 1], vec![1, 0, 1, 0]], 2).unwrap();
        let d = JointDecoder::new(book.clone(), m.clone(), Task::And, JointOptions::default()).unwrap();
        let table = DecodeTable::build(&d, 3, DEFAULT_TABLE_BUDGET).unwrap();
        let r = averaging_attack_error_bound(&m, book.codewords(), &table, ConverseCase::Emulation).unwrap();
        assert!(r.bounded >= 1.0 - 1e-9, "{r:?}");
    }

    #[test]
    fn noiseless_worst_case_is_zero() {
        let m = catalog::noiseless(2);
        let book = Codebook::from_codewords(vec![vec![0, 0, 1], vec![1, 0, 0]], 2).unwrap();
        let d = MmiDecoder::new(book.clone(), 2, 0.0);
        let table = DecodeTable::build(&d, 2, DEFAULT_TABLE_BUDGET).unwrap();
        let w = exhaustive_worst_case(&m, book.codewords(), &table, Family::One, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert_eq!(w.error, 0.0);
        assert_eq!(w.states, vec![0, 0, 0]);
    }

    #[test]
    fn adder_worst_case_dominates_iid() {
        let m = catalog::adder_avc();
        let book = Codebook::from_codewords(vec![vec![0, 0, 1], vec![0, 1, 0]], 2).unwrap();
        let d = MmiDecoder::new(book.clone(), 3, 0.0);
        let table = DecodeTable::build(&d, 3, DEFAULT_TABLE_BUDGET).unwrap();
        let w = exhaustive_worst_case(&m, book.codewords(), &table, Family::One, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert!(w.error >= 0.25, "{w:?}");
        let iid = default_strategy(&m, AttackKind::Iid, None).unwrap();
        let e = exact_attack_error(&m, book.codewords(), &table, &iid, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert!(e.max <= w.error + 1e-12);
    }

    #[test]
    fn budget_guard() {
        let m = catalog::adder_avc();
        let book = Codebook::from_codewords(vec![vec![0, 1]], 2).unwrap();
        let d = MmiDecoder::new(book.clone(), 3, 0.0);
        let table = DecodeTable::build(&d, 3, DEFAULT_TABLE_BUDGET).unwrap();
        assert!(matches!(
            exhaustive_worst_case(&m, book.codewords(), &table, Family::One, 10.0),
            Err(CavcError::BudgetExceeded { .. })
        ));
        assert!(DecodeTable::build(&d, 3, 5.0).is_err());
    }

    #[test]
    fn exhaustive_is_monotone_in_the_family() {
        for seed in 0..10 {
            let small = catalog::random_half_model(2, 1, 2, 3, seed);
            let big = CavcModel::new(small.kernel().clone(), vec![0, 2], vec![1, 2]).unwrap();
            let book = Codebook::from_codewords(vec![vec![0, 1, 1], vec![1, 1, 0]], 2).unwrap();
            let d = MmiDecoder::new(book.clone(), 3, 0.0);
            let table = DecodeTable::build(&d, 3, DEFAULT_TABLE_BUDGET).unwrap();
            let a = exhaustive_worst_case(&small, book.codewords(), &table, Family::One, 1e8).unwrap();
            let b = exhaustive_worst_case(&big, book.codewords(), &table, Family::One, 1e8).unwrap();
            assert!(b.error >= a.error - 1e-12);
        }
    }
}
