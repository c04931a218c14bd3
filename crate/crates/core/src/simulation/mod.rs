//! End-to-end error evaluation by Monte Carlo or exhaustive enumeration, and
//! empirical checks of the concentration bounds the schemes rely on.

mod concentration;
mod typeclass;

pub use concentration::{
    lb1_check, permutation_split_check, urn_concentration_check, Lb1Report, PermutationSplitReport, TailCheck,
    UrnReport,
};

use crate::adversary::{
    default_strategy, exact_attack_error, iid_attack, AttackKind, AttackStrategy, DecodeTable, SpuriousRule,
    DEFAULT_ENUMERATION_BUDGET, DEFAULT_TABLE_BUDGET,
};
use crate::channel::{channel_sample_with, CavcModel, Family, SimplexVector};
use crate::codec::codebook::{base_word, shuffled};
use crate::codec::mmi::{clears, mi_from_counts, pair_counts, report_from_clearing, report_from_statistics};
use crate::codec::{
    combine_frame_outcomes, frame_decode, generate_codebook, identify_state, mmi_statistics, realizable_counts,
    training_length, Codebook, Decoder, IdentifyDecoder, JointDecoder, JointOptions, MmiDecoder, MmiReport,
    SearchMode, Task, TransmissionFrame, DEFAULT_ETA, DEFAULT_SEARCH_BUDGET,
};
use crate::error::{CavcError, Result};
use crate::ext::format_sig;
use crate::rng::{derive_labeled, rng_from_seed, CavcRng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use typeclass::ClearingSampler;

/// Entrywise tolerance of the training-block identifier.
pub const DEFAULT_IDENTIFY_EPS: f64 = 0.065;
/// Margin of the MMI threshold above the code rate.
pub const DEFAULT_MMI_DELTA: f64 = 0.02;
/// Above this many codewords a fresh codebook is not materialized.
pub const TYPE_CLASS_MIN_M: usize = 4096;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    #[default]
    MonteCarlo,
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    /// Random constant-composition code, MMI threshold decoding, training
    /// block with a random permutation when the state matters.
    #[default]
    Mmi,
    /// Fixed codebook with the joint-type decoders.
    JointType,
}

/// How codewords other than the sent and imitated ones are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    Auto,
    /// Every codeword is drawn.
    Materialized,
    /// Only the number of unrelated codewords clearing the MMI threshold is
    /// drawn, from its exact law given the output type.
    TypeClass,
    /// No sampling: every output block is enumerated.
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSpec {
    pub rate: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    /// Input distribution; rounded to the nearest realizable type.
    pub composition: Option<Vec<f64>>,
    pub fresh_per_trial: bool,
}

impl Default for CodebookSpec {
    fn default() -> Self {
        CodebookSpec {
            rate: None,
            m: None,
            composition: None,
            fresh_per_trial: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IidLaw {
    #[default]
    Uniform,
    /// The worst, per family, of every point mass and the uniform law.
    Worst,
    Weights {
        one: Vec<f64>,
        two: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Attacked compound state; `None` follows the per-kind rule.
    pub family: Option<Family>,
    pub iid_law: IidLaw,
    pub spurious: SpuriousRule,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::Iid,
            family: None,
            iid_law: IidLaw::Uniform,
            spurious: SpuriousRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSpec {
    pub kind: DecoderKind,
    pub eta: f64,
    pub eps: f64,
    pub delta: f64,
    pub search: SearchMode,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        DecoderSpec {
            kind: DecoderKind::Mmi,
            eta: DEFAULT_ETA,
            eps: DEFAULT_IDENTIFY_EPS,
            delta: DEFAULT_MMI_DELTA,
            search: SearchMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario_id: String,
    pub task: Task,
    /// Payload blocklength.
    pub n: usize,
    pub codebook: CodebookSpec,
    pub attack: AttackSpec,
    pub decoder: DecoderSpec,
    /// Training block length; defaults to |X|·⌈log₂ n⌉ and must be a
    /// multiple of |X|.
    pub training_length: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub mode: EvalMode,
    pub sampling: Sampling,
    pub budget: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario_id: "scenario".into(),
            task: Task::Com,
            n: 0,
            codebook: CodebookSpec::default(),
            attack: AttackSpec::default(),
            decoder: DecoderSpec::default(),
            training_length: None,
            trials: 1000,
            seed: 0,
            mode: EvalMode::MonteCarlo,
            sampling: Sampling::Auto,
            budget: DEFAULT_ENUMERATION_BUDGET,
        }
    }
}

/// M = ⌈2^{nR}⌉.
pub fn messages_for_rate(n: usize, rate: f64) -> usize {
    let m = (n as f64 * rate).exp2();
    // guard against 2^{nR} landing a hair above an integer
    let r = m.round();
    if (m - r).abs() <= 1e-9 * r.max(1.0) {
        r.max(1.0) as usize
    } else {
        m.ceil() as usize
    }
}

impl ExperimentConfig {
    /// Fills every defaulted field (M, rate, composition, training length,
    /// sampling) and validates the combination.
    pub fn resolved(&self, model: &CavcModel) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        let nx = model.nx();
        if c.n == 0 {
            return Err(CavcError::Config("n must be positive".into()));
        }
        if c.trials == 0 && c.mode == EvalMode::MonteCarlo {
            return Err(CavcError::Config("trials must be positive".into()));
        }
        let m = match (c.codebook.rate, c.codebook.m) {
            (Some(r), Some(m)) => {
                if messages_for_rate(c.n, r) != m {
                    return Err(CavcError::Config(format!(
                        "rate {r} at n = {} gives M = {}, not {m}",
                        c.n,
                        messages_for_rate(c.n, r)
                    )));
                }
                m
            }
            (Some(r), None) => {
                if !(r >= 0.0) {
                    return Err(CavcError::Config(format!("rate must be nonnegative, got {r}")));
                }
                messages_for_rate(c.n, r)
            }
            (None, Some(m)) => m,
            (None, None) if c.task == Task::Identify => 1,
            (None, None) => return Err(CavcError::Config("codebook needs a rate or M".into())),
        };
        if m == 0 {
            return Err(CavcError::Config("M must be positive".into()));
        }
        c.codebook.m = Some(m);
        c.codebook.rate = Some((m as f64).log2() / c.n as f64);
        let p = match &c.codebook.composition {
            Some(w) => SimplexVector::new(w.clone())?,
            None => SimplexVector::uniform(nx),
        };
        if p.len() != nx {
            return Err(CavcError::LengthMismatch { expected: nx, got: p.len() });
        }
        let counts = realizable_counts(&p, c.n);
        c.codebook.composition = Some(counts.iter().map(|&k| k as f64 / c.n as f64).collect());
        let framed = c.task != Task::Com;
        if framed {
            let l = c.training_length.unwrap_or_else(|| training_length(nx, c.n.max(2)));
            if l == 0 || l % nx != 0 {
                return Err(CavcError::Config(format!("training length {l} must be a positive multiple of |X| = {nx}")));
            }
            c.training_length = Some(l);
        } else {
            c.training_length = None;
        }
        if c.decoder.kind == DecoderKind::JointType && c.task == Task::Identify {
            return Err(CavcError::Config("the identify task uses the training identifier, not a joint-type decoder".into()));
        }
        if c.mode == EvalMode::Exact {
            c.sampling = Sampling::Enumerated;
            if c.decoder.kind == DecoderKind::Mmi && matches!(c.task, Task::And | Task::Or) {
                return Err(CavcError::Config(
                    "exact mode covers unframed decoders only (com, identify, or joint-type)".into(),
                ));
            }
        } else {
            if c.attack.kind == AttackKind::ExhaustiveWorstCase {
                return Err(CavcError::Config("the exhaustive adversary needs exact mode".into()));
            }
            let fast_ok = c.decoder.kind == DecoderKind::Mmi && c.task != Task::Identify && c.codebook.fresh_per_trial;
            c.sampling = match c.sampling {
                Sampling::Auto if fast_ok && m >= TYPE_CLASS_MIN_M => Sampling::TypeClass,
                Sampling::Auto => Sampling::Materialized,
                Sampling::TypeClass if !fast_ok => {
                    return Err(CavcError::Config(
                        "type-class sampling needs the MMI scheme with a fresh codebook per trial".into(),
                    ))
                }
                Sampling::Enumerated => return Err(CavcError::Config("enumerated sampling needs exact mode".into())),
                s => s,
            };
        }
        Ok(c)
    }

    fn m(&self) -> usize {
        self.codebook.m.unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyEstimate {
    pub family: Family,
    /// The attack achieving this family's error.
    pub attack: String,
    /// Error count (Monte Carlo) or probability (exact).
    pub errors: f64,
    pub trials: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Max over these is the headline.
    pub per_family: Vec<FamilyEstimate>,
    pub trials: usize,
    pub exact: bool,
    /// Monte Carlo fixes the adversary's law; only exact mode with the
    /// exhaustive adversary maximizes over state sequences.
    pub worst_case: bool,
    pub sampling: Sampling,
}

/// Wilson score interval at 95%.
pub fn wilson_interval(errors: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).clamp(0.0, 1.0).min(p), (center + half).clamp(0.0, 1.0).max(p))
}

fn headline(per_family: Vec<FamilyEstimate>, exact: bool, worst_case: bool, sampling: Sampling, trials: usize) -> ErrorEstimate {
    let best = per_family
        .iter()
        .fold(None::<&FamilyEstimate>, |b, f| match b {
            Some(b) if b.estimate >= f.estimate => Some(b),
            _ => Some(f),
        })
        .cloned();
    let (estimate, ci_low, ci_high) = best.map(|b| (b.estimate, b.ci_low, b.ci_high)).unwrap_or((0.0, 0.0, 0.0));
    ErrorEstimate {
        estimate,
        ci_low,
        ci_high,
        per_family,
        trials,
        exact,
        worst_case,
        sampling,
    }
}

fn attack_label(kind: AttackKind, law: &str) -> String {
    if law.is_empty() {
        kind.to_string()
    } else {
        format!("{kind}:{law}")
    }
}

/// (label, strategy) candidates attacking compound state `k`.
fn candidates(cfg: &ExperimentConfig, model: &CavcModel, k: Family) -> Result<Vec<(String, AttackStrategy)>> {
    let spec = &cfg.attack;
    let mut out = Vec::new();
    if spec.kind == AttackKind::Iid {
        let size = model.family(k).len();
        match &spec.iid_law {
            IidLaw::Uniform => out.push(("uniform".to_string(), SimplexVector::uniform(size))),
            IidLaw::Worst => {
                for i in 0..size {
                    out.push((format!("s{}", model.family(k)[i]), SimplexVector::point_mass(size, i)));
                }
                if size > 1 {
                    out.push(("uniform".to_string(), SimplexVector::uniform(size)));
                }
            }
            IidLaw::Weights { one, two } => {
                let w = if k == Family::One { one } else { two };
                out.push(("weights".to_string(), SimplexVector::new(w.clone())?));
            }
        }
        return out
            .into_iter()
            .map(|(l, p)| Ok((attack_label(AttackKind::Iid, &l), iid_attack(model, k, p)?)))
            .collect();
    }
    let mut s = default_strategy(model, spec.kind, Some(k))?;
    s.spurious = spec.spurious;
    Ok(vec![(attack_label(spec.kind, ""), s)])
}

/// Compound states the configured attack covers.
fn attacked_families(cfg: &ExperimentConfig, model: &CavcModel) -> Result<Vec<Family>> {
    if let Some(k) = cfg.attack.family {
        return Ok(vec![k]);
    }
    Ok(match cfg.attack.kind {
        AttackKind::CisSymmetrizing => default_strategy(model, cfg.attack.kind, None)?.families(),
        _ => Family::BOTH.to_vec(),
    })
}

fn training_block(nx: usize, len: usize) -> Vec<usize> {
    (0..nx).flat_map(|a| std::iter::repeat(a).take(len / nx)).collect()
}

fn fixed_codebook(cfg: &ExperimentConfig) -> Result<Codebook> {
    let p = SimplexVector::new(cfg.codebook.composition.clone().expect("resolved"))?;
    generate_codebook(&p, cfg.n, cfg.m(), derive_labeled(cfg.seed, "codebook", 0))
}

fn family_label(k: Family) -> &'static str {
    match k {
        Family::One => "sigma1",
        Family::Two => "sigma2",
    }
}

struct Runner<'a> {
    cfg: ExperimentConfig,
    model: &'a CavcModel,
    p: SimplexVector,
    base: Vec<usize>,
    training: Vec<usize>,
    threshold: f64,
    fixed: Option<Codebook>,
    joint: Option<JointDecoder>,
    clearing: Option<ClearingSampler>,
}

impl<'a> Runner<'a> {
    fn new(cfg: ExperimentConfig, model: &'a CavcModel) -> Result<Self> {
        let composition = cfg.codebook.composition.clone().expect("resolved");
        let p = SimplexVector::new(composition)?;
        let counts = realizable_counts(&p, cfg.n);
        let base = base_word(&counts);
        let training = training_block(model.nx(), cfg.training_length.unwrap_or(0));
        let threshold = cfg.codebook.rate.expect("resolved") + cfg.decoder.delta;
        let fixed = if cfg.codebook.fresh_per_trial { None } else { Some(fixed_codebook(&cfg)?) };
        let joint = match (&fixed, cfg.decoder.kind) {
            (Some(book), DecoderKind::JointType) => Some(JointDecoder::new(
                book.clone(),
                model.clone(),
                cfg.task,
                joint_options(&cfg),
            )?),
            _ => None,
        };
        let clearing = (cfg.sampling == Sampling::TypeClass).then(|| ClearingSampler::new(counts.clone(), model.ny(), threshold));
        Ok(Runner {
            cfg,
            model,
            p,
            base,
            training,
            threshold,
            fixed,
            joint,
            clearing,
        })
    }

    fn trial(&self, k: Family, strategy: &AttackStrategy, t: usize) -> Result<bool> {
        let mut rng = rng_from_seed(derive_labeled(self.cfg.seed, family_label(k), t as u64));
        match (self.cfg.decoder.kind, self.cfg.task) {
            (_, Task::Identify) => {
                let s = strategy.sample_states(self.model, k, self.training.len(), Some(&self.training), &mut rng)?;
                let y = channel_sample_with(self.model.kernel(), &self.training, &s, &mut rng)?;
                Ok(identify_state(&self.training, &y, self.model, self.cfg.decoder.eps)?.verdict.is_error(0, k))
            }
            (DecoderKind::JointType, task) => {
                let m = self.cfg.m();
                let fresh;
                let (book, decoder) = match (&self.fixed, &self.joint) {
                    (Some(b), Some(d)) => (b, d),
                    _ => {
                        let b = generate_codebook(&self.p, self.cfg.n, m, rng.gen())?;
                        fresh = JointDecoder::new(b, self.model.clone(), task, joint_options(&self.cfg))?;
                        (&fresh.codebook, &fresh)
                    }
                };
                let sent = rng.gen_range(0..m);
                let spurious = strategy
                    .needs_spurious()
                    .then(|| book.codeword(strategy.spurious.choose(sent, m, &mut rng)).to_vec());
                let s = strategy.sample_states(self.model, k, self.cfg.n, spurious.as_deref(), &mut rng)?;
                let y = channel_sample_with(self.model.kernel(), book.codeword(sent), &s, &mut rng)?;
                Ok(decoder.decode(&y)?.is_error(sent, k))
            }
            (DecoderKind::Mmi, task) => self.mmi_trial(k, strategy, task, &mut rng),
        }
    }

    fn mmi_trial(&self, k: Family, strategy: &AttackStrategy, task: Task, rng: &mut CavcRng) -> Result<bool> {
        let (n, m, nx, ny) = (self.cfg.n, self.cfg.m(), self.model.nx(), self.model.ny());
        let sent = rng.gen_range(0..m);
        let framed = task != Task::Com;
        let frame = framed.then(|| TransmissionFrame::random(n, self.training.len(), rng.gen()));
        let transmit = |cw: &[usize]| -> Result<Vec<usize>> {
            match &frame {
                Some(f) => {
                    let logical: Vec<usize> = cw.iter().chain(&self.training).copied().collect();
                    f.scatter(&logical)
                }
                None => Ok(cw.to_vec()),
            }
        };
        let spurious_index = strategy.needs_spurious().then(|| strategy.spurious.choose(sent, m, rng));
        let fresh_book = match (&self.clearing, &self.fixed) {
            (None, None) => Some(generate_codebook(&self.p, n, m, rng.gen())?),
            _ => None,
        };
        let book = self.fixed.as_ref().or(fresh_book.as_ref());
        let (x_sent, x_spurious): (Vec<usize>, Option<Vec<usize>>) = match book {
            Some(book) => (
                book.codeword(sent).to_vec(),
                spurious_index.map(|j| book.codeword(j).to_vec()),
            ),
            None => {
                let x = shuffled(&self.base, rng);
                let spur = spurious_index.map(|j| if j == sent { x.clone() } else { shuffled(&self.base, rng) });
                (x, spur)
            }
        };
        let tx = transmit(&x_sent)?;
        let tx_spurious = x_spurious.as_deref().map(transmit).transpose()?;
        let s = strategy.sample_states(self.model, k, tx.len(), tx_spurious.as_deref(), rng)?;
        let y = channel_sample_with(self.model.kernel(), &tx, &s, rng)?;
        let (payload, training_out) = match &frame {
            Some(f) => frame_decode(&y, f)?,
            None => (y, Vec::new()),
        };
        let report: MmiReport = match &self.clearing {
            Some(sampler) => {
                let mut clearing = Vec::new();
                let stat = mi_from_counts(&pair_counts(&x_sent, &payload, nx, ny), nx, ny);
                if clears(stat, self.threshold) {
                    clearing.push(sent);
                }
                let mut materialized = 1;
                if let (Some(j), Some(x)) = (spurious_index, &x_spurious) {
                    if j != sent {
                        materialized += 1;
                        if clears(mi_from_counts(&pair_counts(x, &payload, nx, ny), nx, ny), self.threshold) {
                            clearing.push(j);
                        }
                    }
                }
                let others = m - materialized;
                let extra = sampler.count_clearing(&payload, others, rng)?;
                // stand-in indices for unrelated clearing codewords; only
                // their number and distinctness from `sent` matter
                let mut next = 0;
                for _ in 0..extra.min(2) {
                    while next == sent || Some(next) == spurious_index {
                        next += 1;
                    }
                    clearing.push(next);
                    next += 1;
                }
                clearing.sort_unstable();
                let statistic = (clearing == [sent]).then_some(stat);
                report_from_clearing(clearing, self.threshold, statistic)
            }
            None => {
                let book = book.expect("materialized codebook");
                report_from_statistics(&mmi_statistics(book, &payload, ny)?, self.threshold)
            }
        };
        let verdict = if framed {
            let ident = identify_state(&self.training, &training_out, self.model, self.cfg.decoder.eps)?;
            combine_frame_outcomes(task, &report, &ident)
        } else {
            report.verdict
        };
        Ok(verdict.is_error(sent, k))
    }
}

fn joint_options(cfg: &ExperimentConfig) -> JointOptions {
    JointOptions {
        eta: cfg.decoder.eta,
        mode: cfg.decoder.search,
        budget: DEFAULT_SEARCH_BUDGET,
    }
}

/// Monte Carlo estimate of the configured scheme's error under the
/// configured attack, one batch of trials per attacked compound state.
pub fn run_trials(config: &ExperimentConfig, model: &CavcModel) -> Result<ErrorEstimate> {
    let cfg = config.resolved(model)?;
    if cfg.mode == EvalMode::Exact {
        return exact_error(&cfg, model);
    }
    let trials = cfg.trials;
    let sampling = cfg.sampling;
    let families = attacked_families(&cfg, model)?;
    let runner = Runner::new(cfg.clone(), model)?;
    let mut per_family = Vec::new();
    for k in families {
        let mut worst: Option<FamilyEstimate> = None;
        for (label, strategy) in candidates(&cfg, model, k)? {
            let outcomes: Vec<bool> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    runner.trial(k, &strategy, t).map_err(|e| CavcError::Trial {
                        index: t,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?;
            let errors = outcomes.iter().filter(|&&e| e).count();
            let (lo, hi) = wilson_interval(errors, trials);
            let est = FamilyEstimate {
                family: k,
                attack: label,
                errors: errors as f64,
                trials,
                estimate: errors as f64 / trials as f64,
                ci_low: lo,
                ci_high: hi,
            };
            if worst.as_ref().is_none_or(|w| est.estimate > w.estimate) {
                worst = Some(est);
            }
        }
        per_family.extend(worst);
    }
    Ok(headline(per_family, false, false, sampling, trials))
}

/// The fixed code and full decode table an exact evaluation works from.
#[derive(Debug, Clone)]
pub struct ExactScheme {
    pub config: ExperimentConfig,
    /// Sent block per message (the training block alone for identify).
    pub words: Vec<Vec<usize>>,
    pub table: DecodeTable,
}

/// Resolves `config` in exact mode and tabulates its decoder over all
/// output blocks; the codebook is the fixed draw for the configured seed.
pub fn exact_scheme(config: &ExperimentConfig, model: &CavcModel) -> Result<ExactScheme> {
    let mut cfg = config.clone();
    cfg.mode = EvalMode::Exact;
    let cfg = cfg.resolved(model)?;
    let (words, decoder): (Vec<Vec<usize>>, Box<dyn Decoder>) = match (cfg.decoder.kind, cfg.task) {
        (_, Task::Identify) => {
            let training = training_block(model.nx(), cfg.training_length.expect("resolved"));
            (
                vec![training.clone()],
                Box::new(IdentifyDecoder {
                    training,
                    model: model.clone(),
                    eps: cfg.decoder.eps,
                }),
            )
        }
        (DecoderKind::JointType, task) => {
            let book = fixed_codebook(&cfg)?;
            let words = book.codewords().to_vec();
            (words, Box::new(JointDecoder::new(book, model.clone(), task, joint_options(&cfg))?))
        }
        (DecoderKind::Mmi, _) => {
            let book = fixed_codebook(&cfg)?;
            let words = book.codewords().to_vec();
            (words, Box::new(MmiDecoder::new(book, model.ny(), cfg.decoder.delta)))
        }
    };
    let table = DecodeTable::build(decoder.as_ref(), model.ny(), DEFAULT_TABLE_BUDGET.max(cfg.budget.min(1e7)))?;
    Ok(ExactScheme {
        config: cfg,
        words,
        table,
    })
}

/// Exact error by enumeration of all output blocks (and of all state
/// sequences for the exhaustive adversary).
pub fn exact_error(config: &ExperimentConfig, model: &CavcModel) -> Result<ErrorEstimate> {
    let ExactScheme {
        config: cfg,
        words,
        table,
    } = exact_scheme(config, model)?;
    let mut per_family = Vec::new();
    for k in attacked_families(&cfg, model)? {
        let mut worst: Option<FamilyEstimate> = None;
        for (label, mut strategy) in candidates(&cfg, model, k)? {
            strategy.compound_choice = Some(k);
            let e = exact_attack_error(model, &words, &table, &strategy, cfg.budget)?;
            let p = e.per_family[k.index()].unwrap_or(0.0);
            let est = FamilyEstimate {
                family: k,
                attack: label,
                errors: p,
                trials: 0,
                estimate: p,
                ci_low: p,
                ci_high: p,
            };
            if worst.as_ref().is_none_or(|w| est.estimate > w.estimate) {
                worst = Some(est);
            }
        }
        per_family.extend(worst);
    }
    let worst_case = cfg.attack.kind == AttackKind::ExhaustiveWorstCase;
    Ok(headline(per_family, true, worst_case, Sampling::Enumerated, 0))
}

/// Dispatches on the configured evaluation mode.
pub fn evaluate(config: &ExperimentConfig, model: &CavcModel) -> Result<ErrorEstimate> {
    match config.mode {
        EvalMode::MonteCarlo => run_trials(config, model),
        EvalMode::Exact => exact_error(config, model),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub scenario_id: String,
    pub task: Task,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub rate: f64,
    pub attack: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub exact: bool,
    pub seed: u64,
}

/// One blocklength of a sweep: the resolved configuration, its estimate and
/// the CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub config: ExperimentConfig,
    pub estimate: ErrorEstimate,
    pub row: ErrorRow,
}

/// One evaluation per blocklength; a fixed rate recomputes M at each n.
pub fn error_sweep(config: &ExperimentConfig, model: &CavcModel, ns: &[usize]) -> Result<Vec<SweepPoint>> {
    if ns.windows(2).any(|w| w[0] > w[1]) {
        return Err(CavcError::Config("blocklengths must be nondecreasing".into()));
    }
    ns.iter()
        .map(|&n| {
            let mut cfg = config.clone();
            cfg.n = n;
            if cfg.codebook.rate.is_some() {
                cfg.codebook.m = None;
            }
            let resolved = cfg.resolved(model)?;
            let est = evaluate(&cfg, model)?;
            let attack = est
                .per_family
                .iter()
                .find(|f| f.estimate == est.estimate)
                .map(|f| f.attack.clone())
                .unwrap_or_else(|| cfg.attack.kind.to_string());
            let row = ErrorRow {
                scenario_id: cfg.scenario_id.clone(),
                task: cfg.task,
                n,
                m: resolved.m(),
                rate: resolved.codebook.rate.unwrap_or(0.0),
                attack,
                estimate: est.estimate,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                exact: est.exact,
                seed: cfg.seed,
            };
            Ok(SweepPoint {
                config: resolved,
                estimate: est,
                row,
            })
        })
        .collect()
}

/// The CSV rows of [`error_sweep`].
pub fn error_vs_n(config: &ExperimentConfig, model: &CavcModel, ns: &[usize]) -> Result<Vec<ErrorRow>> {
    Ok(error_sweep(config, model, ns)?.into_iter().map(|p| p.row).collect())
}

/// CSV with a header row; numbers carry 6 significant digits.
pub fn rows_to_csv(rows: &[ErrorRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CavcError::Inconsistent(format!("csv: {e}"));
    w.write_record([
        "scenario_id",
        "task",
        "n",
        "M",
        "rate",
        "attack",
        "estimate",
        "ci_low",
        "ci_high",
        "exact",
        "seed",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario_id.clone(),
            r.task.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            format_sig(r.rate),
            r.attack.clone(),
            format_sig(r.estimate),
            format_sig(r.ci_low),
            format_sig(r.ci_high),
            (r.exact as u8).to_string(),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CavcError::Inconsistent(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CavcError::Inconsistent(e.to_string()))
}
