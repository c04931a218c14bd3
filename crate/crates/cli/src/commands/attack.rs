use crate::failure::{CliResult, Failure};
use crate::output::{emit, load_model, master_seed, render};
use cavc::adversary::{
    averaging_attack_error_bound, default_strategy, AttackKind, AttackParams, AveragingBoundReport, ConverseCase,
    SpuriousRule,
};
use cavc::codec::{SearchMode, Task};
use cavc::simulation::{exact_error, exact_scheme, DecoderKind, ErrorEstimate, EvalMode, ExperimentConfig};
use cavc::{CavcModel, Family};
use clap::{Args, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecoderArg {
    Mmi,
    JointType,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SpuriousArg {
    ExcludeSent,
    Uniform,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// cis, trans, emulate, exhaustive or iid.
    #[arg(long)]
    pub attack: AttackKind,
    /// com, and, or or identify.
    #[arg(long, default_value = "com")]
    pub task: Task,
    /// Payload blocklength.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Number of messages.
    #[arg(long = "messages", short = 'm', default_value_t = 2)]
    pub m: usize,
    /// Decoder; defaults to MMI for com and the joint-type decoders for
    /// and/or.
    #[arg(long, value_enum)]
    pub decoder: Option<DecoderArg>,
    /// Attacked compound state (1 or 2); defaults to the attack's own rule.
    #[arg(long)]
    pub family: Option<u8>,
    /// How a symmetrizing adversary picks the codeword it imitates.
    #[arg(long, value_enum, default_value = "exclude-sent")]
    pub spurious: SpuriousArg,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Training block length for identify.
    #[arg(long)]
    pub training_length: Option<usize>,
    /// Codebook seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Echo {
    command: &'static str,
    model: String,
    model_sha256: String,
    config: ExperimentConfig,
}

#[derive(Serialize)]
struct Provenance {
    family: Family,
    params: AttackParams,
    /// Residual of the witness recomputed against the model.
    #[serde(skip_serializing_if = "Option::is_none")]
    recomputed_residual: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    config: Echo,
    codewords: Vec<Vec<usize>>,
    witnesses: Vec<Provenance>,
    error: ErrorEstimate,
    /// Lower bound from the averaged-state converse, when one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    converse: Option<AveragingBoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converse_note: Option<String>,
}

fn build_config(args: &AttackArgs) -> CliResult<ExperimentConfig> {
    let mut c = ExperimentConfig {
        scenario_id: "attack-demo".into(),
        task: args.task,
        n: args.n,
        mode: EvalMode::Exact,
        seed: master_seed(args.seed, 0)?,
        training_length: args.training_length,
        ..ExperimentConfig::default()
    };
    c.codebook.m = (args.task != Task::Identify).then_some(args.m);
    c.codebook.fresh_per_trial = false;
    c.attack.kind = args.attack;
    c.attack.family = args.family.map(Family::from_number).transpose().map_err(|e| Failure::Input(e.to_string()))?;
    c.attack.spurious = match args.spurious {
        SpuriousArg::ExcludeSent => SpuriousRule::ExcludeSent,
        SpuriousArg::Uniform => SpuriousRule::Uniform,
    };
    c.decoder.kind = match (args.decoder, args.task) {
        (Some(DecoderArg::Mmi), _) => DecoderKind::Mmi,
        (Some(DecoderArg::JointType), _) => DecoderKind::JointType,
        (None, Task::And | Task::Or) => DecoderKind::JointType,
        (None, _) => DecoderKind::Mmi,
    };
    c.decoder.search = SearchMode::Auto;
    if let Some(v) = args.eta {
        c.decoder.eta = v;
    }
    if let Some(v) = args.eps {
        c.decoder.eps = v;
    }
    if let Some(v) = args.delta {
        c.decoder.delta = v;
    }
    Ok(c)
}

fn provenance(model: &CavcModel, kind: AttackKind, families: &[Family]) -> CliResult<Vec<Provenance>> {
    families
        .iter()
        .map(|&k| {
            let s = default_strategy(model, kind, Some(k)).map_err(Failure::from_run)?;
            let recomputed_residual = match &s.params {
                AttackParams::CisSymmetrizing { witness } | AttackParams::TransSymmetrizing { witness } => {
                    Some(witness.recompute_residual(model))
                }
                _ => None,
            };
            Ok(Provenance {
                family: k,
                params: s.params,
                recomputed_residual,
            })
        })
        .collect()
}

fn converse_case(config: &ExperimentConfig, error: &ErrorEstimate) -> Option<ConverseCase> {
    match config.attack.kind {
        AttackKind::CisSymmetrizing => {
            let k = config.attack.family.or_else(|| error.per_family.first().map(|f| f.family))?;
            Some(ConverseCase::Cis(k))
        }
        AttackKind::TransSymmetrizing => Some(ConverseCase::Trans),
        AttackKind::IntersectionEmulation if matches!(config.task, Task::And | Task::Identify) => Some(ConverseCase::Emulation),
        _ => None,
    }
}

pub fn run(args: &AttackArgs) -> CliResult<()> {
    let loaded = load_model(&args.model)?;
    let model = &loaded.model;
    let config = build_config(args)?;
    let scheme = exact_scheme(&config, model).map_err(Failure::from_run)?;
    let error = exact_error(&config, model).map_err(Failure::from_run)?;
    let families: Vec<Family> = error.per_family.iter().map(|f| f.family).collect();
    let witnesses = if args.attack == AttackKind::Iid {
        Vec::new()
    } else {
        provenance(model, args.attack, &families)?
    };
    let (converse, converse_note) = match converse_case(&scheme.config, &error) {
        Some(case) => match averaging_attack_error_bound(model, &scheme.words, &scheme.table, case) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, None),
    };
    let report = Report {
        config: Echo {
            command: "attack-demo",
            model: args.model.display().to_string(),
            model_sha256: loaded.sha256,
            config: scheme.config,
        },
        codewords: scheme.words,
        witnesses,
        error,
        converse,
        converse_note,
    };
    emit(&render(&report)?, args.output.as_deref())
}
