use crate::failure::{CliResult, Failure};
use crate::output::{emit, load_model, render};
use cavc::symmetry::{classify, ClassificationReport, DEFAULT_TOL};
use clap::Args;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// Residual at or below which a symmetrizing witness counts as feasible.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Echo {
    command: &'static str,
    model: String,
    model_sha256: String,
    tol: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    config: Echo,
    #[serde(flatten)]
    classification: &'a ClassificationReport,
}

pub fn run(args: &AnalyzeArgs) -> CliResult<()> {
    if !(args.tol >= 0.0) {
        return Err(Failure::Input(format!("--tol must be nonnegative, got {}", args.tol)));
    }
    let loaded = load_model(&args.model)?;
    let classification = classify(&loaded.model, args.tol).map_err(|e| Failure::Solver(e.to_string()))?;
    let report = Report {
        config: Echo {
            command: "analyze",
            model: args.model.display().to_string(),
            model_sha256: loaded.sha256,
            tol: args.tol,
        },
        classification: &classification,
    };
    emit(&render(&report)?, args.output.as_deref())
}
