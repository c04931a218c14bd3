use crate::failure::{CliResult, Failure};
use crate::output::{emit, load_model, render};
use cavc::capacity::{capacity, capacity_grid_oracle, CapacityBracket, CapacityResult, CapacityTask, SolverOptions};
use clap::Args;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// com, and or or.
    #[arg(long, default_value = "com")]
    pub task: CapacityTask,
    /// Append a grid bracket that must contain the value.
    #[arg(long)]
    pub oracle: bool,
    /// Input-distribution grid step of the oracle.
    #[arg(long, default_value_t = 0.01)]
    pub input_resolution: f64,
    /// Mixture grid step of the oracle.
    #[arg(long, default_value_t = 0.01)]
    pub mixture_resolution: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Echo {
    command: &'static str,
    model: String,
    model_sha256: String,
    task: CapacityTask,
    oracle: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixture_resolution: Option<f64>,
}

#[derive(Serialize)]
struct OracleReport {
    #[serde(flatten)]
    bracket: CapacityBracket,
    contains_value: bool,
}

#[derive(Serialize)]
struct Report {
    config: Echo,
    #[serde(flatten)]
    result: CapacityResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleReport>,
}

pub fn run(args: &CapacityArgs) -> CliResult<()> {
    let loaded = load_model(&args.model)?;
    let result = capacity(&loaded.model, args.task, &SolverOptions::default()).map_err(Failure::from_run)?;
    let oracle = if args.oracle {
        let bracket = capacity_grid_oracle(&loaded.model, args.task, args.input_resolution, args.mixture_resolution)
            .map_err(Failure::from_run)?;
        Some(OracleReport {
            contains_value: bracket.contains(result.value),
            bracket,
        })
    } else {
        None
    };
    let report = Report {
        config: Echo {
            command: "capacity",
            model: args.model.display().to_string(),
            model_sha256: loaded.sha256,
            task: args.task,
            oracle: args.oracle,
            input_resolution: args.oracle.then_some(args.input_resolution),
            mixture_resolution: args.oracle.then_some(args.mixture_resolution),
        },
        result,
        oracle,
    };
    emit(&render(&report)?, args.output.as_deref())
}
