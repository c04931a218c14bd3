//! `cavc`: symmetrizability analysis, capacities, attack demonstrations,
//! simulation suites and self-verification for CAVC model files.

mod commands;
mod failure;
mod output;
mod suite;

use clap::{Parser, Subcommand};
use commands::{analyze, attack, capacity, simulate, verify};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cavc", version, about = "Compound arbitrarily varying channel toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a model: cis/trans symmetrizability and hull separation.
    Analyze(analyze::AnalyzeArgs),
    /// Capacity of one task, optionally bracketed by a grid oracle.
    Capacity(capacity::CapacityArgs),
    /// Run a suite of experiments; writes CSV and JSON reports.
    Simulate(simulate::SimulateArgs),
    /// Exact error of a small code under one attack, with the witness used.
    AttackDemo(attack::AttackArgs),
    /// Cross-check solvers against independent oracles.
    Verify(verify::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Capacity(a) => capacity::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::AttackDemo(a) => attack::run(a),
        Command::Verify(a) => verify::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavc: {e}");
            ExitCode::from(e.code())
        }
    }
}
