use crate::failure::{CliResult, Failure};
use crate::output::{load_model, render, seed_override, sha256_hex, write_file};
use crate::suite::{Scenario, Suite};
use cavc::simulation::{error_sweep, rows_to_csv, ErrorEstimate, ExperimentConfig};
use clap::Args;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Suite file (JSON).
    pub suite: PathBuf,
    /// Output directory; defaults to the suite's `output_dir`, else
    /// `<suite name>-out` next to the suite file.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Master seed for every scenario.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trial count for every Monte Carlo scenario.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Run only the named scenarios.
    #[arg(long = "only")]
    pub only: Vec<String>,
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'static str,
    model: &'a str,
    model_sha256: &'a str,
    n_list: Vec<usize>,
    config: &'a ExperimentConfig,
    resolved: Vec<&'a ExperimentConfig>,
}

#[derive(Serialize)]
struct Point<'a> {
    n: usize,
    estimate: &'a ErrorEstimate,
}

#[derive(Serialize)]
struct ScenarioReport<'a> {
    scenario: &'a str,
    config: &'a Echo<'a>,
    config_sha256: &'a str,
    points: Vec<Point<'a>>,
}

#[derive(Serialize)]
struct Outcome {
    name: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    json: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_sha256: Option<String>,
}

#[derive(Serialize)]
struct Summary {
    suite: String,
    suite_sha256: String,
    seed_override: Option<u64>,
    trials_override: Option<usize>,
    completed: usize,
    failed: usize,
    scenarios: Vec<Outcome>,
}

struct Done {
    csv_rows: String,
    config_sha256: String,
}

fn run_scenario(suite: &Suite, s: &Scenario, out_dir: &Path, seed: Option<u64>, trials: Option<usize>) -> CliResult<Done> {
    let loaded = load_model(&suite.model_path(s))?;
    let mut config = s.config.clone();
    config.seed = seed.unwrap_or(config.seed);
    if let Some(t) = trials {
        config.trials = t;
    }
    let ns = s.n_list.clone().unwrap_or_else(|| vec![config.n]);
    let points = error_sweep(&config, &loaded.model, &ns).map_err(Failure::from_run)?;
    let echo = Echo {
        command: "simulate",
        model: &s.model,
        model_sha256: &loaded.sha256,
        n_list: ns,
        config: &config,
        resolved: points.iter().map(|p| &p.config).collect(),
    };
    let config_sha256 = sha256_hex(render(&echo)?.as_bytes());
    let report = ScenarioReport {
        scenario: &s.name,
        config: &echo,
        config_sha256: &config_sha256,
        points: points.iter().map(|p| Point { n: p.row.n, estimate: &p.estimate }).collect(),
    };
    let rows: Vec<_> = points.iter().map(|p| p.row.clone()).collect();
    let csv = rows_to_csv(&rows).map_err(Failure::from_run)?;
    write_file(&out_dir.join(&s.csv), &csv)?;
    write_file(&out_dir.join(&s.json), &render(&report)?)?;
    Ok(Done {
        csv_rows: csv.lines().skip(1).map(|l| format!("{l}\n")).collect(),
        config_sha256,
    })
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.suite)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", args.suite.display())))?;
    let suite = Suite::parse(&text, args.suite.parent().unwrap_or(Path::new(".")))?;
    for name in &args.only {
        if !suite.scenarios.iter().any(|s| &s.name == name) {
            return Err(Failure::Input(format!("no scenario named {name:?}")));
        }
    }
    let env_seed = seed_override(args.seed)?;
    let out_dir = match (&args.out_dir, &suite.output_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => suite.dir.join(d),
        (None, None) => suite.dir.join(format!("{}-out", suite.name)),
    };
    let mut outcomes = Vec::new();
    let mut all_rows = String::from("scenario_id,task,n,M,rate,attack,estimate,ci_low,ci_high,exact,seed\n");
    for s in suite.scenarios.iter().filter(|s| args.only.is_empty() || args.only.contains(&s.name)) {
        match run_scenario(&suite, s, &out_dir, env_seed, args.trials) {
            Ok(done) => {
                all_rows.push_str(&done.csv_rows);
                outcomes.push(Outcome {
                    name: s.name.clone(),
                    status: "ok",
                    error: None,
                    csv: Some(s.csv.clone()),
                    json: Some(s.json.clone()),
                    config_sha256: Some(done.config_sha256),
                });
            }
            Err(e) => {
                eprintln!("scenario {:?}: {e}", s.name);
                outcomes.push(Outcome {
                    name: s.name.clone(),
                    status: "failed",
                    error: Some(e.to_string()),
                    csv: None,
                    json: None,
                    config_sha256: None,
                });
            }
        }
    }
    let failed = outcomes.iter().filter(|o| o.status != "ok").count();
    let summary = Summary {
        suite: suite.name.clone(),
        suite_sha256: sha256_hex(text.as_bytes()),
        seed_override: env_seed,
        trials_override: args.trials,
        completed: outcomes.len() - failed,
        failed,
        scenarios: outcomes,
    };
    let rendered = render(&summary)?;
    write_file(&out_dir.join("results.csv"), &all_rows)?;
    write_file(&out_dir.join("summary.json"), &rendered)?;
    print!("{rendered}");
    if failed > 0 {
        let names: Vec<&str> = summary.scenarios.iter().filter(|o| o.status != "ok").map(|o| o.name.as_str()).collect();
        return Err(Failure::Partial(format!("{failed} of {} scenarios failed: {}", summary.scenarios.len(), names.join(", "))));
    }
    Ok(())
}
