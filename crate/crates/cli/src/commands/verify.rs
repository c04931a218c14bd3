use crate::failure::{CliResult, Failure};
use crate::output::{emit, master_seed, render};
use cavc::catalog;
use cavc::channel::channel_sample;
use cavc::codec::{state_explanation_search, SearchMode, StateSelector, Task};
use cavc::lp::LpOptions;
use cavc::rng::{derive_labeled, rng_from_seed};
use cavc::simulation::{exact_error, run_trials, ExperimentConfig};
use cavc::symmetry::{
    check_cis_with, check_trans_with, grid_oracle_symmetrizable, GridKind, SymmetryWitness, DEFAULT_TOL,
};
use cavc::{CavcModel, ChannelKernel, Family};
use clap::Args;
use rand::Rng;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Smaller batteries and coarser grids.
    #[arg(long)]
    pub quick: bool,
    /// Feasibility tolerance handed to the symmetrizability LPs.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub lp_tol: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Echo {
    command: &'static str,
    quick: bool,
    lp_tol: f64,
    reference_tol: f64,
    seed: u64,
}

#[derive(Serialize, Default)]
struct Battery {
    name: &'static str,
    cases: usize,
    failures: Vec<String>,
    passed: bool,
    /// Budgets used, so a quick run is recognizable from its report.
    budget: String,
}

#[derive(Serialize)]
struct Report {
    config: Echo,
    batteries: Vec<Battery>,
    passed: bool,
}

/// Example 1 nudged toward a random kernel: trans-symmetrizable only up to a
/// small positive residual.
fn near_trans_model(seed: u64) -> CavcModel {
    let base = catalog::example_one(2);
    let noise = catalog::random_kernel(2, 4, 4, seed);
    let k = base.kernel();
    let kernel = ChannelKernel::from_fn(2, 4, 4, |x, s, y| 0.999 * k.prob(x, s, y) + 0.001 * noise.prob(x, s, y)).unwrap();
    CavcModel::new(kernel, base.family(Family::One).to_vec(), base.family(Family::Two).to_vec()).unwrap()
}

fn grid_vs_lp(quick: bool, lp_tol: f64, seed: u64) -> Battery {
    let (count, resolution) = if quick { (5, 0.1) } else { (20, 0.05) };
    let mut models: Vec<(String, CavcModel)> = (0..count)
        .map(|i| (format!("random-{i}"), catalog::random_model(2, 2, 2, 2, derive_labeled(seed, "grid-vs-lp", i))))
        .collect();
    models.push(("example-one".into(), catalog::example_one(2)));
    models.push(("adder".into(), catalog::adder_avc()));
    models.push(("near-trans".into(), near_trans_model(seed)));
    let opts = LpOptions::default();
    let mut b = Battery {
        name: "grid-vs-lp",
        budget: format!("{} models, grid resolution {resolution}", models.len()),
        ..Battery::default()
    };
    for (name, m) in &models {
        for kind in [GridKind::Cis(Family::One), GridKind::Cis(Family::Two), GridKind::Trans] {
            b.cases += 1;
            let lp: cavc::Result<SymmetryWitness> = match kind {
                GridKind::Cis(k) => check_cis_with(m, k, lp_tol, &opts),
                GridKind::Trans => check_trans_with(m, lp_tol, &opts),
            };
            let grid = grid_oracle_symmetrizable(m, kind, resolution);
            let (lp, grid) = match (lp, grid) {
                (Ok(l), Ok(g)) => (l, g),
                (Err(e), _) | (_, Err(e)) => {
                    b.failures.push(format!("{name} {kind:?}: {e}"));
                    continue;
                }
            };
            if lp.residual > grid.residual + 1e-9 {
                b.failures.push(format!("{name} {kind:?}: LP residual {} above grid residual {}", lp.residual, grid.residual));
            }
            let recomputed = lp.recompute_residual(m);
            if lp.feasible && recomputed > DEFAULT_TOL + 1e-12 {
                b.failures.push(format!("{name} {kind:?}: declared feasible with witness residual {recomputed}"));
            }
            if grid.residual <= DEFAULT_TOL && !lp.feasible {
                b.failures.push(format!("{name} {kind:?}: grid witness exists but LP says infeasible"));
            }
        }
    }
    b
}

fn exact_vs_monte_carlo(quick: bool, seed: u64) -> Battery {
    let trials = if quick { 1000 } else { 4000 };
    let bsc = catalog::bsc_family_model(&[0.1], &[0.25]);
    let mut b = Battery {
        name: "exact-vs-monte-carlo",
        budget: format!("{trials} trials per configuration"),
        ..Battery::default()
    };
    for (i, (n, m)) in [(4, 2), (5, 3), (6, 2)].into_iter().enumerate() {
        let mut cfg = ExperimentConfig {
            scenario_id: format!("com-{n}-{m}"),
            task: Task::Com,
            n,
            trials,
            seed: derive_labeled(seed, "exact-vs-mc", i as u64),
            ..ExperimentConfig::default()
        };
        cfg.codebook.m = Some(m);
        cfg.codebook.fresh_per_trial = false;
        cfg.decoder.delta = 0.0;
        b.cases += 1;
        let (mc, ex) = match (run_trials(&cfg, &bsc), exact_error(&cfg, &bsc)) {
            (Ok(a), Ok(e)) => (a, e),
            (Err(e), _) | (_, Err(e)) => {
                b.failures.push(format!("{}: {e}", cfg.scenario_id));
                continue;
            }
        };
        for (a, e) in mc.per_family.iter().zip(&ex.per_family) {
            let sd = (e.estimate * (1.0 - e.estimate) / trials as f64).sqrt();
            if (a.estimate - e.estimate).abs() > 4.0 * sd + 2.0 / trials as f64 {
                b.failures.push(format!(
                    "{} {}: Monte Carlo {} vs exact {}",
                    cfg.scenario_id, a.family, a.estimate, e.estimate
                ));
            }
        }
    }
    b
}

fn explanation_modes(quick: bool, seed: u64) -> Battery {
    let count = if quick { 15 } else { 50 };
    let mut b = Battery {
        name: "explanation-search",
        budget: format!("{count} instances"),
        ..Battery::default()
    };
    let mut rng = rng_from_seed(derive_labeled(seed, "explanation", 0));
    for i in 0..count as u64 {
        let m = catalog::random_model(2, 2, 2, 2, derive_labeled(seed, "explanation-model", i));
        let n = 6 + rng.gen_range(0..9);
        let x: Vec<usize> = (0..n).map(|j| j % 2).collect();
        let s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        b.cases += 1;
        let outcome = channel_sample(m.kernel(), &x, &s, i).and_then(|y| {
            let sel = StateSelector::Family(Family::One);
            let exact = state_explanation_search(&x, &y, &m, sel, 0.05, SearchMode::ExactTypes)?;
            let relax = state_explanation_search(&x, &y, &m, sel, 0.05, SearchMode::ConvexRelaxation)?;
            Ok((exact, relax))
        });
        let (exact, relax) = match outcome {
            Ok(p) => p,
            Err(e) => {
                b.failures.push(format!("instance {i}: {e}"));
                continue;
            }
        };
        let (Some(e), Some(r), Some(lb)) = (exact.divergence.finite(), relax.divergence.finite(), relax.lower_bound.finite()) else {
            b.failures.push(format!("instance {i}: infinite divergence on a full-support kernel"));
            continue;
        };
        let slack = 16.0 / n as f64;
        if lb > e + 1e-9 || e > r + 1e-12 || r - e > slack {
            b.failures.push(format!("instance {i}: exact {e}, relaxation {r}, lower bound {lb}, slack {slack}"));
        }
    }
    b
}

pub fn run(args: &VerifyArgs) -> CliResult<()> {
    if !(args.lp_tol >= 0.0) {
        return Err(Failure::Input(format!("--lp-tol must be nonnegative, got {}", args.lp_tol)));
    }
    let seed = master_seed(args.seed, 0)?;
    let mut batteries = vec![
        grid_vs_lp(args.quick, args.lp_tol, seed),
        exact_vs_monte_carlo(args.quick, seed),
        explanation_modes(args.quick, seed),
    ];
    for b in &mut batteries {
        b.passed = b.failures.is_empty();
    }
    let passed = batteries.iter().all(|b| b.passed);
    let report = Report {
        config: Echo {
            command: "verify",
            quick: args.quick,
            lp_tol: args.lp_tol,
            reference_tol: DEFAULT_TOL,
            seed,
        },
        batteries,
        passed,
    };
    emit(&render(&report)?, args.output.as_deref())?;
    if !passed {
        let failed: Vec<&str> = report.batteries.iter().filter(|b| !b.passed).map(|b| b.name).collect();
        return Err(Failure::Verification(format!("batteries failed: {}", failed.join(", "))));
    }
    Ok(())
}
