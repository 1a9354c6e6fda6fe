//! `iscc-sim`: simulation CLI for three-tier collaborative DNN inference
//! over ISAC links.
//!
//! Subcommands: `run` (Monte-Carlo trials of selected schemes), `sweep`
//! (parameter sweep from a JSON spec), `beampattern` (covariance synthesis
//! quality data), `compare` (all schemes on one seed), `trace` (convergence
//! CSVs for the inner solver and the cross-entropy loop).
//!
//! Exit code 0 on success; otherwise a single JSON error line on stderr.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use iscc_core::baselines::SchemeId;
use iscc_core::cost_model::TransferRule;
use iscc_core::harness::{self, RunOptions, SweepSpec, TrialResult};
use iscc_core::radio::Scenario;

#[derive(Parser)]
#[command(
    name = "iscc-sim",
    about = "Three-tier DNN inference offloading simulator with ISAC beamforming",
    version
)]
struct Cli {
    /// Scenario config JSON; defaults to the built-in parameter set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; per-trial seeds derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Number of Monte-Carlo trials.
    #[arg(long, global = true, default_value_t = 1)]
    trials: usize,

    /// Output directory for CSV/JSON results.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Disable the rate cache: re-run the full beamforming solve for every
    /// candidate assignment.
    #[arg(long = "strict-alg1", global = true)]
    strict_alg1: bool,

    /// Charge terminal-layer transfers literally (o(l1)/R and o(l2)/r_b
    /// even for fully local or fully edge execution).
    #[arg(long = "strict-eq17", global = true)]
    strict_eq17: bool,

    /// Evaluation budget for the exhaustive oracle.
    #[arg(long, global = true, default_value_t = 1_000_000u128)]
    budget: u128,

    /// Restrict the exhaustive oracle to partitions with l1 >= 1.
    #[arg(long = "restrict-l1", global = true)]
    restrict_l1: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected schemes over seeded trials and write results.csv
    /// plus summary.json.
    Run {
        /// Comma-separated schemes: local_only, ed_dp, ced_wdp, exhaustive,
        /// proposed_ce.
        #[arg(long, value_delimiter = ',', default_value = "proposed_ce")]
        schemes: Vec<String>,
    },
    /// Run a parameter sweep described by a JSON spec file.
    Sweep {
        /// Sweep spec: {"parameter": ..., "values": [...], "trials": n,
        /// "schemes": [...]}.
        spec: PathBuf,
    },
    /// Emit beampattern CSV data for a list of mainlobe widths.
    Beampattern {
        #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
        widths_deg: Vec<f64>,
    },
    /// Run every scheme on one seed and print a comparison table.
    Compare,
    /// Write convergence traces for the beamforming solver and the
    /// cross-entropy optimizer.
    Trace,
}

fn main() {
    env_logger::init();
    if let Err(err) = real_main() {
        eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}

fn load_scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    match &cli.config {
        Some(path) => Scenario::from_config_file(path)
            .with_context(|| format!("loading scenario config {}", path.display())),
        None => Ok(Scenario::default()),
    }
}

fn run_options(cli: &Cli) -> RunOptions {
    let mut opts = RunOptions::default();
    opts.solver.cache_rates = !cli.strict_alg1;
    opts.solver.transfer_rule =
        if cli.strict_eq17 { TransferRule::Strict } else { TransferRule::SkipTerminal };
    opts.exhaustive_budget = cli.budget;
    opts.restrict_l1_ge_1 = cli.restrict_l1;
    opts
}

fn print_table(results: &[TrialResult]) {
    println!(
        "{:<12} {:>7} {:>16} {:>14} {:>12}",
        "scheme", "trials", "mean objective/s", "infeasible", "mean wall/s"
    );
    for scheme in SchemeId::ALL {
        let rows: Vec<&TrialResult> = results.iter().filter(|r| r.scheme == scheme).collect();
        if rows.is_empty() {
            continue;
        }
        let feasible: Vec<f64> =
            rows.iter().filter(|r| r.solution.feasible).map(|r| r.solution.objective_s).collect();
        let mean = if feasible.is_empty() {
            f64::INFINITY
        } else {
            feasible.iter().sum::<f64>() / feasible.len() as f64
        };
        let wall = rows.iter().map(|r| r.wallclock_s).sum::<f64>() / rows.len() as f64;
        println!(
            "{:<12} {:>7} {:>16.6} {:>14} {:>12.3}",
            scheme.as_str(),
            rows.len(),
            mean,
            rows.len() - feasible.len(),
            wall
        );
    }
}

fn real_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring worker pool")?;
    }
    let scenario = load_scenario(&cli)?;
    let opts = run_options(&cli);

    match &cli.command {
        Command::Run { schemes } => {
            let schemes: Vec<SchemeId> = schemes
                .iter()
                .map(|s| s.parse())
                .collect::<iscc_core::Result<_>>()?;
            let results =
                harness::run_trials(&scenario, cli.seed, cli.trials, &schemes, &opts)?;
            std::fs::create_dir_all(&cli.out)?;
            harness::write_results_csv(&results, cli.out.join("results.csv"))?;
            harness::write_summary_json(&results, cli.out.join("summary.json"))?;
            print_table(&results);
            println!("wrote {}", cli.out.join("results.csv").display());
        }
        Command::Sweep { spec } => {
            let spec = SweepSpec::from_file(spec)?;
            let summary = harness::run_sweep(&spec, &scenario, cli.seed, &opts, &cli.out)?;
            for point in &summary.points {
                for (name, agg) in &point.schemes {
                    println!(
                        "{}={} {} mean={:.6}s stderr={:.2e}",
                        summary.parameter,
                        point.value,
                        name,
                        agg.mean_objective_s,
                        agg.stderr_objective_s
                    );
                }
            }
            println!("wrote {}", cli.out.join("sweep.csv").display());
        }
        Command::Beampattern { widths_deg } => {
            harness::emit_beampattern(&scenario, widths_deg, &cli.out)?;
            println!("wrote {}", cli.out.join("beampattern.csv").display());
        }
        Command::Compare => {
            let results =
                harness::run_trials(&scenario, cli.seed, cli.trials, &SchemeId::ALL, &opts)?;
            std::fs::create_dir_all(&cli.out)?;
            harness::write_results_csv(&results, cli.out.join("results.csv"))?;
            harness::write_summary_json(&results, cli.out.join("summary.json"))?;
            print_table(&results);
        }
        Command::Trace => {
            harness::run_trace(&scenario, cli.seed, &opts, &cli.out)?;
            println!("wrote traces to {}", cli.out.display());
        }
    }
    Ok(())
}
