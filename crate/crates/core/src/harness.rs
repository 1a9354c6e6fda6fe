//! Monte-Carlo trial runner, parameter sweeps, and result emission.
//!
//! A trial is fully determined by `(scenario config, trial seed)`: the seed
//! derives independent streams for device placement, channel generation,
//! and the cross-entropy optimizer (see [`crate::seed`]), so any recorded
//! run replays bit-identically. Trials execute in parallel; result order is
//! by trial index regardless of scheduling. Wallclock fields are the only
//! non-replayable outputs.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, SchemeId};
use crate::beampattern::{
    angle_grid, beampattern, cache_key, desired_pattern, synth_covariance, CovarianceTarget,
    SynthOptions,
};
use crate::ce_optimizer::{self, CeIterRecord, CeParams};
use crate::dnn_profile::PartitionPair;
use crate::error::{Error, Result};
use crate::inner_solver::{InnerSolution, InnerSolver, SolverConfig};
use crate::radio::{gen_channels, Scenario};
use crate::seed::{derive_seed, STREAM_CE, STREAM_CHANNELS, STREAM_POSITIONS, STREAM_TRIAL};

/// Everything configurable about a run besides the scenario itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub solver: SolverConfig,
    /// Cross-entropy hyperparameters; the seed field is overridden per trial.
    pub ce: CeParams,
    /// Evaluation budget for the exhaustive oracle.
    pub exhaustive_budget: u128,
    /// Restrict the exhaustive oracle to partitions with `l1 >= 1`.
    pub restrict_l1_ge_1: bool,
    /// Angular grid step for covariance synthesis, degrees.
    pub synth_grid_step_deg: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            ce: CeParams::default(),
            exhaustive_budget: 1_000_000,
            restrict_l1_ge_1: false,
            synth_grid_step_deg: 1.0,
        }
    }
}

/// One scheme's outcome on one trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial_index: usize,
    /// The trial's own seed (replay key).
    pub seed: u64,
    pub scheme: SchemeId,
    pub partitions: Vec<PartitionPair>,
    pub solution: InnerSolution,
    /// Scheme search time, excluding channel generation and the shared rate
    /// cache. Not replayable.
    pub wallclock_s: f64,
    /// Present for the cross-entropy scheme.
    pub ce_history: Option<Vec<CeIterRecord>>,
}

/// Synthesizes the per-device covariance targets, deduplicating identical
/// sensing requirements.
pub fn covariance_targets(scenario: &Scenario, grid_step_deg: f64) -> Result<Vec<CovarianceTarget>> {
    let grid = angle_grid(grid_step_deg);
    let p_t = scenario.tx_power_w();
    let nt = scenario.device_antennas;
    let mut memo: HashMap<String, CovarianceTarget> = HashMap::new();
    scenario
        .sensing
        .iter()
        .map(|spec| {
            let key = cache_key(&spec.target_angles_rad, spec.mainlobe_width_rad, p_t, nt, &grid);
            if let Some(t) = memo.get(&key) {
                return Ok(t.clone());
            }
            let res = synth_covariance(
                &spec.target_angles_rad,
                spec.mainlobe_width_rad,
                p_t,
                nt,
                &grid,
                SynthOptions::default(),
            )?;
            memo.insert(key, res.target.clone());
            Ok(res.target)
        })
        .collect()
}

/// Draws concrete device positions for one trial.
fn positions_for_trial(scenario: &Scenario, trial_seed: u64) -> Vec<[f64; 2]> {
    match scenario.placement_half_side_m {
        None => scenario.device_positions.clone(),
        Some(half) => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_POSITIONS, 0));
            (0..scenario.device_count)
                .map(|_| {
                    let x = (2.0 * rng.random::<f64>() - 1.0) * half;
                    let y = (2.0 * rng.random::<f64>() - 1.0) * half;
                    [x, y]
                })
                .collect()
        }
    }
}

/// Runs the given schemes on one seeded trial: draws positions and channels
/// from the seed, synthesizes covariance targets, and evaluates every
/// scheme on identical inputs.
pub fn run_trial(
    scenario: &Scenario,
    seed: u64,
    schemes: &[SchemeId],
    opts: &RunOptions,
) -> Result<Vec<TrialResult>> {
    let targets = covariance_targets(scenario, opts.synth_grid_step_deg)?;
    run_trial_with_targets(scenario, &targets, 0, seed, schemes, opts)
}

fn run_trial_with_targets(
    scenario: &Scenario,
    targets: &[CovarianceTarget],
    trial_index: usize,
    seed: u64,
    schemes: &[SchemeId],
    opts: &RunOptions,
) -> Result<Vec<TrialResult>> {
    let mut concrete = scenario.clone();
    concrete.device_positions = positions_for_trial(scenario, seed);
    let channels = gen_channels(&concrete, derive_seed(seed, STREAM_CHANNELS, 0))?;
    let solver = InnerSolver::new(&concrete, &channels, targets, opts.solver)?;

    let mut results = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let start = Instant::now();
        let (partitions, solution, ce_history) = match scheme {
            SchemeId::LocalOnly => {
                let out = baselines::run_local_only(&solver)?;
                (out.partitions, out.solution, None)
            }
            SchemeId::EdDp => {
                let out = baselines::run_ed_dp(&solver)?;
                (out.partitions, out.solution, None)
            }
            SchemeId::CedWdp => {
                let out = baselines::run_ced_wdp(&solver)?;
                (out.partitions, out.solution, None)
            }
            SchemeId::Exhaustive => {
                let out =
                    baselines::run_exhaustive(&solver, opts.restrict_l1_ge_1, opts.exhaustive_budget)?;
                (out.partitions, out.solution, None)
            }
            SchemeId::ProposedCe => {
                let params = CeParams { seed: derive_seed(seed, STREAM_CE, 0), ..opts.ce };
                let out = ce_optimizer::optimize(&solver, &params)?;
                (out.best_partitions, out.solution, Some(out.state.history))
            }
        };
        results.push(TrialResult {
            trial_index,
            seed,
            scheme,
            partitions,
            solution,
            wallclock_s: start.elapsed().as_secs_f64(),
            ce_history,
        });
    }
    Ok(results)
}

/// Runs `trials` seeded trials in parallel. Trial `i` uses the seed
/// `derive_seed(master_seed, STREAM_TRIAL, i)`, so extending a run never
/// changes earlier trials. Results are flattened in trial order.
pub fn run_trials(
    scenario: &Scenario,
    master_seed: u64,
    trials: usize,
    schemes: &[SchemeId],
    opts: &RunOptions,
) -> Result<Vec<TrialResult>> {
    let targets = covariance_targets(scenario, opts.synth_grid_step_deg)?;
    let nested: Vec<Vec<TrialResult>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, STREAM_TRIAL, i as u64);
            run_trial_with_targets(scenario, &targets, i, seed, schemes, opts)
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

/// Sweepable scenario axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    FMec,
    FLocal,
    MainlobeWidthDeg,
    BandwidthHz,
    DeviceCount,
    DataStreams,
    BackhaulBps,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::FMec => "f_mec",
            SweepParam::FLocal => "f_local",
            SweepParam::MainlobeWidthDeg => "mainlobe_width_deg",
            SweepParam::BandwidthHz => "bandwidth_hz",
            SweepParam::DeviceCount => "device_count",
            SweepParam::DataStreams => "data_streams",
            SweepParam::BackhaulBps => "backhaul_bps",
        }
    }

    /// Applies one sweep value to a copy of the base scenario.
    pub fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self {
            SweepParam::FMec => s.compute.f_mec_total = value,
            SweepParam::FLocal => {
                s.compute.f_local_max = vec![value; s.device_count];
            }
            SweepParam::MainlobeWidthDeg => {
                for spec in &mut s.sensing {
                    spec.mainlobe_width_rad = value.to_radians();
                }
            }
            SweepParam::BandwidthHz => s.bandwidth_hz = value,
            SweepParam::DeviceCount => {
                let k = value as usize;
                if k == 0 || (value - k as f64).abs() > 0.0 {
                    return Err(Error::Sweep(format!(
                        "device_count sweep value {value} is not a positive integer"
                    )));
                }
                if s.placement_half_side_m.is_none() {
                    return Err(Error::Sweep(
                        "device_count sweep requires square placement".into(),
                    ));
                }
                let broadcast = |v: &[f64]| vec![v[0]; k];
                s.compute.alpha_local = broadcast(&s.compute.alpha_local);
                s.compute.f_local_max = broadcast(&s.compute.f_local_max);
                s.compute.energy_budget_j = broadcast(&s.compute.energy_budget_j);
                s.compute.kappa = broadcast(&s.compute.kappa);
                s.sensing = vec![s.sensing[0].clone(); k];
                s.device_count = k;
            }
            SweepParam::DataStreams => {
                let d = value as usize;
                if d == 0 || (value - d as f64).abs() > 0.0 {
                    return Err(Error::Sweep(format!(
                        "data_streams sweep value {value} is not a positive integer"
                    )));
                }
                s.data_streams = d;
            }
            SweepParam::BackhaulBps => s.compute.backhaul_bps = value,
        }
        s.validate()?;
        Ok(s)
    }
}

/// Sweep description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// Trials per sweep point.
    pub trials: usize,
    pub schemes: Vec<SchemeId>,
}

impl SweepSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if spec.values.is_empty() || spec.trials == 0 || spec.schemes.is_empty() {
            return Err(Error::Sweep(
                "sweep needs at least one value, one trial, and one scheme".into(),
            ));
        }
        Ok(spec)
    }
}

/// Per-scheme aggregate at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeAggregate {
    pub mean_objective_s: f64,
    pub stderr_objective_s: f64,
    pub mean_wallclock_s: f64,
    pub trials: usize,
    pub infeasible_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPointSummary {
    pub value: f64,
    pub schemes: HashMap<String, SchemeAggregate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub master_seed: u64,
    pub points: Vec<SweepPointSummary>,
}

fn aggregate(results: &[&TrialResult]) -> SchemeAggregate {
    let feasible: Vec<f64> =
        results.iter().filter(|r| r.solution.feasible).map(|r| r.solution.objective_s).collect();
    let n = feasible.len();
    let mean = if n > 0 { feasible.iter().sum::<f64>() / n as f64 } else { f64::INFINITY };
    let var = if n > 1 {
        feasible.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    SchemeAggregate {
        mean_objective_s: mean,
        stderr_objective_s: if n > 0 { (var / n as f64).sqrt() } else { f64::INFINITY },
        mean_wallclock_s: results.iter().map(|r| r.wallclock_s).sum::<f64>()
            / results.len().max(1) as f64,
        trials: results.len(),
        infeasible_trials: results.len() - n,
    }
}

/// Runs a parameter sweep and writes `sweep.csv` (long format) plus
/// `sweep_summary.json` into `out_dir`.
///
/// Trial seeds depend only on the trial index, so every sweep point sees
/// the same channel realizations (paired comparisons across points).
pub fn run_sweep(
    spec: &SweepSpec,
    base: &Scenario,
    master_seed: u64,
    opts: &RunOptions,
    out_dir: impl AsRef<Path>,
) -> Result<SweepSummary> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
    writeln!(csv, "parameter,value,scheme,trial,seed,feasible,objective_s,wallclock_s")?;

    let mut points = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let scenario = spec.parameter.apply(base, value)?;
        let results = run_trials(&scenario, master_seed, spec.trials, &spec.schemes, opts)?;
        for r in &results {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                spec.parameter.as_str(),
                value,
                r.scheme,
                r.trial_index,
                r.seed,
                r.solution.feasible,
                r.solution.objective_s,
                r.wallclock_s
            )?;
        }
        let mut schemes = HashMap::new();
        for &scheme in &spec.schemes {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.scheme == scheme).collect();
            schemes.insert(scheme.as_str().to_string(), aggregate(&rows));
        }
        points.push(SweepPointSummary { value, schemes });
    }
    csv.flush()?;

    let summary = SweepSummary {
        parameter: spec.parameter.as_str().to_string(),
        master_seed,
        points,
    };
    std::fs::write(
        out_dir.join("sweep_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

/// Writes one row per device per (trial, scheme) into `results.csv`.
pub fn write_results_csv(results: &[TrialResult], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "trial,seed,scheme,device,l1,l2,s_local,s_mec,s_cloud,rate_bps,f_local,f_mec,\
         t_local,t_offload_dev_mec,t_mec,t_offload_mec_cloud,t_cloud,total_s,energy_j,\
         feasible,objective_s"
    )?;
    for r in results {
        for (k, b) in r.solution.per_device.iter().enumerate() {
            let p = r.partitions[k];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.trial_index,
                r.seed,
                r.scheme,
                k,
                p.l1,
                p.l2,
                r.solution.splits[k].s_local,
                r.solution.splits[k].s_mec,
                r.solution.splits[k].s_cloud,
                r.solution.rates_bps[k],
                r.solution.allocations.f_local[k],
                r.solution.allocations.f_mec[k],
                b.t_local,
                b.t_offload_dev_mec,
                b.t_mec,
                b.t_offload_mec_cloud,
                b.t_cloud,
                b.total,
                b.energy_j,
                r.solution.feasible,
                r.solution.objective_s
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-scheme aggregate over a result set, written as `summary.json`.
pub fn write_summary_json(results: &[TrialResult], path: impl AsRef<Path>) -> Result<()> {
    let mut schemes: HashMap<String, SchemeAggregate> = HashMap::new();
    for scheme in SchemeId::ALL {
        let rows: Vec<&TrialResult> = results.iter().filter(|r| r.scheme == scheme).collect();
        if !rows.is_empty() {
            schemes.insert(scheme.as_str().to_string(), aggregate(&rows));
        }
    }
    #[derive(Serialize)]
    struct Summary {
        schemes: HashMap<String, SchemeAggregate>,
    }
    std::fs::write(path, serde_json::to_string_pretty(&Summary { schemes })?)?;
    Ok(())
}

/// Synthesizes a covariance target per requested mainlobe width (degrees)
/// and writes `beampattern.csv` (width_deg, theta_deg, gain_w, gain_db,
/// desired) plus `beampattern_summary.json` with the least-squares residual
/// and peak gain per width.
pub fn emit_beampattern(
    scenario: &Scenario,
    widths_deg: &[f64],
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let grid = angle_grid(1.0);
    let angles = &scenario.sensing[0].target_angles_rad;
    let mut csv =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("beampattern.csv"))?);
    writeln!(csv, "width_deg,theta_deg,gain_w,gain_db,desired")?;

    #[derive(Serialize)]
    struct WidthSummary {
        width_deg: f64,
        residual: f64,
        peak_gain_db: f64,
        converged: bool,
    }
    let mut summaries = Vec::new();
    for &width_deg in widths_deg {
        let width = width_deg.to_radians();
        let res = synth_covariance(
            angles,
            width,
            scenario.tx_power_w(),
            scenario.device_antennas,
            &grid,
            SynthOptions::default(),
        )?;
        let phi = desired_pattern(angles, width, &grid);
        let pattern = beampattern(&res.target, &grid);
        let mut peak = 0.0f64;
        for (sample, desired) in pattern.iter().zip(&phi) {
            peak = peak.max(sample.gain_w);
            writeln!(
                csv,
                "{},{},{},{},{}",
                width_deg,
                sample.theta_rad.to_degrees(),
                sample.gain_w,
                10.0 * sample.gain_w.max(1e-300).log10(),
                desired
            )?;
        }
        summaries.push(WidthSummary {
            width_deg,
            residual: res.objective,
            peak_gain_db: 10.0 * peak.max(1e-300).log10(),
            converged: res.converged,
        });
    }
    csv.flush()?;
    std::fs::write(
        out_dir.join("beampattern_summary.json"),
        serde_json::to_string_pretty(&summaries)?,
    )?;
    Ok(())
}

/// Runs one seeded trial with convergence tracing enabled and writes
/// `alg1_trace.csv`, `wmmse_trace.csv`, and `ce_trace.csv`.
pub fn run_trace(
    scenario: &Scenario,
    seed: u64,
    opts: &RunOptions,
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let targets = covariance_targets(scenario, opts.synth_grid_step_deg)?;
    let mut concrete = scenario.clone();
    concrete.device_positions = positions_for_trial(scenario, seed);
    let channels = gen_channels(&concrete, derive_seed(seed, STREAM_CHANNELS, 0))?;

    // Beamforming trace with unit weights (the rate-cache solve).
    let bf_opts = crate::beamforming::SolverOptions { trace: true, ..opts.solver.beamforming };
    let outcome = crate::beamforming::solve(
        &vec![1.0; concrete.device_count],
        &channels,
        &targets,
        concrete.data_streams,
        concrete.bandwidth_hz,
        &bf_opts,
    )?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("alg1_trace.csv"))?);
    writeln!(w, "outer_iter,mm_objective_s")?;
    for (i, obj) in outcome.trace.mm_objective_s.iter().enumerate() {
        writeln!(w, "{i},{obj}")?;
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("wmmse_trace.csv"))?);
    writeln!(w, "outer_iter,step,wmmse_objective")?;
    for (outer, sweep) in outcome.trace.inner_objectives.iter().enumerate() {
        for (step, h) in sweep.iter().enumerate() {
            writeln!(w, "{outer},{step},{h}")?;
        }
    }
    w.flush()?;

    // Cross-entropy trace.
    let solver = InnerSolver::new(&concrete, &channels, &targets, opts.solver)?;
    let params = CeParams { seed: derive_seed(seed, STREAM_CE, 0), ..opts.ce };
    let out = ce_optimizer::optimize(&solver, &params)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out_dir.join("ce_trace.csv"))?);
    writeln!(w, "iteration,best_objective_s,mean_elite_objective_s,omega_entropy")?;
    for rec in &out.state.history {
        writeln!(
            w,
            "{},{},{},{}",
            rec.iteration, rec.best_objective_s, rec.mean_elite_objective_s, rec.omega_entropy
        )?;
    }
    w.flush()?;
    Ok(())
}
