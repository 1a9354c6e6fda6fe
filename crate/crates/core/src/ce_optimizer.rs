//! Cross-entropy search over DNN partition assignments.
//!
//! Each device's partition decision is a length-(L+1) binary vector with one
//! or two bits set (one bit encodes `l1 = l2`). The optimizer keeps a
//! Bernoulli parameter matrix `omega` (K x (L+1)), samples feasible
//! assignments from the conditioned product distribution, scores them with
//! the inner solver, refits `omega` to the elite fraction, and smooths the
//! update. Sampling is exact: the per-device conditional masses over all
//! `(L+1)(L+2)/2` pairs are enumerated, so degenerate `omega` values need no
//! rejection loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dnn_profile::PartitionPair;
use crate::error::Result;
use crate::inner_solver::{InnerSolution, InnerSolver};
use crate::seed::{derive_seed, STREAM_CE_ITER, STREAM_CE_SAMPLE};

/// Cross-entropy hyperparameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CeParams {
    pub samples_per_iter: usize,
    pub elite_count: usize,
    /// Smoothing factor rho in (0, 1]: `omega <- rho * upsilon + (1-rho) * omega`.
    pub smoothing_rho: f64,
    pub max_iters: usize,
    /// Stop after this many consecutive iterations without best-so-far
    /// improvement (relative 1e-9).
    pub stall_iters: usize,
    pub seed: u64,
    /// Test hook: score every joint assignment instead of sampling.
    pub full_enumeration: bool,
}

impl Default for CeParams {
    fn default() -> Self {
        Self {
            samples_per_iter: 1000,
            elite_count: 50,
            smoothing_rho: 0.9,
            max_iters: 50,
            stall_iters: 5,
            seed: 0,
            full_enumeration: false,
        }
    }
}

/// One scored assignment.
#[derive(Debug, Clone)]
pub struct SampleEval {
    pub partitions: Vec<PartitionPair>,
    pub objective_s: f64,
    pub feasible: bool,
}

/// Per-iteration convergence record.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CeIterRecord {
    pub iteration: usize,
    /// Best objective seen so far (non-increasing).
    pub best_objective_s: f64,
    pub mean_elite_objective_s: f64,
    /// Sum of binary entropies of the omega entries (nats).
    pub omega_entropy: f64,
}

/// Optimizer state after a run.
#[derive(Debug, Clone)]
pub struct CeState {
    /// K x (L+1) Bernoulli parameters.
    pub omega: Vec<Vec<f64>>,
    pub iteration: usize,
    pub history: Vec<CeIterRecord>,
}

/// Result of [`optimize`].
#[derive(Debug, Clone)]
pub struct CeOutcome {
    pub best_partitions: Vec<PartitionPair>,
    pub best_objective_s: f64,
    pub solution: InnerSolution,
    pub state: CeState,
}

/// Draws one feasible partition pair from the Bernoulli row conditioned on
/// exactly one or two set bits.
///
/// Masses: `m(l) = w_l * prod_{l' != l} (1 - w_l')` for single points and
/// `m(l1, l2) = w_l1 * w_l2 * prod_{l not in {l1, l2}} (1 - w_l)` for pairs.
/// If every mass is zero (degenerate omega) the draw falls back to the
/// uniform distribution over all pairs with a warning.
pub fn sample_feasible(omega_row: &[f64], rng: &mut impl Rng) -> PartitionPair {
    let n = omega_row.len();
    debug_assert!(n >= 1);
    debug_assert!(omega_row.iter().all(|w| (0.0..=1.0).contains(w)));
    let mut masses: Vec<(PartitionPair, f64)> = Vec::with_capacity(n * (n + 1) / 2);
    let mut total = 0.0;
    for l1 in 0..n {
        for l2 in l1..n {
            let mut m = 1.0;
            for (l, &w) in omega_row.iter().enumerate() {
                m *= if l == l1 || l == l2 { w } else { 1.0 - w };
            }
            total += m;
            masses.push((PartitionPair { l1, l2 }, m));
        }
    }
    if total <= 0.0 {
        log::warn!("degenerate omega row has no feasible support; sampling uniformly");
        let idx = rng.random_range(0..masses.len());
        return masses[idx].0;
    }
    let mut u = rng.random::<f64>() * total;
    for (pair, m) in &masses {
        u -= m;
        if u <= 0.0 {
            return *pair;
        }
    }
    masses.last().unwrap().0
}

/// Exact conditional pair probabilities for one omega row (test oracle and
/// diagnostics; same enumeration as [`sample_feasible`]).
pub fn conditional_pair_probabilities(omega_row: &[f64]) -> Vec<(PartitionPair, f64)> {
    let n = omega_row.len();
    let mut masses: Vec<(PartitionPair, f64)> = Vec::new();
    let mut total = 0.0;
    for l1 in 0..n {
        for l2 in l1..n {
            let mut m = 1.0;
            for (l, &w) in omega_row.iter().enumerate() {
                m *= if l == l1 || l == l2 { w } else { 1.0 - w };
            }
            total += m;
            masses.push((PartitionPair { l1, l2 }, m));
        }
    }
    if total > 0.0 {
        for (_, m) in &mut masses {
            *m /= total;
        }
    }
    masses
}

/// Elite empirical bit frequencies: `upsilon[k][l]` is the fraction of elite
/// samples whose device-`k` decision sets bit `l` (one bit for `l1 = l2`,
/// two bits otherwise).
pub fn update_omega(elites: &[&SampleEval], k_count: usize, l_count: usize) -> Vec<Vec<f64>> {
    assert!(!elites.is_empty());
    let mut upsilon = vec![vec![0.0; l_count]; k_count];
    for e in elites {
        for (k, p) in e.partitions.iter().enumerate() {
            upsilon[k][p.l1] += 1.0;
            if p.l2 != p.l1 {
                upsilon[k][p.l2] += 1.0;
            }
        }
    }
    let v = elites.len() as f64;
    for row in &mut upsilon {
        for w in row.iter_mut() {
            *w /= v;
        }
    }
    upsilon
}

/// Smoothing update `omega <- rho * upsilon + (1 - rho) * omega`.
pub fn smooth(omega: &mut [Vec<f64>], upsilon: &[Vec<f64>], rho: f64) {
    debug_assert!(rho > 0.0 && rho <= 1.0);
    for (o_row, u_row) in omega.iter_mut().zip(upsilon) {
        for (o, u) in o_row.iter_mut().zip(u_row) {
            *o = rho * u + (1.0 - rho) * *o;
            debug_assert!((-1e-12..=1.0 + 1e-12).contains(o));
            *o = o.clamp(0.0, 1.0);
        }
    }
}

fn omega_entropy(omega: &[Vec<f64>]) -> f64 {
    let h = |p: f64| {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
        }
    };
    omega.iter().flat_map(|row| row.iter()).map(|&p| h(p)).sum()
}

/// All joint assignments in lexicographic order (full-enumeration hook).
fn enumerate_joint(k_count: usize, pairs: &[PartitionPair]) -> Vec<Vec<PartitionPair>> {
    let mut out = Vec::with_capacity(pairs.len().pow(k_count as u32));
    let mut current = vec![pairs[0]; k_count];
    fn rec(
        k: usize,
        k_count: usize,
        pairs: &[PartitionPair],
        current: &mut Vec<PartitionPair>,
        out: &mut Vec<Vec<PartitionPair>>,
    ) {
        if k == k_count {
            out.push(current.clone());
            return;
        }
        for p in pairs {
            current[k] = *p;
            rec(k + 1, k_count, pairs, current, out);
        }
    }
    rec(0, k_count, pairs, &mut current, &mut out);
    out
}

/// Runs the cross-entropy optimizer against `solver`.
///
/// `omega` starts at 0.5 everywhere; each iteration draws
/// `samples_per_iter` assignments (deterministic per-sample seed streams,
/// evaluated in parallel), refits to the best `elite_count`, smooths, and
/// stops when the best objective has been flat for `stall_iters` iterations
/// or `max_iters` is reached. Ties in the elite sort break by sample index.
pub fn optimize(solver: &InnerSolver<'_>, params: &CeParams) -> Result<CeOutcome> {
    let k_count = solver.scenario.device_count;
    let l_count = solver.scenario.profile.last_index() + 1;
    let mut omega = vec![vec![0.5; l_count]; k_count];
    let mut history: Vec<CeIterRecord> = Vec::new();
    let mut best: Option<SampleEval> = None;
    let mut stall = 0usize;
    let mut iteration = 0usize;

    let all_joint = if params.full_enumeration {
        Some(enumerate_joint(k_count, &solver.scenario.profile.enumerate_partitions()))
    } else {
        None
    };

    while iteration < params.max_iters {
        let iter_seed = derive_seed(params.seed, STREAM_CE_ITER, iteration as u64);
        let evals: Vec<SampleEval> = match &all_joint {
            Some(joint) => joint
                .par_iter()
                .map(|parts| {
                    let (objective_s, feasible) = solver.objective(parts)?;
                    Ok(SampleEval { partitions: parts.clone(), objective_s, feasible })
                })
                .collect::<Result<_>>()?,
            None => (0..params.samples_per_iter)
                .into_par_iter()
                .map(|v| {
                    let sample_seed = derive_seed(iter_seed, STREAM_CE_SAMPLE, v as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                    let partitions: Vec<PartitionPair> =
                        omega.iter().map(|row| sample_feasible(row, &mut rng)).collect();
                    let (objective_s, feasible) = solver.objective(&partitions)?;
                    Ok(SampleEval { partitions, objective_s, feasible })
                })
                .collect::<Result<_>>()?,
        };

        // Ascending by objective, ties by sample index (stable sort).
        let mut order: Vec<usize> = (0..evals.len()).collect();
        order.sort_by(|&a, &b| evals[a].objective_s.total_cmp(&evals[b].objective_s));
        let elite_count = params.elite_count.min(evals.len());
        let elites: Vec<&SampleEval> = order[..elite_count].iter().map(|&i| &evals[i]).collect();

        let iter_best = &evals[order[0]];
        let improved = match &best {
            None => true,
            Some(b) => {
                iter_best.objective_s
                    < b.objective_s - 1e-9 * b.objective_s.abs().max(f64::MIN_POSITIVE)
            }
        };
        if improved {
            best = Some(iter_best.clone());
            stall = 0;
        } else {
            stall += 1;
        }

        let mean_elite = elites.iter().map(|e| e.objective_s).sum::<f64>() / elite_count as f64;
        let upsilon = update_omega(&elites, k_count, l_count);
        smooth(&mut omega, &upsilon, params.smoothing_rho);
        history.push(CeIterRecord {
            iteration,
            best_objective_s: best.as_ref().unwrap().objective_s,
            mean_elite_objective_s: mean_elite,
            omega_entropy: omega_entropy(&omega),
        });
        iteration += 1;
        if stall >= params.stall_iters {
            break;
        }
    }

    let best = best.expect("at least one CE iteration ran");
    let solution = solver.solve_inner(&best.partitions)?;
    Ok(CeOutcome {
        best_partitions: best.partitions,
        best_objective_s: best.objective_s,
        solution,
        state: CeState { omega, iteration, history },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beampattern::{angle_grid, synth_covariance, SynthOptions};
    use crate::dnn_profile::DnnProfile;
    use crate::inner_solver::SolverConfig;
    use crate::radio::{gen_channels, Scenario};
    use approx::assert_relative_eq;

    #[test]
    fn deterministic_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(
                sample_feasible(&[1.0, 0.0, 0.0], &mut rng),
                PartitionPair { l1: 0, l2: 0 }
            );
            assert_eq!(
                sample_feasible(&[1.0, 1.0, 0.0], &mut rng),
                PartitionPair { l1: 0, l2: 1 }
            );
        }
    }

    #[test]
    fn uniform_omega_gives_uniform_pairs() {
        let probs = conditional_pair_probabilities(&[0.5; 6]);
        assert_eq!(probs.len(), 21);
        for (_, p) in &probs {
            assert_relative_eq!(*p, 1.0 / 21.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_omega_falls_back_to_uniform() {
        // Three ones and the rest zero: no mass on any 1-or-2-bit pattern.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let row = [1.0, 1.0, 1.0, 0.0];
        for _ in 0..10 {
            let p = sample_feasible(&row, &mut rng);
            assert!(p.l1 <= p.l2 && p.l2 <= 3);
        }
    }

    #[test]
    fn empirical_frequencies_match_enumerated_probabilities() {
        // Smoke-scale chi-square; the acceptance suite runs the full version.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row = [0.3, 0.7, 0.5, 0.2];
        let probs = conditional_pair_probabilities(&row);
        let draws = 20_000usize;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_feasible(&row, &mut rng)).or_insert(0usize) += 1;
        }
        let mut chi2 = 0.0;
        for (pair, p) in &probs {
            let expect = p * draws as f64;
            let obs = *counts.get(pair).unwrap_or(&0) as f64;
            if expect > 0.0 {
                chi2 += (obs - expect).powi(2) / expect;
            }
        }
        // 9 degrees of freedom; 1e-3 critical value is ~27.9.
        assert!(chi2 < 27.9, "chi2 = {chi2}");
    }

    #[test]
    fn update_omega_bit_means() {
        let mk = |l1, l2| SampleEval {
            partitions: vec![PartitionPair { l1, l2 }],
            objective_s: 1.0,
            feasible: true,
        };
        // Bit 0 set in 3 of 4 elites.
        let elites_owned =
            vec![mk(0, 1), mk(0, 2), mk(1, 2), mk(0, 0)];
        let elites: Vec<&SampleEval> = elites_owned.iter().collect();
        let upsilon = update_omega(&elites, 1, 3);
        assert_relative_eq!(upsilon[0][0], 0.75, max_relative = 1e-12);

        // All elites identical: entries in {0, 1}.
        let same_owned = vec![mk(1, 2), mk(1, 2)];
        let same: Vec<&SampleEval> = same_owned.iter().collect();
        let upsilon = update_omega(&same, 1, 3);
        assert_eq!(upsilon[0], vec![0.0, 1.0, 1.0]);

        // Single-point pairs set exactly one bit.
        let single_owned = vec![mk(3, 3)];
        let single: Vec<&SampleEval> = single_owned.iter().collect();
        let upsilon = update_omega(&single, 1, 4);
        assert_eq!(upsilon[0], vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn smoothing_is_a_convex_combination() {
        let mut omega = vec![vec![0.5, 0.5]];
        smooth(&mut omega, &[vec![1.0, 0.0]], 0.9);
        assert_relative_eq!(omega[0][0], 0.95, max_relative = 1e-12);
        assert_relative_eq!(omega[0][1], 0.05, max_relative = 1e-12);
        smooth(&mut omega, &[vec![0.3, 0.4]], 1.0);
        assert_eq!(omega[0], vec![0.3, 0.4]);
        for row in &omega {
            for w in row {
                assert!((0.0..=1.0).contains(w));
            }
        }
    }

    fn tiny_setup(k: usize, keep_layers: usize) -> (Scenario, Vec<crate::beampattern::CovarianceTarget>) {
        let mut s = Scenario::default();
        s.device_count = k;
        s.compute.alpha_local = vec![2.0; k];
        s.compute.f_local_max = vec![0.8e9; k];
        s.compute.energy_budget_j = vec![300.0; k];
        s.compute.kappa = vec![1e-28; k];
        s.sensing = vec![s.sensing[0].clone(); k];
        s.placement_half_side_m = None;
        s.device_positions =
            (0..k).map(|i| [70.0 + 40.0 * i as f64, -50.0 + 30.0 * i as f64]).collect();
        s.profile = DnnProfile::alexnet().truncated(keep_layers).unwrap();
        let grid = angle_grid(2.0);
        let targets = s
            .sensing
            .iter()
            .map(|spec| {
                synth_covariance(
                    &spec.target_angles_rad,
                    spec.mainlobe_width_rad,
                    s.tx_power_w(),
                    s.device_antennas,
                    &grid,
                    SynthOptions::default(),
                )
                .unwrap()
                .target
            })
            .collect();
        (s, targets)
    }

    fn exhaustive_best(solver: &InnerSolver<'_>) -> f64 {
        let pairs = solver.scenario.profile.enumerate_partitions();
        let joint = enumerate_joint(solver.scenario.device_count, &pairs);
        joint
            .iter()
            .map(|parts| solver.objective(parts).unwrap().0)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn one_device_one_layer_matches_exhaustive() {
        let (s, t) = tiny_setup(1, 1);
        let ch = gen_channels(&s, 11).unwrap();
        let solver = InnerSolver::new(&s, &ch, &t, SolverConfig::default()).unwrap();
        let params = CeParams { samples_per_iter: 50, elite_count: 5, seed: 1, ..Default::default() };
        let out = optimize(&solver, &params).unwrap();
        let oracle = exhaustive_best(&solver);
        assert_relative_eq!(out.best_objective_s, oracle, max_relative = 1e-12);
    }

    #[test]
    fn full_enumeration_hook_equals_exhaustive() {
        let (s, t) = tiny_setup(2, 3);
        let ch = gen_channels(&s, 12).unwrap();
        let solver = InnerSolver::new(&s, &ch, &t, SolverConfig::default()).unwrap();
        let params =
            CeParams { full_enumeration: true, max_iters: 1, seed: 3, ..Default::default() };
        let out = optimize(&solver, &params).unwrap();
        let oracle = exhaustive_best(&solver);
        assert_eq!(out.best_objective_s, oracle);
        assert_relative_eq!(out.solution.objective_s, oracle, max_relative = 1e-12);
    }

    #[test]
    fn best_so_far_is_monotone_and_ties_break_by_index() {
        let (s, t) = tiny_setup(2, 5);
        let ch = gen_channels(&s, 13).unwrap();
        let solver = InnerSolver::new(&s, &ch, &t, SolverConfig::default()).unwrap();
        let params = CeParams {
            samples_per_iter: 200,
            elite_count: 20,
            seed: 5,
            ..Default::default()
        };
        let out = optimize(&solver, &params).unwrap();
        for w in out.state.history.windows(2) {
            assert!(w[1].best_objective_s <= w[0].best_objective_s);
        }
        // Entropy shrinks as omega concentrates.
        let first = out.state.history.first().unwrap().omega_entropy;
        let last = out.state.history.last().unwrap().omega_entropy;
        assert!(last < first);
    }

    #[test]
    fn rho_one_with_identical_elites_pins_omega() {
        let mk = |l1, l2| SampleEval {
            partitions: vec![PartitionPair { l1, l2 }],
            objective_s: 1.0,
            feasible: true,
        };
        let elites_owned = vec![mk(2, 4), mk(2, 4), mk(2, 4)];
        let elites: Vec<&SampleEval> = elites_owned.iter().collect();
        let upsilon = update_omega(&elites, 1, 6);
        let mut omega = vec![vec![0.5; 6]];
        smooth(&mut omega, &upsilon, 1.0);
        assert_eq!(omega[0], vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        // Sampling from the pinned distribution is deterministic.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            assert_eq!(sample_feasible(&omega[0], &mut rng), PartitionPair { l1: 2, l2: 4 });
        }
    }

    #[test]
    fn small_joint_search_matches_exhaustive_on_most_seeds() {
        let (s, t) = tiny_setup(2, 5);
        let mut hits = 0;
        for seed in 0..5u64 {
            let ch = gen_channels(&s, 100 + seed).unwrap();
            let solver = InnerSolver::new(&s, &ch, &t, SolverConfig::default()).unwrap();
            let params = CeParams { seed, ..Default::default() };
            let out = optimize(&solver, &params).unwrap();
            let oracle = exhaustive_best(&solver);
            let gap = (out.best_objective_s - oracle) / oracle;
            assert!(gap <= 0.01, "seed {seed}: gap {gap}");
            if gap <= 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 4, "only {hits}/5 seeds matched the oracle exactly");
    }
}
