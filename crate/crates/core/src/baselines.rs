//! Benchmark schemes and the exhaustive-search oracle.
//!
//! * `LocalOnly` pins every device at `(L, L)`.
//! * `EdDp` partitions between device and MEC only (`l2 = L`), searched by
//!   coordinate descent over devices (they couple through the shared MEC
//!   capacity).
//! * `CedWdp` runs each device's whole network on exactly one tier:
//!   `(0, 0)` cloud, `(0, L)` edge, or `(L, L)` local; exhaustive over the
//!   `3^K` combinations up to K = 12, coordinate descent beyond.
//! * `Exhaustive` scores every joint assignment under a budget guard and is
//!   the optimality oracle for the cross-entropy scheme.
//!
//! All schemes evaluate through the same [`InnerSolver`], so within a trial
//! they see identical channels, targets, and cached rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnn_profile::PartitionPair;
use crate::error::{Error, Result};
use crate::inner_solver::{InnerSolution, InnerSolver};

/// Scheme selector shared by the CLI, sweep configs, and result records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    LocalOnly,
    EdDp,
    CedWdp,
    Exhaustive,
    ProposedCe,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::LocalOnly,
        SchemeId::EdDp,
        SchemeId::CedWdp,
        SchemeId::Exhaustive,
        SchemeId::ProposedCe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeId::LocalOnly => "local_only",
            SchemeId::EdDp => "ed_dp",
            SchemeId::CedWdp => "ced_wdp",
            SchemeId::Exhaustive => "exhaustive",
            SchemeId::ProposedCe => "proposed_ce",
        }
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local_only" => Ok(SchemeId::LocalOnly),
            "ed_dp" => Ok(SchemeId::EdDp),
            "ced_wdp" => Ok(SchemeId::CedWdp),
            "exhaustive" => Ok(SchemeId::Exhaustive),
            "proposed_ce" => Ok(SchemeId::ProposedCe),
            other => Err(Error::Scenario(format!(
                "unknown scheme '{other}' (expected one of local_only, ed_dp, ced_wdp, \
                 exhaustive, proposed_ce)"
            ))),
        }
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A baseline's chosen assignment plus its full inner solution.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub partitions: Vec<PartitionPair>,
    pub solution: InnerSolution,
    /// Number of objective evaluations spent.
    pub evaluations: usize,
}

/// Every device executes the whole network locally.
pub fn run_local_only(solver: &InnerSolver<'_>) -> Result<BaselineOutcome> {
    let last = solver.scenario.profile.last_index();
    let partitions = vec![PartitionPair { l1: last, l2: last }; solver.scenario.device_count];
    let solution = solver.solve_inner(&partitions)?;
    Ok(BaselineOutcome { partitions, solution, evaluations: 1 })
}

/// Edge-device two-tier partitioning: per-device pairs `(l1, L)`, joint
/// search by coordinate descent from the all-local start.
pub fn run_ed_dp(solver: &InnerSolver<'_>) -> Result<BaselineOutcome> {
    let last = solver.scenario.profile.last_index();
    let options: Vec<PartitionPair> =
        (0..=last).map(|l1| PartitionPair { l1, l2: last }).collect();
    let per_device = vec![options; solver.scenario.device_count];
    let start = vec![PartitionPair { l1: last, l2: last }; solver.scenario.device_count];
    coordinate_descent(solver, &per_device, start)
}

/// Whole-network placement on one tier per device: cloud `(0,0)`, edge
/// `(0,L)`, or local `(L,L)`. Exhaustive for K <= 12, else coordinate
/// descent with a warning.
pub fn run_ced_wdp(solver: &InnerSolver<'_>) -> Result<BaselineOutcome> {
    let last = solver.scenario.profile.last_index();
    let options = vec![
        PartitionPair { l1: 0, l2: 0 },
        PartitionPair { l1: 0, l2: last },
        PartitionPair { l1: last, l2: last },
    ];
    let k = solver.scenario.device_count;
    let per_device = vec![options; k];
    if k <= 12 {
        exhaustive_over(solver, &per_device, u128::MAX)
    } else {
        log::warn!(
            "ced_wdp: {k} devices exceed the 3^K exhaustive guard; using coordinate descent"
        );
        let start = vec![PartitionPair { l1: last, l2: last }; k];
        coordinate_descent(solver, &per_device, start)
    }
}

/// Scores every joint assignment (optionally restricted to `l1 >= 1`) and
/// returns the global optimum. Refuses when the space exceeds `budget`.
pub fn run_exhaustive(
    solver: &InnerSolver<'_>,
    restrict_l1_ge_1: bool,
    budget: u128,
) -> Result<BaselineOutcome> {
    let pairs: Vec<PartitionPair> = solver
        .scenario
        .profile
        .enumerate_partitions()
        .into_iter()
        .filter(|p| !restrict_l1_ge_1 || p.l1 >= 1)
        .collect();
    let per_device = vec![pairs; solver.scenario.device_count];
    exhaustive_over(solver, &per_device, budget)
}

/// Exhaustive engine over per-device option lists (also the restricted
/// oracle used to validate the heuristic baselines). Assignments are
/// enumerated lexicographically with device 0 most significant; objective
/// ties resolve to the lowest index, so the winner is deterministic
/// regardless of thread scheduling.
pub fn exhaustive_over(
    solver: &InnerSolver<'_>,
    options_per_device: &[Vec<PartitionPair>],
    budget: u128,
) -> Result<BaselineOutcome> {
    let k_count = options_per_device.len();
    assert_eq!(k_count, solver.scenario.device_count);
    let mut total: u128 = 1;
    for opts in options_per_device {
        assert!(!opts.is_empty());
        total = total.saturating_mul(opts.len() as u128);
    }
    if total > budget {
        return Err(Error::BudgetExceeded { evals: total, budget });
    }
    let total = total as usize;

    let decode = |mut idx: usize| -> Vec<PartitionPair> {
        let mut assignment = vec![PartitionPair { l1: 0, l2: 0 }; k_count];
        for k in (0..k_count).rev() {
            let n = options_per_device[k].len();
            assignment[k] = options_per_device[k][idx % n];
            idx /= n;
        }
        assignment
    };

    let best = (0..total)
        .into_par_iter()
        .map(|idx| -> Result<(f64, usize)> {
            let assignment = decode(idx);
            let (objective, _) = solver.objective(&assignment)?;
            Ok((objective, idx))
        })
        .try_reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| {
                Ok(match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
                    std::cmp::Ordering::Greater => b,
                    _ => a,
                })
            },
        )?;

    let partitions = decode(best.1);
    let solution = solver.solve_inner(&partitions)?;
    Ok(BaselineOutcome { partitions, solution, evaluations: total })
}

/// Cyclic coordinate descent: exhausts one device's options holding the
/// others fixed, repeats until a full cycle makes no strict improvement.
pub fn coordinate_descent(
    solver: &InnerSolver<'_>,
    options_per_device: &[Vec<PartitionPair>],
    start: Vec<PartitionPair>,
) -> Result<BaselineOutcome> {
    let k_count = options_per_device.len();
    let mut current = start;
    let (mut best_obj, _) = solver.objective(&current)?;
    let mut evaluations = 1;
    loop {
        let mut improved = false;
        for k in 0..k_count {
            let mut best_pair = current[k];
            for &candidate in &options_per_device[k] {
                if candidate == current[k] {
                    continue;
                }
                let mut trial = current.clone();
                trial[k] = candidate;
                let (obj, _) = solver.objective(&trial)?;
                evaluations += 1;
                if obj < best_obj {
                    best_obj = obj;
                    best_pair = candidate;
                    improved = true;
                }
            }
            current[k] = best_pair;
        }
        if !improved {
            break;
        }
    }
    let solution = solver.solve_inner(&current)?;
    Ok(BaselineOutcome { partitions: current, solution, evaluations })
}
