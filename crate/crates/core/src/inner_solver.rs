//! Inner-layer orchestration: for a fixed partition assignment, produce
//! resource allocations, beamformers, rates, per-device latency, and the
//! total-latency objective.
//!
//! The two inner subproblems are independent: the closed-form frequency
//! allocations depend only on the workload split, and the beamforming
//! problem depends only on the offloaded feature sizes. Under the fixed
//! covariance constraint the converged rates are invariant to the
//! beamforming weights (each device's precoder update does not involve
//! them), which licenses the rate cache: one solve per channel realization,
//! reused across every candidate assignment. `cache_rates: false` re-runs
//! the full beamforming solve per evaluation for fidelity experiments.

use crate::beamforming::{self, BeamformerSet, SolveOutcome, SolverOptions};
use crate::beampattern::CovarianceTarget;
use crate::cost_model::{latency, LatencyBreakdown, TransferRule};
use crate::dnn_profile::{PartitionPair, WorkloadSplit};
use crate::error::Result;
use crate::radio::{ChannelSet, Scenario};
use crate::resource_alloc::{alloc_local, alloc_mec, AllocationVector};

/// Inner-solver configuration shared by all schemes.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Compute rates once per channel realization and reuse them across
    /// candidate assignments.
    pub cache_rates: bool,
    /// Terminal-layer transfer charging rule.
    pub transfer_rule: TransferRule,
    pub beamforming: SolverOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cache_rates: true,
            transfer_rule: TransferRule::SkipTerminal,
            beamforming: SolverOptions::default(),
        }
    }
}

/// Rates and beamformers computed once per channel realization.
#[derive(Debug, Clone)]
pub struct RateCache {
    pub rates_bps: Vec<f64>,
    pub beamformers: BeamformerSet,
}

/// Everything the objective of one assignment resolves to.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub allocations: AllocationVector,
    pub beamformers: BeamformerSet,
    pub rates_bps: Vec<f64>,
    pub splits: Vec<WorkloadSplit>,
    pub per_device: Vec<LatencyBreakdown>,
    /// Sum of per-device totals in seconds; `f64::INFINITY` iff infeasible.
    pub objective_s: f64,
    pub feasible: bool,
}

/// Evaluator bound to one (scenario, channels, covariance targets) triple.
///
/// Reentrant: evaluations borrow immutable state only, so the cross-entropy
/// loop and the exhaustive oracle evaluate assignments from worker threads
/// without synchronization.
pub struct InnerSolver<'a> {
    pub scenario: &'a Scenario,
    pub channels: &'a ChannelSet,
    pub targets: &'a [CovarianceTarget],
    pub config: SolverConfig,
    cache: Option<RateCache>,
}

impl<'a> InnerSolver<'a> {
    /// Binds the evaluator; with `cache_rates` set this runs the beamforming
    /// solve once (unit weights) and keeps the rates.
    pub fn new(
        scenario: &'a Scenario,
        channels: &'a ChannelSet,
        targets: &'a [CovarianceTarget],
        config: SolverConfig,
    ) -> Result<Self> {
        let cache = if config.cache_rates {
            let outcome = beamforming::solve(
                &vec![1.0; scenario.device_count],
                channels,
                targets,
                scenario.data_streams,
                scenario.bandwidth_hz,
                &config.beamforming,
            )?;
            Some(RateCache { rates_bps: outcome.rates_bps, beamformers: outcome.beamformers })
        } else {
            None
        };
        Ok(Self { scenario, channels, targets, config, cache })
    }

    pub fn rate_cache(&self) -> Option<&RateCache> {
        self.cache.as_ref()
    }

    /// Offloaded feature size per device: `o_k(l1)`, zero when the terminal
    /// rule waives the transfer.
    fn offload_bits(&self, partitions: &[PartitionPair]) -> Vec<f64> {
        let last = self.scenario.profile.last_index();
        partitions
            .iter()
            .map(|p| {
                if self.config.transfer_rule == TransferRule::Strict || p.l1 < last {
                    self.scenario.profile.out_bits(p.l1) as f64
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn allocations_for(&self, partitions: &[PartitionPair]) -> Result<AllocationVector> {
        let k_count = self.scenario.device_count;
        let mut s_mec = Vec::with_capacity(k_count);
        let mut f_local = Vec::with_capacity(k_count);
        for (k, p) in partitions.iter().enumerate() {
            let split = self.scenario.profile.workload_split(*p)?;
            s_mec.push(split.s_mec as f64);
            f_local.push(alloc_local(
                split.s_local as f64,
                self.scenario.compute.alpha_local[k],
                self.scenario.compute.f_local_max[k],
                self.scenario.compute.energy_budget_j[k],
                self.scenario.compute.kappa[k],
            ));
        }
        let alpha_mec = vec![self.scenario.compute.alpha_mec; k_count];
        let f_mec = alloc_mec(&s_mec, &alpha_mec, self.scenario.compute.f_mec_total);
        Ok(AllocationVector { f_mec, f_local })
    }

    /// Rates for this assignment: the cache when enabled, otherwise a fresh
    /// beamforming solve with this assignment's offload weights.
    fn rates_for(&self, partitions: &[PartitionPair]) -> Result<(Vec<f64>, Option<SolveOutcome>)> {
        if let Some(cache) = &self.cache {
            return Ok((cache.rates_bps.clone(), None));
        }
        let weights = self.offload_bits(partitions);
        let outcome = beamforming::solve(
            &weights,
            self.channels,
            self.targets,
            self.scenario.data_streams,
            self.scenario.bandwidth_hz,
            &self.config.beamforming,
        )?;
        Ok((outcome.rates_bps.clone(), Some(outcome)))
    }

    fn breakdowns(
        &self,
        partitions: &[PartitionPair],
        allocations: &AllocationVector,
        rates: &[f64],
    ) -> Result<Vec<LatencyBreakdown>> {
        partitions
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let split = self.scenario.profile.workload_split(*p)?;
                Ok(latency(
                    split,
                    *p,
                    &self.scenario.profile,
                    rates[k],
                    allocations.f_local[k],
                    allocations.f_mec[k],
                    k,
                    self.scenario,
                    self.config.transfer_rule,
                ))
            })
            .collect()
    }

    /// Objective of one assignment: `(sum of per-device totals, feasible)`.
    /// This is the hot path of the search loops; it skips cloning the
    /// beamformer set.
    pub fn objective(&self, partitions: &[PartitionPair]) -> Result<(f64, bool)> {
        debug_assert_eq!(partitions.len(), self.scenario.device_count);
        let allocations = self.allocations_for(partitions)?;
        let (rates, _) = self.rates_for(partitions)?;
        let mut total = 0.0;
        for b in self.breakdowns(partitions, &allocations, &rates)? {
            total += b.total;
        }
        let feasible = total.is_finite();
        Ok((if feasible { total } else { f64::INFINITY }, feasible))
    }

    /// Full solution record for one assignment.
    pub fn solve_inner(&self, partitions: &[PartitionPair]) -> Result<InnerSolution> {
        debug_assert_eq!(partitions.len(), self.scenario.device_count);
        let allocations = self.allocations_for(partitions)?;
        let (rates, outcome) = self.rates_for(partitions)?;
        let beamformers = match outcome {
            Some(o) => o.beamformers,
            None => self.cache.as_ref().expect("cache or outcome").beamformers.clone(),
        };
        let per_device = self.breakdowns(partitions, &allocations, &rates)?;
        let splits = partitions
            .iter()
            .map(|p| self.scenario.profile.workload_split(*p))
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = per_device.iter().map(|b| b.total).sum();
        let feasible = total.is_finite();
        Ok(InnerSolution {
            allocations,
            beamformers,
            rates_bps: rates,
            splits,
            per_device,
            objective_s: if feasible { total } else { f64::INFINITY },
            feasible,
        })
    }
}
