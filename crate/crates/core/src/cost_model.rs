//! Per-device inference latency and energy under a given partition.
//!
//! Five additive components: local execution, device-to-MEC feature upload,
//! MEC execution, MEC-to-cloud backhaul transfer, and cloud execution.
//! Components whose workload or transfer is zero are exactly zero. A
//! required rate or frequency of zero with positive work yields infinite
//! components (the infeasible-sample sentinel); NaN never occurs because
//! feature sizes are strictly positive.

use serde::{Deserialize, Serialize};

use crate::dnn_profile::{DnnProfile, PartitionPair, WorkloadSplit};
use crate::radio::Scenario;
use crate::resource_alloc::energy;

/// Latency components in seconds plus the device's computation energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_local: f64,
    pub t_offload_dev_mec: f64,
    pub t_mec: f64,
    pub t_offload_mec_cloud: f64,
    pub t_cloud: f64,
    /// Sum of the five components.
    pub total: f64,
    pub energy_j: f64,
}

impl LatencyBreakdown {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// How terminal layers are charged for transfers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferRule {
    /// No device-to-BS transfer when `l1 = L` and no BS-to-cloud transfer
    /// when `l2 = L`: the classification result itself is not shipped.
    #[default]
    SkipTerminal,
    /// Charge `o(l1)/R` and `o(l2)/r_b` unconditionally.
    Strict,
}

/// Latency breakdown for device `k` under `split` at partition `p`.
///
/// `rate_bps` is the device's uplink rate; frequencies are the allocated
/// CPU speeds. The relay case `l1 = l2 < L` ships the same feature size
/// over both hops.
#[allow(clippy::too_many_arguments)]
pub fn latency(
    split: WorkloadSplit,
    p: PartitionPair,
    profile: &DnnProfile,
    rate_bps: f64,
    f_local: f64,
    f_mec: f64,
    k: usize,
    scenario: &Scenario,
    rule: TransferRule,
) -> LatencyBreakdown {
    let last = profile.last_index();
    let alpha_l = scenario.compute.alpha_local[k];
    let t_local = if split.s_local == 0 { 0.0 } else { split.s_local as f64 / (alpha_l * f_local) };
    let t_offload_dev_mec = if rule == TransferRule::Strict || p.l1 < last {
        profile.out_bits(p.l1) as f64 / rate_bps
    } else {
        0.0
    };
    let t_mec = if split.s_mec == 0 {
        0.0
    } else {
        split.s_mec as f64 / (scenario.compute.alpha_mec * f_mec)
    };
    let t_offload_mec_cloud = if rule == TransferRule::Strict || p.l2 < last {
        profile.out_bits(p.l2) as f64 / scenario.compute.backhaul_bps
    } else {
        0.0
    };
    let t_cloud = if split.s_cloud == 0 {
        0.0
    } else {
        split.s_cloud as f64 / (scenario.compute.alpha_cloud * scenario.compute.f_cloud)
    };
    let total = t_local + t_offload_dev_mec + t_mec + t_offload_mec_cloud + t_cloud;
    let energy_j = if split.s_local == 0 {
        0.0
    } else {
        energy(split.s_local as f64, f_local, alpha_l, scenario.compute.kappa[k])
    };
    LatencyBreakdown {
        t_local,
        t_offload_dev_mec,
        t_mec,
        t_offload_mec_cloud,
        t_cloud,
        total,
        energy_j,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnn_profile::DnnProfile;
    use approx::assert_relative_eq;

    fn scenario() -> Scenario {
        let mut s = Scenario::default();
        s.device_count = 1;
        s.compute.alpha_local = vec![2.0];
        s.compute.f_local_max = vec![0.8e9];
        s.compute.energy_budget_j = vec![300.0];
        s.compute.kappa = vec![1e-28];
        s.sensing = vec![s.sensing[0].clone()];
        s
    }

    #[test]
    fn full_local_charges_no_transfers() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        let last = p.last_index();
        let pair = PartitionPair { l1: last, l2: last };
        let split = p.workload_split(pair).unwrap();
        let b = latency(split, pair, &p, 1e6, 0.8e9, 0.0, 0, &s, TransferRule::SkipTerminal);
        assert_eq!(b.t_offload_dev_mec, 0.0);
        assert_eq!(b.t_offload_mec_cloud, 0.0);
        assert_eq!(b.t_mec, 0.0);
        assert_eq!(b.t_cloud, 0.0);
        assert_relative_eq!(
            b.total,
            p.total_flops() as f64 / (2.0 * 0.8e9),
            max_relative = 1e-12
        );
        // Strict mode charges the classification output on both hops.
        let strict = latency(split, pair, &p, 1e6, 0.8e9, 0.0, 0, &s, TransferRule::Strict);
        assert_relative_eq!(
            strict.t_offload_dev_mec,
            p.out_bits(last) as f64 / 1e6,
            max_relative = 1e-12
        );
        assert!(strict.total > b.total);
    }

    #[test]
    fn local_latency_arithmetic() {
        // 1.6e9 FLOPs at alpha 2, f 0.8e9 -> exactly 1 second.
        let s = scenario();
        let p = DnnProfile::alexnet();
        let pair = PartitionPair { l1: 3, l2: p.last_index() };
        let mut split = p.workload_split(pair).unwrap();
        split.s_local = 1_600_000_000;
        let b = latency(split, pair, &p, 1e9, 0.8e9, 1e9, 0, &s, TransferRule::SkipTerminal);
        assert_relative_eq!(b.t_local, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn full_cloud_relays_the_input_over_both_hops() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        let pair = PartitionPair { l1: 0, l2: 0 };
        let split = p.workload_split(pair).unwrap();
        let rate = 2e7;
        let b = latency(split, pair, &p, rate, 0.8e9, 0.0, 0, &s, TransferRule::SkipTerminal);
        let input_bits = p.out_bits(0) as f64;
        assert_eq!(b.t_local, 0.0);
        assert_eq!(b.t_mec, 0.0);
        assert_relative_eq!(b.t_offload_dev_mec, input_bits / rate, max_relative = 1e-12);
        assert_relative_eq!(b.t_offload_mec_cloud, input_bits / 2e6, max_relative = 1e-12);
        assert_relative_eq!(
            b.t_cloud,
            p.total_flops() as f64 / (8.0 * 20e9),
            max_relative = 1e-12
        );
        assert_eq!(b.energy_j, 0.0);
    }

    #[test]
    fn components_are_additive_and_energy_matches() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        for pair in p.enumerate_partitions() {
            let split = p.workload_split(pair).unwrap();
            let b = latency(split, pair, &p, 5e7, 0.6e9, 2e9, 0, &s, TransferRule::SkipTerminal);
            let sum = b.t_local + b.t_offload_dev_mec + b.t_mec + b.t_offload_mec_cloud + b.t_cloud;
            assert_eq!(b.total, sum);
            assert!(b.total.is_finite() && b.total >= 0.0);
            assert_relative_eq!(
                b.energy_j,
                1e-28 * split.s_local as f64 * 0.6e9 * 0.6e9 / 2.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn faster_links_and_cpus_strictly_help() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        let pair = PartitionPair { l1: 2, l2: 8 };
        let split = p.workload_split(pair).unwrap();
        let base = latency(split, pair, &p, 5e7, 0.6e9, 2e9, 0, &s, TransferRule::SkipTerminal);
        let fast_rate =
            latency(split, pair, &p, 1e8, 0.6e9, 2e9, 0, &s, TransferRule::SkipTerminal);
        let fast_cpu =
            latency(split, pair, &p, 5e7, 0.8e9, 2e9, 0, &s, TransferRule::SkipTerminal);
        assert!(fast_rate.total < base.total);
        assert!(fast_cpu.total < base.total);
    }

    #[test]
    fn zero_rate_with_positive_transfer_is_infinite_not_nan() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        let pair = PartitionPair { l1: 0, l2: 3 };
        let split = p.workload_split(pair).unwrap();
        let b = latency(split, pair, &p, 0.0, 0.8e9, 1e9, 0, &s, TransferRule::SkipTerminal);
        assert!(b.t_offload_dev_mec.is_infinite());
        assert!(b.total.is_infinite());
        assert!(!b.total.is_nan());
        assert!(!b.is_finite());
    }

    #[test]
    fn relay_case_charges_same_feature_size_twice() {
        let s = scenario();
        let p = DnnProfile::alexnet();
        let pair = PartitionPair { l1: 4, l2: 4 };
        let split = p.workload_split(pair).unwrap();
        assert_eq!(split.s_mec, 0);
        let b = latency(split, pair, &p, 1e7, 0.8e9, 0.0, 0, &s, TransferRule::SkipTerminal);
        let o = p.out_bits(4) as f64;
        assert_relative_eq!(b.t_offload_dev_mec, o / 1e7, max_relative = 1e-12);
        assert_relative_eq!(b.t_offload_mec_cloud, o / 2e6, max_relative = 1e-12);
        assert_eq!(b.t_mec, 0.0);
    }
}
