//! Closed-form optimal allocation of MEC and local CPU frequencies.
//!
//! The MEC allocation splits the server capacity proportionally to
//! `sqrt(s_k / alpha_k)`, which equalizes `s_k / (alpha_k f_k^2)` across
//! devices (the KKT stationarity condition of the latency sum under the
//! capacity constraint). The local allocation is the smaller of the device
//! frequency cap and the highest frequency the energy budget allows.

use serde::{Deserialize, Serialize};

/// Per-device frequency allocations in cycles/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    pub f_mec: Vec<f64>,
    pub f_local: Vec<f64>,
}

/// Optimal MEC frequency split:
/// `f_k = sqrt(s_k / alpha_k) / sum_i sqrt(s_i / alpha_i) * f_total`.
///
/// Devices with zero MEC workload receive exactly zero; if no device has MEC
/// work the whole vector is zero.
pub fn alloc_mec(s_mec: &[f64], alpha_mec: &[f64], f_total: f64) -> Vec<f64> {
    assert_eq!(s_mec.len(), alpha_mec.len());
    assert!(f_total > 0.0);
    let weights: Vec<f64> = s_mec
        .iter()
        .zip(alpha_mec)
        .map(|(&s, &alpha)| {
            debug_assert!(s >= 0.0 && alpha > 0.0);
            (s / alpha).sqrt()
        })
        .collect();
    let denom: f64 = weights.iter().sum();
    if denom == 0.0 {
        return vec![0.0; s_mec.len()];
    }
    weights.iter().map(|w| w / denom * f_total).collect()
}

/// Optimal local frequency: `min(f_max, sqrt(e_budget * alpha / (kappa * s)))`.
///
/// With zero local workload the latency is zero for any frequency; the cap
/// is returned as the canonical choice.
pub fn alloc_local(s_local: f64, alpha_local: f64, f_max: f64, e_budget: f64, kappa: f64) -> f64 {
    debug_assert!(s_local >= 0.0 && alpha_local > 0.0 && f_max > 0.0);
    debug_assert!(e_budget > 0.0 && kappa > 0.0);
    if s_local == 0.0 {
        return f_max;
    }
    f_max.min((e_budget * alpha_local / (kappa * s_local)).sqrt())
}

/// Computational energy in joules: `kappa * s * f^2 / alpha`.
pub fn energy(s_local: f64, f_local: f64, alpha_local: f64, kappa: f64) -> f64 {
    kappa * s_local * f_local * f_local / alpha_local
}
