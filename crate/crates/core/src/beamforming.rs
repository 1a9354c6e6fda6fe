//! Fixed-covariance uplink beamforming solver.
//!
//! Minimizes the weighted sum of inverse rates `sum_k o_k / R_k` over the
//! per-device ISAC beamformers `W_k = [Wc_k, Wr_k]` subject to the sensing
//! covariance equality `W_k W_k^H = R_k` (a pre-designed target from
//! [`crate::beampattern`]). The covariance constraint fixes every device's
//! transmit covariance, so the aggregate receive covariance
//! `J = sum_i H_i R_i H_i^H + sigma^2 I` is a constant of the problem.
//!
//! Structure: a majorization-minimization outer loop turns the
//! sum-of-ratios objective into a weighted sum rate; each surrogate is
//! maximized by a WMMSE block coordinate descent whose three blocks all
//! have closed forms — the MMSE receiver `U`, the weight matrix
//! `G = E^{-1}`, and the precoder via an orthogonal Procrustes problem
//! solved by SVD after whitening with the Cholesky factor of the covariance
//! target.

use crate::beampattern::CovarianceTarget;
use crate::error::{Error, Result};
use crate::linalg::{cx, full_svd, hermitize, hpd_cholesky, logdet_hpd, CMat};
use crate::radio::{rate, ChannelSet};

/// Per-device communication and radar precoder blocks plus the (jittered)
/// Cholesky factors of the covariance targets they were built from.
///
/// `Wc_k Wc_k^H + Wr_k Wr_k^H = Q_k Q_k^H` holds by construction, which
/// matches the covariance target up to the Cholesky jitter (well inside
/// 1e-8 relative).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// Nt x d communication precoders (sqrt-watts).
    pub w_c: Vec<CMat>,
    /// Nt x (Nt - d) radar precoders; zero columns when d = Nt.
    pub w_r: Vec<CMat>,
    /// Cholesky factors of the covariance targets.
    pub q: Vec<CMat>,
}

impl BeamformerSet {
    /// Realized transmit covariance of device `k`.
    pub fn covariance(&self, k: usize) -> CMat {
        &self.w_c[k] * self.w_c[k].adjoint() + &self.w_r[k] * self.w_r[k].adjoint()
    }

    /// Largest relative covariance mismatch over devices.
    pub fn covariance_residual(&self, targets: &[CovarianceTarget]) -> f64 {
        (0..self.w_c.len())
            .map(|k| (self.covariance(k) - &targets[k].r).norm() / targets[k].r.norm())
            .fold(0.0, f64::max)
    }
}

/// Receiver-side state of the WMMSE iteration.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    /// d x M receive filters, one per device.
    pub u: Vec<CMat>,
    /// d x d Hermitian positive definite weights.
    pub g: Vec<CMat>,
}

/// Outer-loop state: surrogate weights, current rates, and the objective.
#[derive(Debug, Clone)]
pub struct MmState {
    /// Surrogate weights z_k; zero for devices with zero offload bits.
    pub weights_z: Vec<f64>,
    pub rates_bps: Vec<f64>,
    /// `sum_k o_k / R_k` over weighted devices, in seconds.
    pub objective_s: f64,
    pub iteration: usize,
}

/// Solver tolerances and trace switch.
///
/// Both stopping rules measure quantities that do not involve the objective
/// weights (precoder change for the inner loop, rate change for the outer
/// loop), so the beamformer trajectory is identical for any positive weight
/// vector; only the recorded objectives differ.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative precoder change that stops the WMMSE inner loop.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Relative per-device rate change that stops the MM outer loop.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Record per-block objective values for convergence plots.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-9,
            inner_max_iter: 100,
            outer_tol: 1e-8,
            outer_max_iter: 50,
            trace: false,
        }
    }
}

/// Convergence trace for diagnostics and plots.
#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    /// Objective in seconds after each outer iteration, starting from the
    /// initial point.
    pub mm_objective_s: Vec<f64>,
    /// Per outer iteration: the weighted WMMSE objective after every block
    /// update, three entries (U, G, W) per inner sweep.
    pub inner_objectives: Vec<Vec<f64>>,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub beamformers: BeamformerSet,
    /// Exact rates of the returned beamformers, recomputed via [`rate`].
    pub rates_bps: Vec<f64>,
    /// Sum over weighted devices of `o_k / R_k` in seconds;
    /// `f64::INFINITY` iff `feasible` is false.
    pub objective_s: f64,
    pub feasible: bool,
    pub outer_iterations: usize,
    /// Largest covariance-constraint residual seen across all OPP updates.
    pub max_covariance_residual: f64,
    pub trace: SolverTrace,
}

/// Constant matrices of one solve: the aggregate receive covariance, its
/// inverse applied to each channel, and the whitening factors.
pub struct SystemMatrices {
    /// `J = sum_i H_i R_i H_i^H + sigma^2 I` (M x M, Hermitian PD).
    pub j: CMat,
    /// `P_k = H_k^H J^{-1}` (Nt x M).
    pub p: Vec<CMat>,
    /// Jittered Cholesky factors `Q_k` of the covariance targets.
    pub q: Vec<CMat>,
}

impl SystemMatrices {
    pub fn new(channels: &ChannelSet, targets: &[CovarianceTarget]) -> Result<Self> {
        let k_count = channels.h.len();
        if targets.len() != k_count {
            return Err(Error::Scenario(format!(
                "expected {k_count} covariance targets, got {}",
                targets.len()
            )));
        }
        let m = channels.h[0].nrows();
        let mut j = CMat::identity(m, m) * cx(channels.noise_var, 0.0);
        for i in 0..k_count {
            j += &channels.h[i] * hermitize(&targets[i].r) * channels.h[i].adjoint();
        }
        let j = hermitize(&j);
        let chol = hpd_cholesky(&j)?;
        let p: Vec<CMat> = (0..k_count)
            .map(|k| chol.solve(&channels.h[k]).adjoint())
            .collect();
        let mut q = Vec::with_capacity(k_count);
        for t in targets {
            q.push(t.cholesky_factor()?.0);
        }
        Ok(Self { j, p, q })
    }
}

/// MMSE receive filter for device `k`:
/// `U* = Wc_k^H H_k^H (sum_i H_i R_i H_i^H + sigma^2 I)^{-1}`.
pub fn mmse_receiver(
    k: usize,
    w_c: &[CMat],
    channels: &ChannelSet,
    targets: &[CovarianceTarget],
) -> Result<CMat> {
    let sys = SystemMatrices::new(channels, targets)?;
    Ok(mmse_receiver_with(k, w_c, &sys))
}

fn mmse_receiver_with(k: usize, w_c: &[CMat], sys: &SystemMatrices) -> CMat {
    w_c[k].adjoint() * &sys.p[k]
}

/// MSE matrix of device `k` for an arbitrary receive filter `u`:
/// `E = I - U H_k Wc_k - (U H_k Wc_k)^H + U J U^H`.
///
/// With the MMSE receiver this reduces to
/// `E* = I - Wc_k^H H_k^H J^{-1} H_k Wc_k`.
pub fn mse_matrix(
    k: usize,
    u: &CMat,
    w_c: &[CMat],
    channels: &ChannelSet,
    targets: &[CovarianceTarget],
) -> Result<CMat> {
    let sys = SystemMatrices::new(channels, targets)?;
    Ok(mse_matrix_with(k, u, w_c, channels, &sys))
}

fn mse_matrix_with(
    k: usize,
    u: &CMat,
    w_c: &[CMat],
    channels: &ChannelSet,
    sys: &SystemMatrices,
) -> CMat {
    let d = w_c[k].ncols();
    let a = u * &channels.h[k] * &w_c[k];
    let mut e = CMat::identity(d, d);
    e -= &a;
    e -= a.adjoint();
    e += u * &sys.j * u.adjoint();
    hermitize(&e)
}

/// Optimal WMMSE weight: `G = E^{-1}` (Hermitian positive definite).
pub fn weight_update(e: &CMat) -> Result<CMat> {
    let d = e.nrows();
    let chol = hpd_cholesky(e)
        .map_err(|_| Error::Numeric("MSE matrix is singular; cannot form weight".into()))?;
    Ok(hermitize(&chol.solve(&CMat::identity(d, d))))
}

/// Precoder update via the orthogonal Procrustes problem.
///
/// Builds `T_k = Q_k^H H_k^H U_k^H G_k^H`, takes the SVD `T = A S B^H`, and
/// returns `Wc = Q A[:, :d] B^H`, `Wr = Q A[:, d:]`. This maximizes
/// `Re tr(G U H Wc)` over whitened precoders with orthonormal columns and
/// satisfies the covariance equality by construction.
pub fn opp_update(
    k: usize,
    u: &CMat,
    g: &CMat,
    channels: &ChannelSet,
    targets: &[CovarianceTarget],
) -> Result<(CMat, CMat)> {
    let sys = SystemMatrices::new(channels, targets)?;
    opp_update_with(k, u, g, channels, &sys)
}

fn opp_update_with(
    k: usize,
    u: &CMat,
    g: &CMat,
    channels: &ChannelSet,
    sys: &SystemMatrices,
) -> Result<(CMat, CMat)> {
    let nt = sys.q[k].nrows();
    let d = u.nrows();
    let t = sys.q[k].adjoint() * channels.h[k].adjoint() * u.adjoint() * g.adjoint();
    let svd = full_svd(&t)?;
    let w_c_hat = svd.u_full.columns(0, d) * svd.v.adjoint();
    let w_r_hat = svd.u_full.columns(d, nt - d).into_owned();
    Ok((&sys.q[k] * w_c_hat, &sys.q[k] * w_r_hat))
}

/// Weighted WMMSE objective `sum_k z_k (Re tr(G_k E_k) - ln det G_k)`;
/// devices with `z_k = 0` are excluded.
///
/// Also returns a floating-point noise bound for the objective value:
/// evaluating `tr(G E)` loses roughly `eps * cond(E)` absolute accuracy,
/// which matters for devices very close to the BS (SNR beyond ~90 dB makes
/// `E` nearly singular). The monotonicity assertions add this floor so they
/// stay sharp at ordinary conditioning without tripping on roundoff.
fn wmmse_objective(
    z: &[f64],
    state: &ReceiverState,
    w_c: &[CMat],
    channels: &ChannelSet,
    sys: &SystemMatrices,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut noise = 0.0;
    for k in 0..z.len() {
        if z[k] == 0.0 {
            continue;
        }
        let e = mse_matrix_with(k, &state.u[k], w_c, channels, sys);
        let tr: f64 = (&state.g[k] * &e).diagonal().iter().map(|v| v.re).sum();
        total += z[k] * (tr - logdet_hpd(&state.g[k])?);
        noise += z[k] * e.norm() * state.g[k].norm() * e.nrows() as f64;
    }
    Ok((total, noise * 1e-13))
}

fn rates_for(
    w_c: &[CMat],
    w_r: &[CMat],
    channels: &ChannelSet,
    bandwidth_hz: f64,
) -> Result<Vec<f64>> {
    (0..w_c.len())
        .map(|k| rate(k, w_c, w_r, channels, bandwidth_hz))
        .collect()
}

/// `sum_k o_k / R_k` over devices with `o_k > 0`; infinite if any weighted
/// device has zero rate.
pub fn ratio_objective(weights_bits: &[f64], rates_bps: &[f64]) -> f64 {
    let mut total = 0.0;
    for (o, r) in weights_bits.iter().zip(rates_bps) {
        if *o > 0.0 {
            if *r <= 0.0 {
                return f64::INFINITY;
            }
            total += o / r;
        }
    }
    total
}

/// Solves the fixed-covariance beamforming problem.
///
/// * `weights_bits[k]` — the feature size device `k` must offload (`o_k(l1)`);
///   zero excludes the device from the objective but it still receives
///   feasible beamformers.
/// * `d_streams` — number of communication streams (columns of `Wc`).
///
/// Precoders start from the whitened identity split `W = Q`. The returned
/// rates are recomputed exactly with [`rate`] on the final beamformers. A
/// weighted device whose rate is numerically zero renders the outcome
/// infeasible (`objective_s = INFINITY`).
pub fn solve(
    weights_bits: &[f64],
    channels: &ChannelSet,
    targets: &[CovarianceTarget],
    d_streams: usize,
    bandwidth_hz: f64,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let k_count = channels.h.len();
    assert_eq!(weights_bits.len(), k_count);
    let sys = SystemMatrices::new(channels, targets)?;
    let nt = sys.q[0].nrows();
    assert!(d_streams >= 1 && d_streams <= nt);
    let d = d_streams;

    // Feasible start: whitened identity split, W = Q.
    let mut w_c: Vec<CMat> = (0..k_count).map(|k| sys.q[k].columns(0, d).into_owned()).collect();
    let mut w_r: Vec<CMat> =
        (0..k_count).map(|k| sys.q[k].columns(d, nt - d).into_owned()).collect();
    let mut max_residual = 0.0f64;
    let mut trace = SolverTrace::default();

    let any_weighted = weights_bits.iter().any(|&o| o > 0.0);
    if !any_weighted {
        // Nothing to optimize: one U/G/W sweep from the identity split keeps
        // the beamformers feasible and deterministic.
        let mut state = ReceiverState {
            u: (0..k_count).map(|k| mmse_receiver_with(k, &w_c, &sys)).collect(),
            g: vec![CMat::identity(d, d); k_count],
        };
        for k in 0..k_count {
            let e = mse_matrix_with(k, &state.u[k], &w_c, channels, &sys);
            state.g[k] = weight_update(&e)?;
        }
        for k in 0..k_count {
            let (c, r) = opp_update_with(k, &state.u[k], &state.g[k], channels, &sys)?;
            w_c[k] = c;
            w_r[k] = r;
        }
        let beamformers = BeamformerSet { w_c, w_r, q: sys.q.clone() };
        max_residual = max_residual.max(beamformers.covariance_residual(targets));
        let rates_bps = rates_for(&beamformers.w_c, &beamformers.w_r, channels, bandwidth_hz)?;
        return Ok(SolveOutcome {
            beamformers,
            rates_bps,
            objective_s: 0.0,
            feasible: true,
            outer_iterations: 0,
            max_covariance_residual: max_residual,
            trace,
        });
    }

    let mut rates = rates_for(&w_c, &w_r, channels, bandwidth_hz)?;
    let mut objective = ratio_objective(weights_bits, &rates);
    trace.mm_objective_s.push(objective);
    let mut feasible = objective.is_finite();
    let mut outer_iterations = 0;

    let mut state = ReceiverState {
        u: vec![CMat::zeros(d, channels.h[0].nrows()); k_count],
        g: vec![CMat::identity(d, d); k_count],
    };

    if feasible {
        for outer in 0..opts.outer_max_iter {
            outer_iterations = outer + 1;
            // Surrogate weights from the current rates.
            let denom: f64 = weights_bits
                .iter()
                .zip(&rates)
                .filter(|(o, _)| **o > 0.0)
                .map(|(o, r)| o / r)
                .sum();
            let z: Vec<f64> = weights_bits
                .iter()
                .zip(&rates)
                .map(|(o, r)| if *o > 0.0 { (o / (r * r)) / (denom * denom) } else { 0.0 })
                .collect();

            // WMMSE block coordinate descent on the surrogate. The stopping
            // rule is the relative precoder change, which does not involve
            // the weights: the entire iterate sequence is therefore
            // weight-independent, making the converged rates exactly
            // invariant to the weight vector (this licenses the rate cache).
            let mut inner_trace = Vec::new();
            let mut h_prev = f64::INFINITY;
            let mut noise_prev = 0.0;
            for _inner in 0..opts.inner_max_iter {
                for k in 0..k_count {
                    state.u[k] = mmse_receiver_with(k, &w_c, &sys);
                }
                let (h_u, n_u) = wmmse_objective(&z, &state, &w_c, channels, &sys)?;
                debug_assert!(h_u <= h_prev + 1e-8 * h_prev.abs() + noise_prev + n_u + 1e-30);
                for k in 0..k_count {
                    let e = mse_matrix_with(k, &state.u[k], &w_c, channels, &sys);
                    state.g[k] = weight_update(&e)?;
                }
                let (h_g, n_g) = wmmse_objective(&z, &state, &w_c, channels, &sys)?;
                debug_assert!(h_g <= h_u + 1e-8 * h_u.abs() + n_u + n_g + 1e-30);
                let mut w_change = 0.0f64;
                for k in 0..k_count {
                    let (c, r) = opp_update_with(k, &state.u[k], &state.g[k], channels, &sys)?;
                    let scale = w_c[k].norm() + w_r[k].norm();
                    w_change = w_change.max(((&c - &w_c[k]).norm() + (&r - &w_r[k]).norm()) / scale);
                    w_c[k] = c;
                    w_r[k] = r;
                }
                let (h_w, n_w) = wmmse_objective(&z, &state, &w_c, channels, &sys)?;
                debug_assert!(h_w <= h_g + 1e-8 * h_g.abs() + n_g + n_w + 1e-30);
                inner_trace.extend_from_slice(&[h_u, h_g, h_w]);
                h_prev = h_w;
                noise_prev = n_w;
                if w_change <= opts.inner_tol {
                    break;
                }
            }
            if opts.trace {
                trace.inner_objectives.push(inner_trace);
            }
            let cov_res = BeamformerSet { w_c: w_c.clone(), w_r: w_r.clone(), q: sys.q.clone() }
                .covariance_residual(targets);
            max_residual = max_residual.max(cov_res);

            let new_rates = rates_for(&w_c, &w_r, channels, bandwidth_hz)?;
            let new_objective = ratio_objective(weights_bits, &new_rates);
            trace.mm_objective_s.push(new_objective);
            if !new_objective.is_finite() {
                rates = new_rates;
                feasible = false;
                break;
            }
            debug_assert!(
                new_objective <= objective * (1.0 + 1e-8) + 1e-30,
                "MM objective increased: {objective} -> {new_objective}"
            );
            // Rate-change stop: weight-independent, like the inner loop.
            let rate_change = rates
                .iter()
                .zip(&new_rates)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
                .fold(0.0f64, f64::max);
            rates = new_rates;
            objective = new_objective;
            if rate_change <= opts.outer_tol {
                break;
            }
        }
    }

    let beamformers = BeamformerSet { w_c, w_r, q: sys.q.clone() };
    max_residual = max_residual.max(beamformers.covariance_residual(targets));
    let rates_bps = rates_for(&beamformers.w_c, &beamformers.w_r, channels, bandwidth_hz)?;
    let objective_s = ratio_objective(weights_bits, &rates_bps);
    let feasible = feasible && objective_s.is_finite();
    Ok(SolveOutcome {
        beamformers,
        rates_bps,
        objective_s: if feasible { objective_s } else { f64::INFINITY },
        feasible,
        outer_iterations,
        max_covariance_residual: max_residual,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beampattern::{angle_grid, synth_covariance, SynthOptions};
    use crate::linalg::ZERO_C;
    use crate::radio::{gen_channels, Scenario};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn test_scenario(k: usize, d: usize) -> Scenario {
        let mut s = Scenario::default();
        s.device_count = k;
        s.data_streams = d;
        s.compute.alpha_local = vec![2.0; k];
        s.compute.f_local_max = vec![0.8e9; k];
        s.compute.energy_budget_j = vec![300.0; k];
        s.compute.kappa = vec![1e-28; k];
        s.sensing = vec![s.sensing[0].clone(); k];
        s.placement_half_side_m = None;
        s.device_positions = (0..k)
            .map(|i| [40.0 + 35.0 * i as f64, -30.0 + 20.0 * i as f64])
            .collect();
        s
    }

    fn targets_for(s: &Scenario) -> Vec<CovarianceTarget> {
        let grid = angle_grid(2.0);
        s.sensing
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
            .collect()
    }

    #[test]
    fn mmse_receiver_is_zero_for_zero_precoder() {
        let s = test_scenario(1, 2);
        let ch = gen_channels(&s, 5).unwrap();
        let targets = targets_for(&s);
        let w_c = vec![CMat::zeros(8, 2)];
        let u = mmse_receiver(0, &w_c, &ch, &targets).unwrap();
        assert_eq!(u.nrows(), 2);
        assert_eq!(u.ncols(), 12);
        assert!(u.norm() < 1e-30);
    }

    #[test]
    fn mmse_receiver_minimizes_weighted_mse() {
        let s = test_scenario(2, 2);
        let ch = gen_channels(&s, 6).unwrap();
        let targets = targets_for(&s);
        let sys = SystemMatrices::new(&ch, &targets).unwrap();
        let w_c: Vec<CMat> = (0..2).map(|k| sys.q[k].columns(0, 2).into_owned()).collect();
        let u_star = mmse_receiver(0, &w_c, &ch, &targets).unwrap();
        let e_star = mse_matrix(0, &u_star, &w_c, &ch, &targets).unwrap();
        let g = weight_update(&e_star).unwrap();
        let base: f64 = (&g * &e_star).diagonal().iter().map(|v| v.re).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut u = u_star.clone();
            for v in u.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                // Perturbations scaled to the receiver's own magnitude.
                *v += cx(0.01 * u_star.norm() * re, 0.01 * u_star.norm() * im);
            }
            let e = mse_matrix(0, &u, &w_c, &ch, &targets).unwrap();
            let perturbed: f64 = (&g * &e).diagonal().iter().map(|v| v.re).sum();
            assert!(perturbed >= base - 1e-12, "perturbation decreased Tr(GE)");
        }
    }

    #[test]
    fn mse_matrix_identities() {
        let s = test_scenario(2, 2);
        let ch = gen_channels(&s, 7).unwrap();
        let targets = targets_for(&s);
        let sys = SystemMatrices::new(&ch, &targets).unwrap();
        // Zero precoder: E = I.
        let zero = vec![CMat::zeros(8, 2); 2];
        let e = mse_matrix(0, &CMat::zeros(2, 12), &zero, &ch, &targets).unwrap();
        assert!((e - CMat::identity(2, 2)).norm() < 1e-30);

        // At U*, the general form equals I - Wc^H H^H J^-1 H Wc.
        let w_c: Vec<CMat> = (0..2).map(|k| sys.q[k].columns(0, 2).into_owned()).collect();
        let u_star = mmse_receiver(1, &w_c, &ch, &targets).unwrap();
        let e_general = mse_matrix(1, &u_star, &w_c, &ch, &targets).unwrap();
        let chol = hpd_cholesky(&sys.j).unwrap();
        let hw = &ch.h[1] * &w_c[1];
        let e_closed = CMat::identity(2, 2) - hw.adjoint() * chol.solve(&hw);
        assert!((&e_general - &e_closed).norm() < 1e-10);

        // Eigenvalues of E* lie in (0, 1].
        let (vals, _) = crate::linalg::hermitian_eigen(&e_general);
        for v in vals {
            assert!(v > 0.0 && v <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn mse_rate_identity() {
        // B log2 det(E*^-1) equals the achievable rate of the radio module.
        let s = test_scenario(3, 2);
        let ch = gen_channels(&s, 8).unwrap();
        let targets = targets_for(&s);
        let sys = SystemMatrices::new(&ch, &targets).unwrap();
        let nt = 8;
        let d = 2;
        let w_c: Vec<CMat> = (0..3).map(|k| sys.q[k].columns(0, d).into_owned()).collect();
        let w_r: Vec<CMat> = (0..3).map(|k| sys.q[k].columns(d, nt - d).into_owned()).collect();
        for k in 0..3 {
            let u = mmse_receiver(k, &w_c, &ch, &targets).unwrap();
            let e = mse_matrix(k, &u, &w_c, &ch, &targets).unwrap();
            let from_mse = -s.bandwidth_hz * logdet_hpd(&e).unwrap() / std::f64::consts::LN_2;
            let direct = rate(k, &w_c, &w_r, &ch, s.bandwidth_hz).unwrap();
            assert_relative_eq!(from_mse, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn weight_update_examples() {
        let e = CMat::identity(3, 3) * cx(0.5, 0.0);
        let g = weight_update(&e).unwrap();
        assert!((g - CMat::identity(3, 3) * cx(2.0, 0.0)).norm() < 1e-12);

        let e1 = CMat::from_fn(1, 1, |_, _| cx(0.25, 0.0));
        let g1 = weight_update(&e1).unwrap();
        assert_relative_eq!(g1[(0, 0)].re, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn opp_diagonal_case_picks_identity_columns() {
        // T = diag(2, 1) stacked over a zero row: A = I3, B = I2.
        let mut t = CMat::zeros(3, 2);
        t[(0, 0)] = cx(2.0, 0.0);
        t[(1, 1)] = cx(1.0, 0.0);
        let svd = full_svd(&t).unwrap();
        let w_c_hat = svd.u_full.columns(0, 2) * svd.v.adjoint();
        let w_r_hat = svd.u_full.columns(2, 1);
        assert!((w_c_hat - CMat::identity(3, 2)).norm() < 1e-12);
        let mut e3 = CMat::zeros(3, 1);
        e3[(2, 0)] = cx(1.0, 0.0);
        assert!((w_r_hat.into_owned() - e3).norm() < 1e-12);
    }

    #[test]
    fn opp_output_is_orthonormal_and_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let nt = 6;
        let d = 2;
        for _ in 0..5 {
            let t = CMat::from_fn(nt, d, |_, _| {
                cx(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let svd = full_svd(&t).unwrap();
            let w_c_hat = svd.u_full.columns(0, d) * svd.v.adjoint();
            let w_r_hat = svd.u_full.columns(d, nt - d).into_owned();
            assert!((w_c_hat.adjoint() * &w_c_hat - CMat::identity(d, d)).norm() < 1e-10);
            assert!((w_r_hat.adjoint() * &w_c_hat).norm() < 1e-10);
            let value: f64 = (t.adjoint() * &w_c_hat).diagonal().iter().map(|v| v.re).sum();
            for _ in 0..500 {
                let gauss = CMat::from_fn(nt, d, |_, _| {
                    cx(rng.sample(StandardNormal), rng.sample(StandardNormal))
                });
                let qr = gauss.qr();
                let cand = qr.q();
                let cand_value: f64 =
                    (t.adjoint() * &cand).diagonal().iter().map(|v| v.re).sum();
                assert!(cand_value <= value + 1e-9);
            }
        }
    }

    #[test]
    fn solve_with_zero_weights_returns_feasible_beamformers() {
        let s = test_scenario(2, 2);
        let ch = gen_channels(&s, 10).unwrap();
        let targets = targets_for(&s);
        let out = solve(&[0.0, 0.0], &ch, &targets, 2, s.bandwidth_hz, &SolverOptions::default())
            .unwrap();
        assert!(out.feasible);
        assert_eq!(out.objective_s, 0.0);
        assert!(out.max_covariance_residual < 1e-8);
        for r in &out.rates_bps {
            assert!(*r >= 0.0);
        }
    }

    #[test]
    fn solve_single_user_full_streams_hits_covariance_capacity() {
        // d = Nt: W W^H = R fixes the transmit covariance entirely, so the
        // converged rate equals B log2 det(I + H R H^H / sigma^2).
        let mut s = test_scenario(1, 8);
        s.data_streams = 8;
        let ch = gen_channels(&s, 11).unwrap();
        let targets = targets_for(&s);
        let out =
            solve(&[1e6], &ch, &targets, 8, s.bandwidth_hz, &SolverOptions::default()).unwrap();
        let hrh = &ch.h[0] * &targets[0].r * ch.h[0].adjoint();
        let arg = CMat::identity(12, 12) + hrh * cx(1.0 / ch.noise_var, 0.0);
        let capacity = s.bandwidth_hz * logdet_hpd(&arg).unwrap() / std::f64::consts::LN_2;
        assert_relative_eq!(out.rates_bps[0], capacity, max_relative = 1e-6);
        assert!(out.feasible);
    }

    #[test]
    fn solve_objective_is_monotone_and_rates_match_radio() {
        let s = test_scenario(3, 2);
        let ch = gen_channels(&s, 12).unwrap();
        let targets = targets_for(&s);
        let weights = [2e6, 5e5, 1.3e6];
        let opts = SolverOptions { trace: true, ..Default::default() };
        let out = solve(&weights, &ch, &targets, 2, s.bandwidth_hz, &opts).unwrap();
        assert!(out.feasible);
        for w in out.trace.mm_objective_s.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-8) + 1e-30, "{} -> {}", w[0], w[1]);
        }
        for sweep in &out.trace.inner_objectives {
            for w in sweep.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 * w[0].abs() + 1e-30);
            }
        }
        assert!(out.max_covariance_residual <= 1e-8);
        for k in 0..3 {
            let direct =
                rate(k, &out.beamformers.w_c, &out.beamformers.w_r, &ch, s.bandwidth_hz).unwrap();
            assert_relative_eq!(out.rates_bps[k], direct, max_relative = 1e-9);
        }
        assert_relative_eq!(
            out.objective_s,
            ratio_objective(&weights, &out.rates_bps),
            max_relative = 1e-12
        );
    }

    #[test]
    fn converged_rates_are_invariant_to_weights() {
        let s = test_scenario(3, 2);
        let ch = gen_channels(&s, 13).unwrap();
        let targets = targets_for(&s);
        let opts = SolverOptions::default();
        let a = solve(&[3e6, 1e6, 2e6], &ch, &targets, 2, s.bandwidth_hz, &opts).unwrap();
        let b = solve(&[1.0, 1.0, 1.0], &ch, &targets, 2, s.bandwidth_hz, &opts).unwrap();
        for k in 0..3 {
            assert_relative_eq!(a.rates_bps[k], b.rates_bps[k], max_relative = 1e-6);
        }
    }

    #[test]
    fn infeasible_when_weighted_device_has_zero_channel() {
        let s = test_scenario(2, 2);
        let mut ch = gen_channels(&s, 14).unwrap();
        ch.h[0].fill(ZERO_C);
        let targets = targets_for(&s);
        let out = solve(&[1e6, 1e6], &ch, &targets, 2, s.bandwidth_hz, &SolverOptions::default())
            .unwrap();
        assert!(!out.feasible);
        assert!(out.objective_s.is_infinite());
        // The same dead channel without offload weight stays feasible.
        let out = solve(&[0.0, 1e6], &ch, &targets, 2, s.bandwidth_hz, &SolverOptions::default())
            .unwrap();
        assert!(out.feasible);
    }
}
