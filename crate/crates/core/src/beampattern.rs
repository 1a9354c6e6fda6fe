//! Transmit-covariance synthesis for sensing beampatterns.
//!
//! Given target directions and a mainlobe width, synthesizes the Hermitian
//! PSD covariance matrix with a fixed per-antenna diagonal whose beampattern
//! `a^H(theta) R a(theta)` best matches (in least squares, up to a
//! non-negative scale) the ideal indicator pattern over an angular grid.
//!
//! The constrained least-squares problem is solved by alternating an exact
//! scale update with projected-gradient steps on `R`, projecting onto
//! {PSD} intersect {fixed diagonal} with Dykstra's algorithm. The objective
//! is jointly convex in the scale and `R`, so the iteration converges to the
//! global optimum; step-size backtracking keeps it monotone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, cx, hermitize, psd_project, CMat, CVec};
use crate::radio::steering_vector;

/// Desired per-device transmit covariance (watts), Hermitian PSD with
/// `diag(R) = per_antenna_power` and `trace(R) = P_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTarget {
    pub r: CMat,
    pub per_antenna_power: f64,
}

impl CovarianceTarget {
    /// Checks the type invariants: Hermitian within 1e-12, eigenvalues above
    /// -1e-10 (relative to the per-antenna power scale), exact diagonal, and
    /// trace equal to `Nt * per_antenna_power` within 1e-9 relative.
    pub fn validate(&self) -> Result<()> {
        let n = self.r.nrows();
        let scale = self.per_antenna_power.max(f64::MIN_POSITIVE);
        let herm_err = (&self.r - self.r.adjoint()).norm() / (self.r.norm() + f64::MIN_POSITIVE);
        if herm_err > 1e-12 {
            return Err(Error::Numeric(format!(
                "covariance target not Hermitian: residual {herm_err:.3e}"
            )));
        }
        for i in 0..n {
            if (self.r[(i, i)].re - self.per_antenna_power).abs() > 1e-12 * scale
                || self.r[(i, i)].im.abs() > 1e-12 * scale
            {
                return Err(Error::Numeric(format!(
                    "covariance target diagonal entry {i} differs from per-antenna power"
                )));
            }
        }
        let min_eig = crate::linalg::min_eigenvalue(&self.r);
        if min_eig < -1e-10 * scale * n as f64 {
            return Err(Error::Numeric(format!(
                "covariance target indefinite: min eigenvalue {min_eig:.3e}"
            )));
        }
        let trace: f64 = (0..n).map(|i| self.r[(i, i)].re).sum();
        let p_t = self.per_antenna_power * n as f64;
        if (trace - p_t).abs() > 1e-9 * p_t {
            return Err(Error::Numeric(format!(
                "covariance target trace {trace} differs from total power {p_t}"
            )));
        }
        Ok(())
    }

    /// Cholesky factor with the jitter rule from [`cholesky_with_jitter`].
    pub fn cholesky_factor(&self) -> Result<(CMat, f64)> {
        cholesky_with_jitter(&self.r)
    }

    /// Serializes to a plain JSON document (it/re arrays).
    pub fn to_json(&self) -> String {
        let n = self.r.nrows();
        let re: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| self.r[(i, j)].re).collect()).collect();
        let im: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| self.r[(i, j)].im).collect()).collect();
        serde_json::to_string(&CovarianceDoc { per_antenna_power: self.per_antenna_power, re, im })
            .expect("covariance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CovarianceDoc = serde_json::from_str(text)?;
        let n = doc.re.len();
        if doc.im.len() != n || doc.re.iter().chain(doc.im.iter()).any(|row| row.len() != n) {
            return Err(Error::Numeric("covariance document is not square".into()));
        }
        let r = CMat::from_fn(n, n, |i, j| cx(doc.re[i][j], doc.im[i][j]));
        let target = Self { r, per_antenna_power: doc.per_antenna_power };
        target.validate()?;
        Ok(target)
    }
}

#[derive(Serialize, Deserialize)]
struct CovarianceDoc {
    per_antenna_power: f64,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// One beampattern sample: angle and linear-power gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeampatternSample {
    pub theta_rad: f64,
    pub gain_w: f64,
}

/// Synthesis options; defaults are fine for antenna counts up to a few tens.
#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 2000 }
    }
}

/// Result of a covariance synthesis.
#[derive(Debug, Clone)]
pub struct SynthResult {
    pub target: CovarianceTarget,
    /// Final least-squares objective value.
    pub objective: f64,
    /// Final pattern scale factor (gamma >= 0).
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each iteration; non-increasing.
    pub history: Vec<f64>,
}

/// Uniform angular grid over [-90, 90] degrees, inclusive, in radians.
pub fn angle_grid(step_deg: f64) -> Vec<f64> {
    assert!(step_deg > 0.0);
    let steps = (180.0 / step_deg).round() as usize;
    (0..=steps).map(|i| (-90.0 + i as f64 * step_deg).to_radians()).collect()
}

/// Ideal indicator pattern: 1 where `|theta - theta_j| < width / 2` for some
/// target `j`, else 0.
pub fn desired_pattern(target_angles: &[f64], width: f64, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&theta| {
            let inside = target_angles.iter().any(|&t| (theta - t).abs() < width / 2.0);
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Beampattern of a covariance target over a grid: `a^H(theta) R a(theta)`.
///
/// Gains are real up to rounding; values above `-1e-9 * P_t` are clamped to
/// zero, anything lower indicates a broken target and panics in debug.
pub fn beampattern(target: &CovarianceTarget, grid: &[f64]) -> Vec<BeampatternSample> {
    let nt = target.r.nrows();
    grid.iter()
        .map(|&theta| {
            let a = steering_vector(theta, nt, 0.5);
            let g = quad_form(&target.r, &a);
            debug_assert!(g > -1e-9 * target.per_antenna_power * nt as f64);
            BeampatternSample { theta_rad: theta, gain_w: g.max(0.0) }
        })
        .collect()
}

/// `a^H R a` for Hermitian `R` (real output).
fn quad_form(r: &CMat, a: &CVec) -> f64 {
    (a.adjoint() * r * a)[(0, 0)].re
}

/// Synthesizes the covariance target for the given sensing requirement.
///
/// Minimizes `sum_q |gamma phi(theta_q) - a^H(theta_q) R a(theta_q)|^2` over
/// `gamma >= 0` and Hermitian PSD `R` with `diag(R) = p_t / nt`.
pub fn synth_covariance(
    target_angles: &[f64],
    width: f64,
    p_t: f64,
    nt: usize,
    grid: &[f64],
    opts: SynthOptions,
) -> Result<SynthResult> {
    if grid.is_empty() {
        return Err(Error::Scenario("synthesis grid must be non-empty".into()));
    }
    if !(p_t > 0.0) || nt == 0 {
        return Err(Error::Scenario("synthesis needs p_t > 0 and nt >= 1".into()));
    }
    let per_antenna = p_t / nt as f64;
    let steering: Vec<CVec> = grid.iter().map(|&t| steering_vector(t, nt, 0.5)).collect();
    let phi = desired_pattern(target_angles, width, grid);
    let phi_norm_sq: f64 = phi.iter().map(|p| p * p).sum();

    let gains = |r: &CMat| -> Vec<f64> { steering.iter().map(|a| quad_form(r, a)).collect() };
    let gamma_opt = |p: &[f64]| -> f64 {
        if phi_norm_sq == 0.0 {
            return 0.0;
        }
        let num: f64 = phi.iter().zip(p).map(|(phi_q, p_q)| phi_q * p_q).sum();
        (num / phi_norm_sq).max(0.0)
    };
    let objective = |gamma: f64, p: &[f64]| -> f64 {
        phi.iter().zip(p).map(|(phi_q, p_q)| (gamma * phi_q - p_q).powi(2)).sum()
    };

    // Start from the isotropic point; it already satisfies both constraints.
    let mut r = CMat::identity(nt, nt) * cx(per_antenna, 0.0);
    let mut p = gains(&r);
    let mut gamma = gamma_opt(&p);
    let mut obj = objective(gamma, &p);

    // Gradient Lipschitz bound: 2 sum_q ||a a^H||_F^2 = 2 Q Nt^2. The bound
    // is loose, so the step grows after accepted iterations and backtracks
    // on any objective increase.
    let mut step = 1.0 / (2.0 * grid.len() as f64 * (nt * nt) as f64);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        gamma = gamma_opt(&p);
        let obj_gamma = objective(gamma, &p);
        debug_assert!(obj_gamma <= obj * (1.0 + 1e-12) + 1e-30);

        // Gradient of the objective in R: 2 sum_q (p_q - gamma phi_q) a_q a_q^H.
        let mut grad = CMat::zeros(nt, nt);
        for (q, a) in steering.iter().enumerate() {
            let coef = 2.0 * (p[q] - gamma * phi[q]);
            if coef != 0.0 {
                grad += (a * a.adjoint()) * cx(coef, 0.0);
            }
        }

        // Backtracking projected-gradient step; reject on objective increase.
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = project_psd_fixed_diag(&(&r - &grad * cx(step, 0.0)), per_antenna);
            let cand_gains = gains(&candidate);
            let cand_obj = objective(gamma, &cand_gains);
            if cand_obj <= obj_gamma * (1.0 + 1e-12) + 1e-30 {
                r = candidate;
                p = cand_gains;
                obj = cand_obj;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            obj = obj_gamma;
        }
        history.push(obj);

        let prev = if it == 0 { f64::INFINITY } else { history[it - 1] };
        if prev.is_finite() && (prev - obj) < opts.tol * prev.abs().max(1e-30) {
            converged = true;
            break;
        }
        if !accepted {
            // Step size collapsed: no further progress is possible.
            converged = true;
            break;
        }
    }

    // Final cleanup pass so the diagonal is exact and PSD holds numerically.
    let r = project_psd_fixed_diag(&r, per_antenna);
    let target = CovarianceTarget { r, per_antenna_power: per_antenna };
    target.validate()?;
    let final_gains = gains(&target.r);
    let gamma = gamma_opt(&final_gains);
    let objective = objective(gamma, &final_gains);
    Ok(SynthResult { target, objective, scale: gamma, converged, iterations, history })
}

/// Dykstra's alternating projection onto {PSD} intersect {diag = c}, ending
/// with the diagonal projection so the diagonal is exact.
fn project_psd_fixed_diag(x0: &CMat, diag: f64) -> CMat {
    let n = x0.nrows();
    let mut x = hermitize(x0);
    let mut p = CMat::zeros(n, n);
    let mut q = CMat::zeros(n, n);
    let scale = diag * n as f64;
    for _ in 0..200 {
        let y = psd_project(&(&x + &p));
        p = &x + &p - &y;
        let mut z = &y + &q;
        for i in 0..n {
            z[(i, i)] = cx(diag, 0.0);
        }
        q = &y + &q - &z;
        let delta = (&z - &x).norm();
        x = z;
        if delta < 1e-13 * scale.max(1e-30) {
            break;
        }
    }
    x
}

/// Stable cache key for a synthesized covariance, built from the exact bit
/// patterns of the inputs (FNV-1a, no hasher randomness).
pub fn cache_key(target_angles: &[f64], width: f64, p_t: f64, nt: usize, grid: &[f64]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bits: u64| {
        for byte in bits.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    };
    for &a in target_angles {
        eat(a.to_bits());
    }
    eat(width.to_bits());
    eat(p_t.to_bits());
    eat(nt as u64);
    for &g in grid {
        eat(g.to_bits());
    }
    format!("cov_{h:016x}")
}
