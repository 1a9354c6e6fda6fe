//! MIMO uplink model: scenario parameters, block-fading channel generation,
//! steering vectors, and per-device achievable offloading rates.
//!
//! Scenario configuration round-trips through JSON (angles in degrees in the
//! file, radians internally). Channels are log-distance path loss times
//! i.i.d. Rayleigh small-scale fading, reproducible from a seed.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dnn_profile::{DnnProfile, ProfileDoc};
use crate::error::{Error, Result};
use crate::linalg::{cx, CMat, CVec};

/// Log-distance path loss: `PL(dist) dB = reference_db + 10 * exponent *
/// log10(dist / reference_m)`, clamped at `reference_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub exponent: f64,
    pub reference_db: f64,
    pub reference_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { exponent: 2.7, reference_db: 30.0, reference_m: 1.0 }
    }
}

impl PathLossModel {
    /// Linear power gain at `dist` meters (<= 1 for dist >= reference).
    pub fn gain_linear(&self, dist_m: f64) -> f64 {
        let d = dist_m.max(self.reference_m);
        let pl_db = self.reference_db + 10.0 * self.exponent * (d / self.reference_m).log10();
        10f64.powf(-pl_db / 10.0)
    }
}

/// Per-device sensing requirement (radians internally).
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSpec {
    pub target_angles_rad: Vec<f64>,
    pub mainlobe_width_rad: f64,
}

/// Compute-side parameters: per-device device figures plus shared MEC,
/// cloud, and backhaul figures.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeParams {
    /// FLOPs per CPU cycle at each device.
    pub alpha_local: Vec<f64>,
    /// Device CPU frequency caps, cycles/s.
    pub f_local_max: Vec<f64>,
    /// Per-device computational energy budgets, joules.
    pub energy_budget_j: Vec<f64>,
    /// Hardware power coefficients (power = kappa * f^3).
    pub kappa: Vec<f64>,
    /// FLOPs per CPU cycle at the MEC server.
    pub alpha_mec: f64,
    /// Total MEC computation capacity, cycles/s.
    pub f_mec_total: f64,
    /// FLOPs per CPU cycle at the cloud server.
    pub alpha_cloud: f64,
    /// Fixed cloud CPU frequency allocated to each device, cycles/s.
    pub f_cloud: f64,
    /// MEC-to-cloud backhaul rate, bits/s.
    pub backhaul_bps: f64,
}

/// Full simulation scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub device_count: usize,
    pub bs_antennas: usize,
    pub device_antennas: usize,
    pub data_streams: usize,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub tx_power_dbm: f64,
    pub bs_position: [f64; 2],
    /// Concrete device positions; refreshed per trial when
    /// `placement_half_side_m` is set.
    pub device_positions: Vec<[f64; 2]>,
    /// When set, devices are placed uniformly in the square
    /// `[-h, h] x [-h, h]` around the origin at the start of each trial.
    pub placement_half_side_m: Option<f64>,
    pub pathloss: PathLossModel,
    pub compute: ComputeParams,
    pub sensing: Vec<SensingSpec>,
    pub profile: DnnProfile,
}

impl Default for Scenario {
    /// Default parameter set: 5 devices in a 400 m square, 12 BS antennas,
    /// 8 device antennas, 3 streams, 5 MHz, 30 dBm, -174 dBm/Hz noise,
    /// alpha 2/4/8 FLOPs per cycle, 0.8/12/20 Gcycles/s, 2 Mbit/s backhaul,
    /// kappa 1e-28, 300 J budget, AlexNet profile, and sensing targets at
    /// 0 and 40 degrees with a 10 degree mainlobe.
    fn default() -> Self {
        let k = 5;
        Self {
            device_count: k,
            bs_antennas: 12,
            device_antennas: 8,
            data_streams: 3,
            bandwidth_hz: 5e6,
            noise_psd_dbm_hz: -174.0,
            tx_power_dbm: 30.0,
            bs_position: [0.0, 0.0],
            device_positions: Vec::new(),
            placement_half_side_m: Some(200.0),
            pathloss: PathLossModel::default(),
            compute: ComputeParams {
                alpha_local: vec![2.0; k],
                f_local_max: vec![0.8e9; k],
                energy_budget_j: vec![300.0; k],
                kappa: vec![1e-28; k],
                alpha_mec: 4.0,
                f_mec_total: 12e9,
                alpha_cloud: 8.0,
                f_cloud: 20e9,
                backhaul_bps: 2e6,
            },
            sensing: vec![
                SensingSpec {
                    target_angles_rad: vec![0.0, 40f64.to_radians()],
                    mainlobe_width_rad: 10f64.to_radians(),
                };
                k
            ],
            profile: DnnProfile::alexnet(),
        }
    }
}

impl Scenario {
    pub fn tx_power_w(&self) -> f64 {
        10f64.powf((self.tx_power_dbm - 30.0) / 10.0)
    }

    /// Receiver noise power in watts: `10^((psd_dbm - 30)/10) * B`.
    pub fn noise_variance_w(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.device_count;
        let fail = |msg: String| Err(Error::Scenario(msg));
        if k == 0 {
            return fail("device_count must be >= 1".into());
        }
        if self.bs_antennas == 0 {
            return fail("bs_antennas must be >= 1".into());
        }
        if self.data_streams == 0 || self.data_streams > self.device_antennas {
            return fail(format!(
                "data_streams must satisfy 1 <= d <= device_antennas ({})",
                self.device_antennas
            ));
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("f_mec_total", self.compute.f_mec_total),
            ("f_cloud", self.compute.f_cloud),
            ("backhaul_bps", self.compute.backhaul_bps),
            ("alpha_mec", self.compute.alpha_mec),
            ("alpha_cloud", self.compute.alpha_cloud),
            ("tx_power_w", self.tx_power_w()),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be strictly positive"));
            }
        }
        for (name, vs) in [
            ("alpha_local", &self.compute.alpha_local),
            ("f_local_max", &self.compute.f_local_max),
            ("energy_budget_j", &self.compute.energy_budget_j),
            ("kappa", &self.compute.kappa),
        ] {
            if vs.len() != k {
                return fail(format!("{name} must have one entry per device ({k})"));
            }
            if vs.iter().any(|v| !(*v > 0.0)) {
                return fail(format!("{name} entries must be strictly positive"));
            }
        }
        if self.sensing.len() != k {
            return fail(format!("sensing must have one entry per device ({k})"));
        }
        for (i, s) in self.sensing.iter().enumerate() {
            if !(s.mainlobe_width_rad > 0.0) {
                return fail(format!("sensing[{i}]: mainlobe width must be positive"));
            }
            let quarter = std::f64::consts::FRAC_PI_2 + 1e-12;
            if s.target_angles_rad.iter().any(|a| a.abs() > quarter) {
                return fail(format!(
                    "sensing[{i}]: target angles must lie in [-90, 90] degrees"
                ));
            }
        }
        if self.placement_half_side_m.is_none() && self.device_positions.len() != k {
            return fail(format!(
                "fixed placement requires {k} device positions, got {}",
                self.device_positions.len()
            ));
        }
        Ok(())
    }

    /// Loads a scenario from a JSON config file.
    pub fn from_config_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let file: ScenarioFile = serde_json::from_str(&text)?;
        file.resolve()
    }

    pub fn from_config_json(json: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(json)?;
        file.resolve()
    }
}

/// A set of block-fading uplink channels (one `M x Nt` matrix per device)
/// plus the receiver noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMat>,
    pub noise_var: f64,
}

/// Uniform-linear-array steering vector: element `i` is
/// `exp(j 2 pi i delta sin(theta))`.
pub fn steering_vector(theta: f64, n: usize, delta: f64) -> CVec {
    let s = theta.sin();
    CVec::from_fn(n, |i, _| {
        let phase = 2.0 * std::f64::consts::PI * i as f64 * delta * s;
        cx(phase.cos(), phase.sin())
    })
}

/// Draws the channel set for `scenario` from `seed`.
///
/// `H_k = sqrt(gain(dist_k)) * G_k` with i.i.d. unit-variance circularly
/// symmetric complex Gaussian `G_k`. Deterministic for a fixed seed.
/// Devices closer than the path-loss reference distance are clamped to it
/// with a warning.
pub fn gen_channels(scenario: &Scenario, seed: u64) -> Result<ChannelSet> {
    scenario.validate()?;
    if scenario.device_positions.len() != scenario.device_count {
        return Err(Error::Scenario(format!(
            "gen_channels requires {} concrete device positions, got {}",
            scenario.device_count,
            scenario.device_positions.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = scenario.bs_antennas;
    let nt = scenario.device_antennas;
    let scale = std::f64::consts::FRAC_1_SQRT_2; // per-component std for unit variance
    let mut h = Vec::with_capacity(scenario.device_count);
    for (k, pos) in scenario.device_positions.iter().enumerate() {
        let dx = pos[0] - scenario.bs_position[0];
        let dy = pos[1] - scenario.bs_position[1];
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < scenario.pathloss.reference_m {
            log::warn!(
                "device {k} is {dist:.3} m from the BS, inside the path-loss reference \
                 distance {}; clamping",
                scenario.pathloss.reference_m
            );
        }
        let amp = scenario.pathloss.gain_linear(dist).sqrt();
        let mut hk = CMat::zeros(m, nt);
        for j in 0..nt {
            for i in 0..m {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                hk[(i, j)] = cx(amp * scale * re, amp * scale * im);
            }
        }
        h.push(hk);
    }
    Ok(ChannelSet { h, noise_var: scenario.noise_variance_w() })
}

fn logdet_hpd_cholesky(a: CMat) -> Result<f64> {
    let n = a.nrows();
    let chol = Cholesky::new(a)
        .ok_or_else(|| Error::Numeric("interference covariance not positive definite".into()))?;
    let l = chol.l();
    Ok(2.0 * (0..n).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Achievable uplink rate of device `k` in bits/s:
/// `B log2 det(I + H_k Wc_k Wc_k^H H_k^H D_k^{-1})`, where `D_k` collects
/// interference from every other device's communication precoder, all radar
/// precoders (including device `k`'s own), and noise.
pub fn rate(
    k: usize,
    w_c: &[CMat],
    w_r: &[CMat],
    channels: &ChannelSet,
    bandwidth_hz: f64,
) -> Result<f64> {
    let m = channels.h[k].nrows();
    let mut d_mat = CMat::identity(m, m) * cx(channels.noise_var, 0.0);
    for i in 0..channels.h.len() {
        if i != k {
            let g = &channels.h[i] * &w_c[i];
            d_mat += &g * g.adjoint();
        }
        if w_r[i].ncols() > 0 {
            let g = &channels.h[i] * &w_r[i];
            d_mat += &g * g.adjoint();
        }
    }
    if d_mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("non-finite interference covariance".into()));
    }
    let s = &channels.h[k] * &w_c[k];
    let signal = &s * s.adjoint();
    // log det(I + S D^-1) = log det(D + S) - log det(D); both HPD.
    let ld_d = logdet_hpd_cholesky(d_mat.clone())?;
    let ld_ds = logdet_hpd_cholesky(d_mat + signal)?;
    Ok(bandwidth_hz * (ld_ds - ld_d) / std::f64::consts::LN_2)
}

// ---------------------------------------------------------------------------
// JSON configuration layer
// ---------------------------------------------------------------------------

/// A numeric field that may be a scalar (broadcast to all devices) or a
/// per-device list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDevice {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerDevice {
    fn resolve(&self, k: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            PerDevice::Scalar(v) => Ok(vec![*v; k]),
            PerDevice::List(vs) if vs.len() == k => Ok(vs.clone()),
            PerDevice::List(vs) => Err(Error::Scenario(format!(
                "{field}: expected {k} entries, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensingDoc {
    pub target_angles_deg: Vec<f64>,
    pub mainlobe_width_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SensingField {
    Shared(SensingDoc),
    PerDevice(Vec<SensingDoc>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlacementDoc {
    Square { square_half_side_m: f64 },
    Fixed { fixed: Vec<[f64; 2]> },
}

/// Where the DNN profile comes from: the embedded default (optionally
/// truncated), a separate profile file, or an inline document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSource {
    Builtin {
        builtin: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncate: Option<usize>,
    },
    File { file: String },
    Inline { inline: ProfileDoc },
}

impl ProfileSource {
    pub fn resolve(&self) -> Result<DnnProfile> {
        match self {
            ProfileSource::Builtin { builtin, truncate } => {
                if builtin != "alexnet" {
                    return Err(Error::Scenario(format!("unknown builtin profile '{builtin}'")));
                }
                let p = DnnProfile::alexnet();
                match truncate {
                    Some(n) => p.truncated(*n),
                    None => Ok(p),
                }
            }
            ProfileSource::File { file } => DnnProfile::from_file(file),
            ProfileSource::Inline { inline } => DnnProfile::from_doc(inline),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeDoc {
    pub alpha_local: PerDevice,
    pub f_local_max: PerDevice,
    pub energy_budget_j: PerDevice,
    pub kappa: PerDevice,
    pub alpha_mec: f64,
    pub f_mec_total: f64,
    pub alpha_cloud: f64,
    pub f_cloud: f64,
    pub backhaul_bps: f64,
}

/// On-disk scenario schema. All fields optional except where noted; missing
/// fields take the defaults documented on [`Scenario::default`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default = "default_k")]
    pub device_count: usize,
    #[serde(default = "default_m")]
    pub bs_antennas: usize,
    #[serde(default = "default_nt")]
    pub device_antennas: usize,
    #[serde(default = "default_d")]
    pub data_streams: usize,
    #[serde(default = "default_bw")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_noise")]
    pub noise_psd_dbm_hz: f64,
    #[serde(default = "default_ptx")]
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub bs_position: [f64; 2],
    #[serde(default = "default_placement")]
    pub device_placement: PlacementDoc,
    #[serde(default)]
    pub pathloss: PathLossModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute: Option<ComputeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSource>,
}

fn default_k() -> usize {
    5
}
fn default_m() -> usize {
    12
}
fn default_nt() -> usize {
    8
}
fn default_d() -> usize {
    3
}
fn default_bw() -> f64 {
    5e6
}
fn default_noise() -> f64 {
    -174.0
}
fn default_ptx() -> f64 {
    30.0
}
fn default_placement() -> PlacementDoc {
    PlacementDoc::Square { square_half_side_m: 200.0 }
}

impl Default for ScenarioFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty scenario file is valid")
    }
}

impl ScenarioFile {
    /// Resolves the file form into a validated [`Scenario`].
    pub fn resolve(&self) -> Result<Scenario> {
        let k = self.device_count;
        let defaults = ComputeDoc {
            alpha_local: PerDevice::Scalar(2.0),
            f_local_max: PerDevice::Scalar(0.8e9),
            energy_budget_j: PerDevice::Scalar(300.0),
            kappa: PerDevice::Scalar(1e-28),
            alpha_mec: 4.0,
            f_mec_total: 12e9,
            alpha_cloud: 8.0,
            f_cloud: 20e9,
            backhaul_bps: 2e6,
        };
        let c = self.compute.as_ref().unwrap_or(&defaults);
        let compute = ComputeParams {
            alpha_local: c.alpha_local.resolve(k, "alpha_local")?,
            f_local_max: c.f_local_max.resolve(k, "f_local_max")?,
            energy_budget_j: c.energy_budget_j.resolve(k, "energy_budget_j")?,
            kappa: c.kappa.resolve(k, "kappa")?,
            alpha_mec: c.alpha_mec,
            f_mec_total: c.f_mec_total,
            alpha_cloud: c.alpha_cloud,
            f_cloud: c.f_cloud,
            backhaul_bps: c.backhaul_bps,
        };
        let default_sensing = SensingField::Shared(SensingDoc {
            target_angles_deg: vec![0.0, 40.0],
            mainlobe_width_deg: 10.0,
        });
        let sensing_docs: Vec<SensingDoc> = match self.sensing.as_ref().unwrap_or(&default_sensing)
        {
            SensingField::Shared(doc) => vec![doc.clone(); k],
            SensingField::PerDevice(docs) => {
                if docs.len() == 1 {
                    vec![docs[0].clone(); k]
                } else if docs.len() == k {
                    docs.clone()
                } else {
                    return Err(Error::Scenario(format!(
                        "sensing: expected 1 or {k} entries, got {}",
                        docs.len()
                    )));
                }
            }
        };
        let sensing = sensing_docs
            .into_iter()
            .map(|doc| SensingSpec {
                target_angles_rad: doc.target_angles_deg.iter().map(|a| a.to_radians()).collect(),
                mainlobe_width_rad: doc.mainlobe_width_deg.to_radians(),
            })
            .collect();
        let (device_positions, placement_half_side_m) = match &self.device_placement {
            PlacementDoc::Square { square_half_side_m } => (Vec::new(), Some(*square_half_side_m)),
            PlacementDoc::Fixed { fixed } => (fixed.clone(), None),
        };
        let profile = match &self.profile {
            Some(src) => src.resolve()?,
            None => DnnProfile::alexnet(),
        };
        let scenario = Scenario {
            device_count: k,
            bs_antennas: self.bs_antennas,
            device_antennas: self.device_antennas,
            data_streams: self.data_streams,
            bandwidth_hz: self.bandwidth_hz,
            noise_psd_dbm_hz: self.noise_psd_dbm_hz,
            tx_power_dbm: self.tx_power_dbm,
            bs_position: self.bs_position,
            device_positions,
            placement_half_side_m,
            pathloss: self.pathloss,
            compute,
            sensing,
            profile,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
