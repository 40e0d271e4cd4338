//! System parameters, deployment geometry and the RIS steering vector.
//!
//! Coordinates are expressed in the RIS local frame: the panel sits at
//! `ris_pos`, its broadside points along +X, element rows run along Z and
//! element columns along Y. The train runs parallel to the Y axis.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kron_vec, CVector};

pub type Position = [f64; 3];

/// Total train length along Y (m) used to space the MRs.
pub const TRAIN_LENGTH_M: f64 = 200.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0 - 3.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// All physical and algorithmic parameters of one scenario, in linear SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub antennas: usize,
    pub mrs: usize,
    /// RIS rows (along Z).
    pub ris_rows: usize,
    /// RIS columns (along Y).
    pub ris_cols: usize,
    pub phase_bits: u32,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Transmit power budget (W).
    pub p_max: f64,
    /// Sensing beampattern-gain threshold, in units of `sensing_reference`.
    pub gamma_th: f64,
    /// Noise power over the full bandwidth (W).
    pub sigma2: f64,
    pub rician_factor: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Path loss at 1 m (linear).
    pub beta0: f64,
    /// Element spacing as a fraction of the wavelength.
    pub antenna_spacing: f64,
    pub bs_pos: Position,
    pub ris_pos: Position,
    pub mr_positions: Vec<Position>,
    pub target_pos: Position,
    pub delta_sca: f64,
    pub vartheta_phase: f64,
    pub theta_outer: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub mc_drops: usize,
    /// Reference level sensing gains are quoted against (linear).
    pub sensing_reference: f64,
    /// Extra power attenuation on the blocked direct BS-MR link (linear).
    pub direct_blockage: f64,
}

impl ScenarioConfig {
    pub fn ris_elements(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn phase_levels(&self) -> usize {
        1usize << self.phase_bits
    }

    /// Sensing threshold in absolute power units.
    pub fn gain_threshold(&self) -> f64 {
        self.gamma_th * self.sensing_reference
    }

    /// Converts an absolute beampattern gain into threshold units.
    pub fn normalized_gain(&self, gain: f64) -> f64 {
        gain / self.sensing_reference
    }

    pub fn wavelength(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }

    pub fn bs_ris_distance(&self) -> f64 {
        distance(&self.bs_pos, &self.ris_pos)
    }

    pub fn ris_mr_distance(&self, k: usize) -> f64 {
        distance(&self.ris_pos, &self.mr_positions[k])
    }

    pub fn ris_target_distance(&self) -> f64 {
        distance(&self.ris_pos, &self.target_pos)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.antennas == 0 {
            return bad("N must be at least 1");
        }
        if self.mrs == 0 || self.mr_positions.len() != self.mrs {
            return bad("K must be at least 1 and match mr_positions");
        }
        if self.ris_rows == 0 || self.ris_cols == 0 {
            return bad("RIS grid dimensions must be at least 1");
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return bad("e must be in 1..=16");
        }
        if !(self.p_max > 0.0) {
            return bad("P_max must be positive");
        }
        if !(self.gamma_th >= 0.0) {
            return bad("gamma_th must be nonnegative");
        }
        if !(self.sigma2 > 0.0) {
            return bad("sigma2 must be positive");
        }
        if !(self.rician_factor >= 0.0) {
            return bad("K_R must be nonnegative");
        }
        if !(self.beta0 > 0.0 && self.sensing_reference > 0.0 && self.direct_blockage >= 0.0) {
            return bad("beta0, sensing_reference must be positive");
        }
        if !(self.delta_sca > 0.0 && self.vartheta_phase > 0.0 && self.theta_outer > 0.0) {
            return bad("convergence thresholds must be positive");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be at least 1");
        }
        let finite = |p: &Position| p.iter().all(|x| x.is_finite());
        if !finite(&self.bs_pos)
            || !finite(&self.ris_pos)
            || !finite(&self.target_pos)
            || !self.mr_positions.iter().all(finite)
        {
            return bad("positions must be finite");
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(s)?;
        file.into_config()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from_config(self))?)
    }
}

/// MRs evenly spaced along the train, which runs parallel to Y at
/// `x = track_offset`, starting abreast of the RIS.
pub fn train_positions(count: usize, track_offset: f64, height: f64) -> Vec<Position> {
    let step = if count > 1 {
        TRAIN_LENGTH_M / (count - 1) as f64
    } else {
        0.0
    };
    (0..count)
        .map(|k| [track_offset, k as f64 * step, height])
        .collect()
}

const H_BS: f64 = 10.0;
const H_MR: f64 = 2.5;
const H_RIS: f64 = 2.5;
const TRACK_OFFSET: f64 = 3.0;

/// Default simulation parameters and geometry.
pub fn default_scenario() -> ScenarioConfig {
    let bandwidth_hz = 100e6;
    let beta0 = db_to_linear(-61.3849);
    ScenarioConfig {
        antennas: 8,
        mrs: 11,
        ris_rows: 8,
        ris_cols: 8,
        phase_bits: 3,
        carrier_hz: 30e9,
        bandwidth_hz,
        p_max: dbm_to_watts(23.0),
        gamma_th: 0.5e-4,
        sigma2: noise_power(-134.0, bandwidth_hz),
        rician_factor: 4.0,
        alpha_los: 2.5,
        alpha_nlos: 3.6,
        beta0,
        antenna_spacing: 0.5,
        bs_pos: [40.0, -30.0, H_BS],
        ris_pos: [0.0, 0.0, H_RIS],
        mr_positions: train_positions(11, TRACK_OFFSET, H_MR),
        target_pos: [6.0, 100.0, 1.0],
        delta_sca: 1e-4,
        vartheta_phase: 1e-3,
        theta_outer: 1e-3,
        max_outer: 20,
        max_inner: 100,
        mc_drops: 50,
        sensing_reference: beta0,
        direct_blockage: db_to_linear(-40.0),
    }
}

/// Noise power (W) from a PSD in dBm/MHz over `bandwidth_hz`.
pub fn noise_power(psd_dbm_per_mhz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_per_mhz + linear_to_db(bandwidth_hz / 1e6))
}

/// Direction of a point as seen from the RIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetDirection {
    /// Azimuth in [-π, π), measured from +X towards +Y.
    pub azimuth: f64,
    /// Elevation in [0, π], measured from +Z.
    pub elevation: f64,
}

/// RIS array response `a_y(θa, θe) ⊗ a_z(θe)`, unit norm.
pub fn steering_vector(dir: TargetDirection, rows: usize, cols: usize) -> CVector {
    let y_phase = PI * dir.azimuth.sin() * dir.elevation.cos();
    let z_phase = PI * dir.elevation.cos();
    let a_y = CVector::from_fn(cols, |m, _| {
        Complex64::from_polar(1.0 / (cols as f64).sqrt(), y_phase * m as f64)
    });
    let a_z = CVector::from_fn(rows, |n, _| {
        Complex64::from_polar(1.0 / (rows as f64).sqrt(), z_phase * n as f64)
    });
    kron_vec(&a_y, &a_z)
}

/// Direction from the RIS to `point`.
pub fn direction_to(ris_pos: &Position, point: &Position) -> Result<TargetDirection> {
    let dx = point[0] - ris_pos[0];
    let dy = point[1] - ris_pos[1];
    let dz = point[2] - ris_pos[2];
    let r = (dx * dx + dy * dy + dz * dz).sqrt();
    if r < 1e-9 {
        return Err(Error::DegenerateGeometry);
    }
    let elevation = (dz / r).clamp(-1.0, 1.0).acos();
    let mut azimuth = dy.atan2(dx);
    if azimuth >= PI {
        azimuth -= 2.0 * PI;
    }
    Ok(TargetDirection { azimuth, elevation })
}

pub fn target_direction_from_geometry(cfg: &ScenarioConfig) -> Result<TargetDirection> {
    direction_to(&cfg.ris_pos, &cfg.target_pos)
}

/// Steering vector towards the configured target.
pub fn target_steering(cfg: &ScenarioConfig) -> Result<CVector> {
    let dir = target_direction_from_geometry(cfg)?;
    Ok(steering_vector(dir, cfg.ris_rows, cfg.ris_cols))
}

/// On-disk scenario document. Every key is optional and overrides the
/// default scenario. Powers use dBm, path-loss levels use dB.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub mrs: Option<usize>,
    #[serde(rename = "L_x", skip_serializing_if = "Option::is_none")]
    pub ris_rows: Option<usize>,
    #[serde(rename = "L_y", skip_serializing_if = "Option::is_none")]
    pub ris_cols: Option<usize>,
    #[serde(rename = "e", skip_serializing_if = "Option::is_none")]
    pub phase_bits: Option<u32>,
    /// Hz.
    #[serde(rename = "f", skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
    /// Hz.
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub bandwidth_hz: Option<f64>,
    /// dBm.
    #[serde(rename = "P_max", skip_serializing_if = "Option::is_none")]
    pub p_max_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_th: Option<f64>,
    /// Noise PSD in dBm/MHz.
    #[serde(rename = "sigma2", skip_serializing_if = "Option::is_none")]
    pub noise_psd_dbm_per_mhz: Option<f64>,
    #[serde(rename = "K_R", skip_serializing_if = "Option::is_none")]
    pub rician_factor: Option<f64>,
    #[serde(rename = "alpha1", skip_serializing_if = "Option::is_none")]
    pub alpha_los: Option<f64>,
    #[serde(rename = "alpha2", skip_serializing_if = "Option::is_none")]
    pub alpha_nlos: Option<f64>,
    /// dB.
    #[serde(rename = "beta0", skip_serializing_if = "Option::is_none")]
    pub beta0_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antenna_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_pos: Option<Position>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ris_pos: Option<Position>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mr_positions: Option<Vec<Position>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_pos: Option<Position>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_sca: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vartheta_phase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_outer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_inner: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_drops: Option<usize>,
    /// dB.
    #[serde(rename = "sensing_reference", skip_serializing_if = "Option::is_none")]
    pub sensing_reference_db: Option<f64>,
    /// dB of attenuation applied on top of the direct-link path loss.
    #[serde(rename = "direct_blockage", skip_serializing_if = "Option::is_none")]
    pub direct_blockage_db: Option<f64>,
}

impl ScenarioFile {
    pub fn into_config(self) -> Result<ScenarioConfig> {
        let mut cfg = default_scenario();
        let default_psd = -134.0;
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(antennas);
        set!(ris_rows);
        set!(ris_cols);
        set!(phase_bits);
        set!(carrier_hz);
        set!(bandwidth_hz);
        set!(gamma_th);
        set!(rician_factor);
        set!(alpha_los);
        set!(alpha_nlos);
        set!(antenna_spacing);
        set!(bs_pos);
        set!(ris_pos);
        set!(target_pos);
        set!(delta_sca);
        set!(vartheta_phase);
        set!(theta_outer);
        set!(max_outer);
        set!(max_inner);
        set!(mc_drops);
        if let Some(dbm) = self.p_max_dbm {
            cfg.p_max = dbm_to_watts(dbm);
        }
        cfg.sigma2 = noise_power(
            self.noise_psd_dbm_per_mhz.unwrap_or(default_psd),
            cfg.bandwidth_hz,
        );
        if let Some(db) = self.beta0_db {
            cfg.beta0 = db_to_linear(db);
        }
        if let Some(db) = self.sensing_reference_db {
            cfg.sensing_reference = db_to_linear(db);
        }
        if let Some(db) = self.direct_blockage_db {
            cfg.direct_blockage = db_to_linear(-db);
        }
        match (self.mrs, self.mr_positions) {
            (_, Some(positions)) => {
                if let Some(k) = self.mrs {
                    if k != positions.len() {
                        return Err(Error::InvalidConfig(format!(
                            "K = {k} but {} MR positions given",
                            positions.len()
                        )));
                    }
                }
                cfg.mrs = positions.len();
                cfg.mr_positions = positions;
            }
            (Some(k), None) => {
                cfg.mrs = k;
                cfg.mr_positions = train_positions(k, TRACK_OFFSET, H_MR);
            }
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ScenarioFile {
            antennas: Some(cfg.antennas),
            mrs: Some(cfg.mrs),
            ris_rows: Some(cfg.ris_rows),
            ris_cols: Some(cfg.ris_cols),
            phase_bits: Some(cfg.phase_bits),
            carrier_hz: Some(cfg.carrier_hz),
            bandwidth_hz: Some(cfg.bandwidth_hz),
            p_max_dbm: Some(watts_to_dbm(cfg.p_max)),
            gamma_th: Some(cfg.gamma_th),
            noise_psd_dbm_per_mhz: Some(
                watts_to_dbm(cfg.sigma2) - linear_to_db(cfg.bandwidth_hz / 1e6),
            ),
            rician_factor: Some(cfg.rician_factor),
            alpha_los: Some(cfg.alpha_los),
            alpha_nlos: Some(cfg.alpha_nlos),
            beta0_db: Some(linear_to_db(cfg.beta0)),
            antenna_spacing: Some(cfg.antenna_spacing),
            bs_pos: Some(cfg.bs_pos),
            ris_pos: Some(cfg.ris_pos),
            mr_positions: Some(cfg.mr_positions.clone()),
            target_pos: Some(cfg.target_pos),
            delta_sca: Some(cfg.delta_sca),
            vartheta_phase: Some(cfg.vartheta_phase),
            theta_outer: Some(cfg.theta_outer),
            max_outer: Some(cfg.max_outer),
            max_inner: Some(cfg.max_inner),
            mc_drops: Some(cfg.mc_drops),
            sensing_reference_db: Some(linear_to_db(cfg.sensing_reference)),
            direct_blockage_db: Some(-linear_to_db(cfg.direct_blockage)),
        }
    }
}
