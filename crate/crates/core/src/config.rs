//! Run configuration: JSON in, validated device model out.
//!
//! All frequencies and rates in config files are plain Hz (cycles per
//! second); they are converted to angular units internally. Unknown keys
//! are rejected so typos fail loudly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    CavityId, CavityParams, DeviceModel, G0Ratios, MechId, MechParams, ModelError, PumpDrive,
    Sideband,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceSection,
    pub drives: Vec<DriveSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub cavity1: CavitySection,
    pub cavity2: CavitySection,
    pub mech1: MechSection,
    pub mech2: MechSection,
    /// g0_11 / g0_12; only the sideband-leakage model reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_ratio_cavity1: Option<f64>,
    /// g0_21 / g0_22.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_ratio_cavity2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub omega_hz: f64,
    pub kappa_ext_hz: f64,
    pub kappa_int_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechSection {
    pub omega_hz: f64,
    pub gamma_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    /// 1 or 2.
    pub cavity: u8,
    /// 1 or 2.
    pub mech: u8,
    pub sideband: SidebandName,
    pub cooperativity: f64,
    #[serde(default)]
    pub phase_rad: f64,
    pub detuning_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SidebandName {
    Red,
    Blue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
    #[serde(default)]
    pub frame: Frame,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            start_hz: -2000.0,
            stop_hz: 2000.0,
            points: 401,
            frame: Frame::Rotating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Rotating,
    Lab,
}

/// Inputs of the calibration pipeline: the two reflection gains plus
/// either a directly supplied imbalance or single-oscillator sweep files
/// to estimate it from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub g11_db: f64,
    #[serde(default)]
    pub g11_uncertainty_db: f64,
    pub g22_db: f64,
    #[serde(default)]
    pub g22_uncertainty_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance_uncertainty_db: Option<f64>,
    /// Analyzer bandwidth for noise subtraction (Hz).
    #[serde(default = "default_bw")]
    pub bw_hz: f64,
    /// Spectrum-analyzer resolution bandwidth (Hz).
    #[serde(default = "default_rbw")]
    pub rbw_hz: f64,
}

fn default_bw() -> f64 {
    20.0
}

fn default_rbw() -> f64 {
    30.0
}

impl std::str::FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Build the validated device model this config describes.
    pub fn build_model(&self) -> Result<DeviceModel, ConfigError> {
        let cav = |s: &CavitySection| {
            CavityParams::new(
                TWO_PI * s.omega_hz,
                TWO_PI * s.kappa_ext_hz,
                TWO_PI * s.kappa_int_hz,
            )
        };
        let mech = |s: &MechSection| MechParams::new(TWO_PI * s.omega_hz, TWO_PI * s.gamma_hz);
        let cavities = [cav(&self.device.cavity1)?, cav(&self.device.cavity2)?];
        let mechs = [mech(&self.device.mech1)?, mech(&self.device.mech2)?];
        let mut drives = Vec::with_capacity(self.drives.len());
        for d in &self.drives {
            let cavity = match d.cavity {
                1 => CavityId::C1,
                2 => CavityId::C2,
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "drive cavity must be 1 or 2, got {other}"
                    )))
                }
            };
            let mech_id = match d.mech {
                1 => MechId::M1,
                2 => MechId::M2,
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "drive mech must be 1 or 2, got {other}"
                    )))
                }
            };
            if d.cooperativity < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "cooperativity must be non-negative, got {}",
                    d.cooperativity
                )));
            }
            let sideband = match d.sideband {
                SidebandName::Red => Sideband::Red,
                SidebandName::Blue => Sideband::Blue,
            };
            drives.push(PumpDrive {
                cavity,
                mech: mech_id,
                sideband,
                coupling_mag: PumpDrive::coupling_from_cooperativity(
                    d.cooperativity,
                    &cavities[cavity.index()],
                    &mechs[mech_id.index()],
                ),
                phase: d.phase_rad,
                delta: TWO_PI * d.detuning_hz,
            });
        }
        let mut model = DeviceModel::new(cavities, mechs, drives)?;
        match (self.device.g0_ratio_cavity1, self.device.g0_ratio_cavity2) {
            (None, None) => {}
            (q1, q2) => {
                model = model.with_g0_ratios(G0Ratios {
                    cavity1: q1.unwrap_or(1.0),
                    cavity2: q2.unwrap_or(1.0),
                });
            }
        }
        Ok(model)
    }

    /// The probe detunings (rad/s) the sweep section asks for, together
    /// with the lab→rotating conversion applied when frame = lab.
    pub fn sweep_omegas(&self) -> Result<Vec<f64>, ConfigError> {
        let s = &self.sweep;
        if s.points < 2 {
            return Err(ConfigError::Invalid(format!(
                "sweep needs at least 2 points, got {}",
                s.points
            )));
        }
        if s.stop_hz <= s.start_hz || !s.stop_hz.is_finite() || !s.start_hz.is_finite() {
            return Err(ConfigError::Invalid(
                "sweep stop_hz must exceed start_hz".into(),
            ));
        }
        let f1 = self.device.cavity1.omega_hz;
        let to_omega = |f_hz: f64| match s.frame {
            Frame::Rotating => TWO_PI * f_hz,
            Frame::Lab => TWO_PI * (f_hz - f1),
        };
        let n = s.points;
        Ok((0..n)
            .map(|i| {
                let f = s.start_hz + (s.stop_hz - s.start_hz) * i as f64 / (n as f64 - 1.0);
                to_omega(f)
            })
            .collect())
    }
}
