use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MwTone {
    pub frequency_ghz: f64,
    pub power_dbm: f64,
    #[serde(default = "yes")]
    pub on: bool,
}

fn yes() -> bool {
    true
}

/// Optical, microwave and environmental settings held fixed over a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserDrive {
    pub p_res_uw: f64,
    /// Laser frequency relative to the pathway-1 line center, GHz.
    pub detuning_ghz: f64,
    pub p_blue_uw: f64,
    pub p_green_uw: f64,
    pub temperature_k: f64,
    pub b_field_mt: f64,
    pub theta_deg: f64,
    pub mw: Option<MwTone>,
}

impl Default for LaserDrive {
    fn default() -> Self {
        Self {
            p_res_uw: 0.0,
            detuning_ghz: 0.0,
            p_blue_uw: 0.0,
            p_green_uw: 0.0,
            temperature_k: 77.0,
            b_field_mt: 0.0,
            theta_deg: 0.0,
            mw: None,
        }
    }
}

impl LaserDrive {
    pub fn resonant(p_res_uw: f64) -> Self {
        Self {
            p_res_uw,
            ..Self::default()
        }
    }

    pub fn green(p_green_uw: f64) -> Self {
        Self {
            p_green_uw,
            ..Self::default()
        }
    }

    /// All lasers and microwaves off; field and temperature kept.
    pub fn dark(&self) -> Self {
        Self {
            p_res_uw: 0.0,
            p_blue_uw: 0.0,
            p_green_uw: 0.0,
            mw: None,
            ..*self
        }
    }

    pub fn mw_rate_inputs(&self) -> Option<(f64, f64)> {
        self.mw.filter(|m| m.on).map(|m| (m.frequency_ghz, m.power_dbm))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_res_uw", self.p_res_uw),
            ("p_blue_uw", self.p_blue_uw),
            ("p_green_uw", self.p_green_uw),
            ("b_field_mt", self.b_field_mt),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("drive.{name} must be non-negative, got {v}")));
            }
        }
        if !(self.temperature_k > 0.0 && self.temperature_k.is_finite()) {
            return Err(invalid("drive.temperature_k must be positive"));
        }
        if !self.detuning_ghz.is_finite() || !self.theta_deg.is_finite() {
            return Err(invalid("drive detuning and angle must be finite"));
        }
        Ok(())
    }
}

/// One constant-drive stretch of a pulse sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSegment {
    pub drive: LaserDrive,
    pub duration_s: f64,
    /// Bin width for recording this segment; unrecorded when absent.
    #[serde(default)]
    pub record_bin_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub segments: Vec<SequenceSegment>,
    pub repeats: usize,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(invalid("a pulse sequence needs at least one segment"));
        }
        if self.repeats == 0 {
            return Err(invalid("a pulse sequence must repeat at least once"));
        }
        for s in &self.segments {
            s.drive.validate()?;
            if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
                return Err(invalid("segment durations must be positive"));
            }
            if let Some(b) = s.record_bin_s {
                if !(b > 0.0 && b <= s.duration_s) {
                    return Err(invalid("record bin must be positive and fit in its segment"));
                }
            }
        }
        Ok(())
    }
}
