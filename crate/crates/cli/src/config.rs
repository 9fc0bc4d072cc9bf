use std::path::{Path, PathBuf};

use photodyn_core::fit::SpectrumOptions;
use photodyn_core::intervals::IntervalFitOptions;
use photodyn_core::mixture::MixtureOptions;
use photodyn_core::sim::{DetectionModel, EmitterModel, Protocol};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: EmitterModel,
    #[serde(default)]
    pub detection: DetectionModel,
    pub protocol: Protocol,
    #[serde(default)]
    pub analysis: Vec<Stage>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn three() -> f64 {
    3.0
}

fn false_alarm() -> f64 {
    1e-3
}

fn ple_bins() -> usize {
    32
}

fn max_lag_ns() -> f64 {
    50.0
}

fn g2_bin_ns() -> f64 {
    0.1
}

/// One analysis stage and its parameters, `[[analysis]]` in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    /// ON/OFF classification against the laser-off reference and rates.
    Intervals {
        #[serde(default = "three")]
        n_sigma: f64,
        #[serde(default)]
        fit: IntervalFitOptions,
    },
    /// Photon-number mixture with BIC selection of λ_max.
    Mixture {
        /// Candidate λ_max values; derived from the counts when absent.
        #[serde(default)]
        lambda_max_grid: Option<Vec<f64>>,
        #[serde(default)]
        options: MixtureOptions,
    },
    G2 {
        #[serde(default = "max_lag_ns")]
        max_lag_ns: f64,
        #[serde(default = "g2_bin_ns")]
        bin_ns: f64,
        #[serde(default)]
        bunching: bool,
    },
    Saturation {
        #[serde(default = "three")]
        n_sigma: f64,
    },
    Ple {
        #[serde(default = "false_alarm")]
        false_alarm: f64,
        #[serde(default = "ple_bins")]
        bins: usize,
    },
    PumpProbe {},
    Odmr {},
    Angle {},
    Spectrum {
        #[serde(default)]
        options: SpectrumOptions,
    },
}

pub const STAGE_NAMES: [&str; 9] = [
    "intervals",
    "mixture",
    "g2",
    "saturation",
    "ple",
    "pump_probe",
    "odmr",
    "angle",
    "spectrum",
];

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Intervals { .. } => "intervals",
            Stage::Mixture { .. } => "mixture",
            Stage::G2 { .. } => "g2",
            Stage::Saturation { .. } => "saturation",
            Stage::Ple { .. } => "ple",
            Stage::PumpProbe {} => "pump_probe",
            Stage::Odmr {} => "odmr",
            Stage::Angle {} => "angle",
            Stage::Spectrum { .. } => "spectrum",
        }
    }

    /// The stage with default parameters.
    pub fn named(name: &str) -> Option<Stage> {
        let table = format!("stage = \"{name}\"");
        toml::from_str(&table).ok()
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let msg = format!("cannot read {}: {e}", path.display());
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::Usage(msg)
            } else {
                CliError::Io(msg)
            }
        })?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: photodyn_core::Error| CliError::Usage(format!("invalid config: {e}"));
        self.model.validate().map_err(invalid)?;
        self.detection.validate().map_err(invalid)?;
        for stage in &self.analysis {
            let ok = matches!(
                (stage, &self.protocol),
                (Stage::Intervals { .. } | Stage::Mixture { .. }, Protocol::Trace { .. })
                    | (Stage::G2 { .. }, Protocol::Timetags { .. })
                    | (Stage::Saturation { .. }, Protocol::Saturation(_))
                    | (Stage::Ple { .. }, Protocol::Ple(_))
                    | (Stage::PumpProbe {}, Protocol::PumpProbe(_))
                    | (Stage::Odmr {}, Protocol::Odmr(_))
                    | (Stage::Angle {}, Protocol::AngleSweep(_))
                    | (Stage::Spectrum { .. }, Protocol::SpectralSeries(_))
            );
            if !ok {
                return Err(CliError::Usage(format!(
                    "invalid config: analysis stage `{}` does not apply to a `{}` protocol",
                    stage.name(),
                    protocol_kind(&self.protocol)
                )));
            }
        }
        Ok(())
    }
}

pub fn protocol_kind(p: &Protocol) -> &'static str {
    match p {
        Protocol::Trace { .. } => "trace",
        Protocol::Timetags { .. } => "timetags",
        Protocol::Ple(_) => "ple",
        Protocol::Saturation(_) => "saturation",
        Protocol::PumpProbe(_) => "pump_probe",
        Protocol::Odmr(_) => "odmr",
        Protocol::AngleSweep(_) => "angle_sweep",
        Protocol::SpectralSeries(_) => "spectral_series",
        Protocol::PulseSequence(_) => "pulse_sequence",
    }
}
