//! Generator settings of the closed-loop suites.

use crate::sim::{
    Band, DetectionModel, EmitterModel, JumpComponent, LaserDrive, Pathway, PathwaySwitch, SdJump, Shelving,
};

/// Resonant emitter with a static environment: no spectral jumps, no
/// pathway switching, no shelving, line centered on the laser.
pub fn frozen_model() -> EmitterModel {
    EmitterModel {
        initial_detuning_ghz: Some(0.0),
        sd_jump_p1: SdJump::default(),
        sd_jump_p2: SdJump::default(),
        pathway_switch: fixed_pathway(Pathway::P1),
        shelving: Shelving {
            kappa_up_hz: 0.0,
            kappa_down_hz: 0.0,
            ..Shelving::default()
        },
        ..EmitterModel::default()
    }
}

fn fixed_pathway(p: Pathway) -> PathwaySwitch {
    PathwaySwitch {
        k12_hz: 0.0,
        k21_hz: 0.0,
        k12_blue_hz_per_uw: 0.0,
        k21_blue_hz_per_uw: 0.0,
        initial: Some(p),
    }
}

pub const SATURATION_POWERS_UW: [f64; 12] = [1.0, 2.0, 3.0, 5.0, 7.6, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0];

pub fn saturation_detection(model: &EmitterModel) -> DetectionModel {
    DetectionModel {
        background_rate_cps: 1000.0,
        ..DetectionModel::paper_psb(model)
    }
}

/// Every scan sees one static detuning drawn from the inhomogeneous
/// distribution.
pub fn ple_model() -> EmitterModel {
    EmitterModel {
        initial_detuning_ghz: None,
        jump_target: Vec::new(),
        ..frozen_model()
    }
}

/// Fraction of spectral jumps that land back on resonance in the
/// telegraph scenario.
pub const TELEGRAPH_RESONANT_WEIGHT: f64 = 0.1;
pub const TELEGRAPH_POWER_UW: f64 = 20.0;
pub const TELEGRAPH_BIN_S: f64 = 1e-6;
pub const TELEGRAPH_N_SIGMA: f64 = 7.0;

/// Two-level detuning telegraph: jumps land on resonance (ON) with
/// probability q or several GHz away (OFF), so ON durations are
/// exponential with rate γ_sd·(1 − q).
pub fn telegraph_model(pathway: Pathway) -> EmitterModel {
    let base = EmitterModel::default();
    EmitterModel {
        jump_target: vec![
            JumpComponent {
                weight: TELEGRAPH_RESONANT_WEIGHT,
                mean_ghz: 0.0,
                sigma_ghz: 0.02,
            },
            JumpComponent {
                weight: 1.0 - TELEGRAPH_RESONANT_WEIGHT,
                mean_ghz: 10.0,
                sigma_ghz: 2.0,
            },
        ],
        sd_jump_p1: base.sd_jump_p1,
        sd_jump_p2: base.sd_jump_p2,
        pathway_switch: fixed_pathway(pathway),
        ..frozen_model()
    }
}

/// Laser parked on the line of `pathway`.
pub fn telegraph_drive(model: &EmitterModel, pathway: Pathway, temperature_k: f64) -> LaserDrive {
    LaserDrive {
        p_res_uw: TELEGRAPH_POWER_UW,
        detuning_ghz: model.line_offset_ghz(pathway),
        temperature_k,
        ..LaserDrive::default()
    }
}

/// Unfiltered detection with laser leakage, which puts the ON threshold at
/// several counts per bin, above the far Lorentzian tail.
pub fn telegraph_detection() -> DetectionModel {
    DetectionModel {
        eta: 0.10,
        band: Band::All,
        background_rate_cps: 1e6,
        c_cal: 1.0,
    }
}

/// Off-rate γ_sd·(1 − q) of the telegraph scenario.
pub fn telegraph_off_rate_hz(model: &EmitterModel, drive: &LaserDrive, pathway: Pathway) -> f64 {
    crate::sim::jump_rate(model, drive, pathway) * (1.0 - TELEGRAPH_RESONANT_WEIGHT)
}

pub const BLINK_BIN_S: f64 = 20e-6;
/// Peak emitter counts per bin.
pub const BLINK_LAMBDA_MAX: f64 = 10.0;
pub const BLINK_BLUE_UW: f64 = 100.0;

pub fn blinking_detection() -> DetectionModel {
    DetectionModel {
        background_rate_cps: 1e4,
        ..DetectionModel::default()
    }
}

/// Resonant power giving `BLINK_LAMBDA_MAX` counts per bin at zero detuning.
pub fn blinking_power_uw(model: &EmitterModel, detection: &DetectionModel) -> f64 {
    let ceiling = detection.c_cal * detection.eta_band(model.debye_waller) * model.gamma_max_per_s() / 2.0;
    let r = BLINK_LAMBDA_MAX / BLINK_BIN_S;
    model.p_sat_uw * r / (ceiling - r)
}

/// Power-broadened half-width of the line at `p_res_uw`, GHz.
pub fn broadened_hwhm_ghz(model: &EmitterModel, p_res_uw: f64) -> f64 {
    0.5 * model.gamma_h_ghz * (1.0 + p_res_uw / model.p_sat_uw).sqrt()
}

/// Emitter that is ON (bright, with a spread of detunings inside the line)
/// or shelved in a long-lived dark state; blue light empties the shelf.
/// The detuning spread equals the broadened half-width, so the photon
/// number mixture uses a pushforward width ratio of 1.
pub fn blinking_model() -> EmitterModel {
    let base = frozen_model();
    let det = blinking_detection();
    let p = blinking_power_uw(&base, &det);
    let s = p / base.p_sat_uw;
    EmitterModel {
        jump_target: vec![JumpComponent {
            weight: 1.0,
            mean_ghz: 0.0,
            sigma_ghz: broadened_hwhm_ghz(&base, p),
        }],
        initial_detuning_ghz: None,
        sd_jump_p1: SdJump {
            gamma0_khz: 0.5,
            ..SdJump::default()
        },
        shelving: Shelving {
            // ~1 ms bright episodes at the peak excited fraction
            kappa_up_hz: 1000.0 * (1.0 + s) / s,
            kappa_down_hz: 0.0,
            d_up_hz: 4.0,
            d_down_hz: 0.0,
            r_blue_hz_per_uw: 1.35,
            m0_hz: 0.0,
            m1_hz: 0.0,
            theta_ref_deg: 0.0,
            m_zero_hz: 0.0,
        },
        ..base
    }
}

pub fn blinking_drive(model: &EmitterModel, blue: bool) -> LaserDrive {
    LaserDrive {
        p_res_uw: blinking_power_uw(model, &blinking_detection()),
        p_blue_uw: if blue { BLINK_BLUE_UW } else { 0.0 },
        ..LaserDrive::default()
    }
}

/// Static optics with the calibrated metastable shelf.
pub fn spin_model() -> EmitterModel {
    EmitterModel {
        shelving: Shelving::default(),
        ..frozen_model()
    }
}

pub const SPIN_FIELD_MT: f64 = 10.0;
pub const READOUT_GREEN_UW: f64 = 240.0;

pub fn green_readout(b_field_mt: f64, theta_deg: f64) -> LaserDrive {
    LaserDrive {
        b_field_mt,
        theta_deg,
        ..LaserDrive::green(READOUT_GREEN_UW)
    }
}

/// Slowest dark relaxation time of the two-sublevel shelf; the pump–probe
/// recovery time of the generator.
pub fn dark_recovery_time_s(model: &EmitterModel, drive: &LaserDrive) -> f64 {
    let sh = &model.shelving;
    let m = sh.mixing_hz(drive.b_field_mt, drive.theta_deg);
    let a = sh.d_up_hz + m;
    let b = sh.d_down_hz + m;
    let slow = 0.5 * ((a + b) - ((a - b).powi(2) + 4.0 * m * m).sqrt());
    1.0 / slow
}

/// MW powers of the power series, dBm; 0 dBm is the calibrated sweep.
pub const ODMR_SERIES_DBM: [f64; 3] = [0.64, -1.0, -2.79];
pub const ODMR_CALIBRATED_DBM: f64 = 0.0;
