//! Instantaneous rates of the composite emitter state.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::drive::LaserDrive;
use super::model::{DetectionModel, EmitterModel};
use super::state::{EnvState, Pathway, Shelf};

/// Saturation parameter of the optical transition. The resonant part is a
/// Lorentzian of FWHM γ_h in the detuning, so s/(1+s) traces the
/// power-broadened line of FWHM γ_h·√(1 + P/P_sat); green adds a
/// detuning-independent term.
pub fn saturation_parameter(model: &EmitterModel, drive: &LaserDrive, env: &EnvState) -> f64 {
    let mut s = drive.p_green_uw / model.p_sat_green_uw;
    if drive.p_res_uw > 0.0 {
        let delta = model.line_offset_ghz(env.pathway) + env.detuning_ghz - drive.detuning_ghz;
        let x = 2.0 * delta / model.gamma_h_ghz;
        s += drive.p_res_uw / model.p_sat_uw / (1.0 + x * x);
    }
    s
}

/// Detected emitter count rate in counts/s (background excluded).
pub fn emission_rate(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    env: &EnvState,
) -> f64 {
    if env.is_shelved() {
        return 0.0;
    }
    let s = saturation_parameter(model, drive, env);
    detection.c_cal * detection.eta_band(model.debye_waller) * model.gamma_max_per_s() / 2.0 * s
        / (1.0 + s)
}

/// Detected rate on resonance with pathway 1, unshelved.
pub fn peak_emission_rate(model: &EmitterModel, detection: &DetectionModel, drive: &LaserDrive) -> f64 {
    let env = EnvState::new(Pathway::P1, drive.detuning_ghz);
    emission_rate(model, detection, drive, &env)
}

/// Spectral-diffusion jump rate of the active pathway, Hz.
pub fn jump_rate(model: &EmitterModel, drive: &LaserDrive, pathway: Pathway) -> f64 {
    model
        .sd_jump(pathway)
        .rate_hz(drive.temperature_k, drive.p_res_uw, drive.p_blue_uw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    ShelveUp,
    ShelveDown,
    Deshelve,
    SpinMix,
    MwFlip,
    SwitchPathway,
    DetuningJump,
}

/// Slow transition rates out of `env`. Shelving entry is weighted by the
/// excited-state fraction s/(1+s).
pub fn slow_rates(
    model: &EmitterModel,
    drive: &LaserDrive,
    env: &EnvState,
    include_jumps: bool,
) -> [(Transition, f64); 6] {
    let sh = &model.shelving;
    let ps = &model.pathway_switch;
    let switch = match env.pathway {
        Pathway::P1 => ps.k12_hz + ps.k12_blue_hz_per_uw * drive.p_blue_uw,
        Pathway::P2 => ps.k21_hz + ps.k21_blue_hz_per_uw * drive.p_blue_uw,
    };
    let jump = if include_jumps {
        jump_rate(model, drive, env.pathway)
    } else {
        0.0
    };
    let (a, b, c, d) = match env.shelf {
        Shelf::None => {
            let s = saturation_parameter(model, drive, env);
            let e = s / (1.0 + s);
            (
                (Transition::ShelveUp, e * sh.kappa_up_hz),
                (Transition::ShelveDown, e * sh.kappa_down_hz),
                (Transition::SpinMix, 0.0),
                (Transition::MwFlip, 0.0),
            )
        }
        shelf => {
            let d = if shelf == Shelf::SUp { sh.d_up_hz } else { sh.d_down_hz };
            let mw = drive
                .mw_rate_inputs()
                .map_or(0.0, |(f, p)| model.mw.flip_rate_hz(f, p));
            (
                (Transition::Deshelve, d + sh.r_blue_hz_per_uw * drive.p_blue_uw),
                (Transition::SpinMix, sh.mixing_hz(drive.b_field_mt, drive.theta_deg)),
                (Transition::MwFlip, mw),
                (Transition::ShelveDown, 0.0),
            )
        }
    };
    [a, b, c, d, (Transition::SwitchPathway, switch), (Transition::DetuningJump, jump)]
}

/// Fresh detuning from the jump target distribution.
pub fn sample_detuning<R: Rng + ?Sized>(model: &EmitterModel, rng: &mut R) -> f64 {
    if model.jump_target.is_empty() {
        return Normal::new(0.0, model.sigma_inh_ghz).unwrap().sample(rng);
    }
    let total: f64 = model.jump_target.iter().map(|c| c.weight).sum();
    let mut u = rng.random::<f64>() * total;
    let mut pick = model.jump_target[model.jump_target.len() - 1];
    for c in &model.jump_target {
        if u < c.weight {
            pick = *c;
            break;
        }
        u -= c.weight;
    }
    if pick.sigma_ghz == 0.0 {
        pick.mean_ghz
    } else {
        Normal::new(pick.mean_ghz, pick.sigma_ghz).unwrap().sample(rng)
    }
}

pub(crate) fn apply<R: Rng + ?Sized>(
    model: &EmitterModel,
    env: &mut EnvState,
    t: Transition,
    rng: &mut R,
) {
    match t {
        Transition::ShelveUp => env.shelf = Shelf::SUp,
        Transition::ShelveDown => env.shelf = Shelf::SDown,
        Transition::Deshelve => env.shelf = Shelf::None,
        Transition::SpinMix | Transition::MwFlip => {
            env.shelf = match env.shelf {
                Shelf::SUp => Shelf::SDown,
                Shelf::SDown => Shelf::SUp,
                Shelf::None => Shelf::None,
            }
        }
        Transition::SwitchPathway => env.pathway = env.pathway.other(),
        Transition::DetuningJump => env.detuning_ghz = sample_detuning(model, rng),
    }
}

pub(crate) fn choose<R: Rng + ?Sized>(rates: &[(Transition, f64)], total: f64, rng: &mut R) -> Transition {
    let mut u = rng.random::<f64>() * total;
    let mut last = rates[0].0;
    for &(t, r) in rates {
        if r <= 0.0 {
            continue;
        }
        last = t;
        if u < r {
            return t;
        }
        u -= r;
    }
    last
}

/// One Gillespie step of the slow environment. Returns the next state and
/// the dwell time in the current one; the dwell is infinite when no
/// transition is possible under `drive`.
pub fn step_slow_state<R: Rng + ?Sized>(
    model: &EmitterModel,
    drive: &LaserDrive,
    env: &EnvState,
    rng: &mut R,
) -> (EnvState, f64) {
    let rates = slow_rates(model, drive, env, true);
    let total: f64 = rates.iter().map(|r| r.1).sum();
    if !(total > 0.0) {
        return (*env, f64::INFINITY);
    }
    let dwell = Exp::new(total).unwrap().sample(rng);
    let mut next = *env;
    let t = choose(&rates, total, rng);
    apply(model, &mut next, t, rng);
    (next, dwell)
}
