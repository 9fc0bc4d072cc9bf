//! Photon-resolution stochastic simulation for time-tag output.
//!
//! Optical cycling is explicit: from G the emitter is excited at
//! R = sΓ/2; from E it decays spontaneously at Γ (a photon, detected with
//! probability c_cal·η_band) or is returned by stimulated emission at R.
//! The stationary emission rate is then Γ/2·s/(1+s), matching the two-tier
//! engine. Intersystem crossing leaves E at 2κ, which averages to the
//! two-tier entry rate κ·s/(1+s). Slow environment transitions run in the
//! same Gillespie loop.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::drive::LaserDrive;
use super::engine::initial_state;
use super::model::{DetectionModel, EmitterModel};
use super::rates::{apply, saturation_parameter, slow_rates, Transition};
use super::seed::substream;
use super::state::{Electronic, Shelf};
use crate::data::{TimeTagStream, TICKS_PER_SECOND};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Clone, Copy)]
enum Event {
    Excite,
    Emit,
    Stimulated,
    Isc(Shelf),
    Slow(Transition),
}

/// Upper estimate of the number of stochastic events in `duration`.
pub fn expected_events(model: &EmitterModel, detection: &DetectionModel, drive: &LaserDrive, duration: f64) -> f64 {
    let s = drive.p_res_uw / model.p_sat_uw + drive.p_green_uw / model.p_sat_green_uw;
    let gamma = model.gamma_max_per_s();
    let optical = s / (1.0 + s) * gamma * (1.0 + s / 2.0);
    (optical + detection.background_rate_cps) * duration
}

pub fn simulate_timetags(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    duration: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    simulate_timetags_capped(model, detection, drive, duration, seed, DEFAULT_EVENT_CAP)
}

pub fn simulate_timetags_capped(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    duration: f64,
    seed: u64,
    event_cap: u64,
) -> Result<TimeTagStream> {
    model.validate()?;
    detection.validate()?;
    drive.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration must be positive"));
    }
    let expected = expected_events(model, detection, drive, duration);
    if expected > event_cap as f64 {
        return Err(Error::CapExceeded(format!(
            "about {expected:.3e} events expected for {duration} s, above the cap of {event_cap}; \
             shorten the duration, lower the excitation power or background, or raise the cap"
        )));
    }

    let mut rng = substream(seed, 1, 0);
    let mut env = initial_state(model, &mut rng);
    let gamma = model.gamma_max_per_s();
    let p_det = detection.p_detect(model.debye_waller);
    // with no resonant laser the detuning is unobservable for the whole run
    let resonant = drive.p_res_uw > 0.0;
    let sh = &model.shelving;

    let mut tags: Vec<u64> = Vec::with_capacity((expected * p_det).min(5e7) as usize);
    let mut t = 0.0;
    let mut events = 0u64;
    // slow part depends only on the environment, so it is rebuilt only
    // after slow transitions; the optical part is rebuilt every event
    let mut slow: Vec<(Event, f64)> = Vec::with_capacity(6);
    let mut slow_total = 0.0;
    let mut r_exc = 0.0;
    let mut slow_dirty = true;
    let mut table: Vec<(Event, f64)> = Vec::with_capacity(10);

    loop {
        if slow_dirty {
            slow.clear();
            for (tr, rate) in slow_rates(model, drive, &env, resonant) {
                // shelving entry is handled through E below
                if rate > 0.0 && !matches!(tr, Transition::ShelveUp | Transition::ShelveDown) {
                    slow.push((Event::Slow(tr), rate));
                }
            }
            slow_total = slow.iter().map(|e| e.1).sum();
            r_exc = saturation_parameter(model, drive, &env) * gamma / 2.0;
            slow_dirty = false;
        }
        table.clear();
        match (env.shelf, env.electronic) {
            (Shelf::None, Electronic::G) => table.push((Event::Excite, r_exc)),
            (Shelf::None, Electronic::E) => {
                table.push((Event::Emit, gamma));
                table.push((Event::Stimulated, r_exc));
                table.push((Event::Isc(Shelf::SUp), 2.0 * sh.kappa_up_hz));
                table.push((Event::Isc(Shelf::SDown), 2.0 * sh.kappa_down_hz));
            }
            _ => {}
        }
        let total = table.iter().map(|e| e.1).sum::<f64>() + slow_total;
        if !(total > 0.0) {
            break;
        }
        let dt = Exp::new(total).unwrap().sample(&mut rng);
        if t + dt > duration {
            break;
        }
        t += dt;
        events += 1;
        if events > event_cap {
            return Err(Error::CapExceeded(format!(
                "event cap {event_cap} reached at t = {t:.6} s"
            )));
        }
        let mut u = rng.random::<f64>() * total;
        let mut ev = None;
        for &(e, r) in table.iter().chain(&slow) {
            if u < r {
                ev = Some(e);
                break;
            }
            u -= r;
        }
        // rounding can leave u just past the last rate
        let ev = ev.unwrap_or_else(|| slow.last().or(table.last()).unwrap().0);
        match ev {
            Event::Excite => env.electronic = Electronic::E,
            Event::Emit => {
                env.electronic = Electronic::G;
                if rng.random::<f64>() < p_det {
                    push_tag(&mut tags, t);
                }
            }
            Event::Stimulated => env.electronic = Electronic::G,
            Event::Isc(level) => {
                env.electronic = Electronic::G;
                env.shelf = level;
                slow_dirty = true;
            }
            Event::Slow(tr) => {
                apply(model, &mut env, tr, &mut rng);
                slow_dirty = true;
            }
        }
    }

    let bg = background_tags(detection.background_rate_cps, duration, &mut substream(seed, 1, 1));
    let merged = merge_dedup(&tags, &bg);
    let end = (duration * TICKS_PER_SECOND).round() as u64;
    let merged: Vec<u64> = merged.into_iter().filter(|&x| x <= end).collect();
    TimeTagStream::new(merged, end, 0)
}

fn push_tag(tags: &mut Vec<u64>, t: f64) {
    let tick = (t * TICKS_PER_SECOND) as u64;
    if tags.last().is_none_or(|&l| tick > l) {
        tags.push(tick);
    }
}

/// Homogeneous Poisson tags at `rate` counts/s.
pub fn background_tags<R: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).unwrap();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > duration {
            break;
        }
        push_tag(&mut out, t);
    }
    out
}

/// Merges two sorted tick lists, dropping exact collisions.
pub fn merge_dedup(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last().is_none_or(|&l| next > l) {
            out.push(next);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{fit_g2, g2_histogram};
    use crate::sim::{simulate_trace, stationary_rate, Pathway, SdJump};

    #[test]
    fn merge_keeps_order_and_drops_duplicates() {
        assert_eq!(merge_dedup(&[1, 4, 9], &[2, 4, 10]), vec![1, 2, 4, 9, 10]);
        assert_eq!(merge_dedup(&[], &[3]), vec![3]);
    }

    fn ideal() -> EmitterModel {
        let mut m = EmitterModel {
            initial_detuning_ghz: Some(0.0),
            sd_jump_p1: SdJump::default(),
            sd_jump_p2: SdJump::default(),
            ..EmitterModel::default()
        };
        m.pathway_switch.k12_hz = 0.0;
        m.pathway_switch.k21_hz = 0.0;
        m.pathway_switch.initial = Some(Pathway::P1);
        m
    }

    #[test]
    fn ideal_emitter_antibunches() {
        let mut m = ideal();
        m.shelving.kappa_up_hz = 0.0;
        let det = DetectionModel::default();
        let drive = LaserDrive::resonant(m.p_sat_uw);
        let tags = simulate_timetags(&m, &det, &drive, 0.02, 3).unwrap();
        let c = g2_histogram(&tags, 20.0, 0.1).unwrap();
        assert!(c.zero_lag() < 0.15, "g2(0) = {}", c.zero_lag());
        let fit = fit_g2(&c, false).unwrap().antibunching;
        // recovery rate Γ(1 + s) at s = 1
        let tau = 1.0 / (2.0 * m.gamma_rad_per_ns);
        assert!((fit.value("tau_a") / tau - 1.0).abs() < 0.1, "{}", fit.value("tau_a"));
    }

    #[test]
    fn mean_rate_agrees_with_two_tier_and_stationary_solution() {
        let mut m = ideal();
        // fast shelf so that short runs average many cycles
        m.shelving.kappa_up_hz *= 100.0;
        m.shelving.d_up_hz *= 100.0;
        m.shelving.d_down_hz *= 100.0;
        m.shelving.m_zero_hz *= 100.0;
        m.shelving.kappa_down_hz = 0.3 * m.shelving.kappa_up_hz;
        let det = DetectionModel::default();
        for (i, p) in [1.0, 3.0, 7.6, 20.0, 60.0].into_iter().enumerate() {
            let drive = LaserDrive::resonant(p);
            let oracle = stationary_rate(&m, &det, &drive, 0.0, Pathway::P1);
            let d = 0.01;
            let ssa = simulate_timetags(&m, &det, &drive, d, 10 + i as u64).unwrap().mean_rate();
            let tt = simulate_trace(&m, &det, &drive, 0.2, 1e-4, 10 + i as u64).unwrap().mean_rate();
            assert!((ssa / oracle - 1.0).abs() < 0.03, "P {p}: ssa {ssa} vs {oracle}");
            assert!((tt / oracle - 1.0).abs() < 0.03, "P {p}: two-tier {tt} vs {oracle}");
        }
    }

    #[test]
    fn cap_is_enforced_with_message() {
        let m = EmitterModel::default();
        let d = DetectionModel::default();
        let err = simulate_timetags(&m, &d, &LaserDrive::resonant(100.0), 10.0, 1).unwrap_err();
        match err {
            Error::CapExceeded(msg) => assert!(msg.contains("lower the excitation power")),
            e => panic!("unexpected {e:?}"),
        }
    }
}
