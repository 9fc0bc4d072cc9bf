//! Two-tier engine: slow Gillespie dynamics of the environment, with
//! photon counts drawn afterwards as Poisson variates of the integrated
//! emission rate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::drive::LaserDrive;
use super::model::{DetectionModel, EmitterModel};
use super::rates::{apply, choose, emission_rate, jump_rate, sample_detuning, slow_rates};
use super::seed::substream;
use super::state::{EnvState, Pathway};
use crate::data::BinnedTrace;
use crate::error::{invalid, Result};

/// Initial environment: configured pathway/detuning, else a draw from the
/// stationary pathway occupancy and the jump target.
pub fn initial_state<R: Rng + ?Sized>(model: &EmitterModel, rng: &mut R) -> EnvState {
    let ps = &model.pathway_switch;
    let pathway = ps.initial.unwrap_or_else(|| {
        let total = ps.k12_hz + ps.k21_hz;
        if total > 0.0 && rng.random::<f64>() < ps.k12_hz / total {
            Pathway::P2
        } else {
            Pathway::P1
        }
    });
    let detuning = model
        .initial_detuning_ghz
        .unwrap_or_else(|| sample_detuning(model, rng));
    EnvState::new(pathway, detuning)
}

/// Slow-state evolution with constant-rate segments reported to a callback.
///
/// While no resonant laser is on, the detuning is unobservable and jumps
/// are not sampled; the integrated jump hazard is kept instead and, when a
/// resonant drive resumes, the detuning is redrawn with probability
/// `1 − exp(−hazard)`. Because jumps draw fresh from a fixed target this
/// is exact in distribution.
pub struct TwoTier<'a> {
    model: &'a EmitterModel,
    detection: &'a DetectionModel,
    pub env: EnvState,
    pub t: f64,
    hazard: f64,
    rng: ChaCha8Rng,
    events: u64,
}

impl<'a> TwoTier<'a> {
    pub fn new(model: &'a EmitterModel, detection: &'a DetectionModel, mut rng: ChaCha8Rng) -> Self {
        let env = initial_state(model, &mut rng);
        Self::with_state(model, detection, env, rng)
    }

    pub fn with_state(
        model: &'a EmitterModel,
        detection: &'a DetectionModel,
        env: EnvState,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            model,
            detection,
            env,
            t: 0.0,
            hazard: 0.0,
            rng,
            events: 0,
        }
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Expected detected counts over the next `duration`.
    pub fn integrate(&mut self, drive: &LaserDrive, duration: f64) -> f64 {
        let mut sum = 0.0;
        self.run(drive, duration, |_, len, rate, _| sum += rate * len);
        sum
    }

    /// Advances by `duration` under `drive`; `f(start, length, rate, env)`
    /// sees each piece of constant detected rate (counts/s, background
    /// excluded) together with the state that produced it.
    pub fn run<F: FnMut(f64, f64, f64, &EnvState)>(&mut self, drive: &LaserDrive, duration: f64, mut f: F) {
        let resonant = drive.p_res_uw > 0.0;
        if resonant && self.hazard > 0.0 {
            if self.rng.random::<f64>() < -(-self.hazard).exp_m1() {
                self.env.detuning_ghz = sample_detuning(self.model, &mut self.rng);
            }
            self.hazard = 0.0;
        }
        let mut remaining = duration;
        while remaining > 0.0 {
            let rates = slow_rates(self.model, drive, &self.env, resonant);
            let total: f64 = rates.iter().map(|r| r.1).sum();
            let rate = emission_rate(self.model, self.detection, drive, &self.env);
            let dwell = if total > 0.0 {
                Exp::new(total).unwrap().sample(&mut self.rng)
            } else {
                f64::INFINITY
            };
            let piece = dwell.min(remaining);
            f(self.t, piece, rate, &self.env);
            if !resonant {
                self.hazard += jump_rate(self.model, drive, self.env.pathway) * piece;
            }
            self.t += piece;
            if dwell >= remaining {
                break;
            }
            remaining -= piece;
            let tr = choose(&rates, total, &mut self.rng);
            apply(self.model, &mut self.env, tr, &mut self.rng);
            self.events += 1;
        }
    }
}

/// Adds rate × time into fixed-width bins starting at `t0`.
pub(crate) struct BinAccumulator {
    pub t0: f64,
    pub bin: f64,
    pub expected: Vec<f64>,
}

impl BinAccumulator {
    pub fn new(t0: f64, bin: f64, n: usize) -> Self {
        Self {
            t0,
            bin,
            expected: vec![0.0; n],
        }
    }

    pub fn add(&mut self, start: f64, len: f64, rate: f64) {
        if rate == 0.0 || len <= 0.0 {
            return;
        }
        let n = self.expected.len();
        let mut a = start - self.t0;
        let end = a + len;
        let mut i = (a / self.bin).floor().max(0.0) as usize;
        while i < n && a < end {
            let edge = (i + 1) as f64 * self.bin;
            let piece = end.min(edge) - a;
            if piece > 0.0 {
                self.expected[i] += rate * piece;
            }
            a = edge;
            i += 1;
        }
    }
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).unwrap().sample(rng) as u64
    }
}

/// What the simulator knows about a trace that the counts do not show.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceTruth {
    /// Time fraction with detected emitter rate above `threshold_cps`.
    pub on_fraction: f64,
    pub threshold_cps: f64,
    /// Mean detected emitter rate (background excluded).
    pub mean_rate_cps: f64,
    pub slow_events: u64,
}

fn check_trace_args(duration: f64, bin_width: f64) -> Result<usize> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(invalid(format!("bin width must be positive, got {bin_width}")));
    }
    if !(duration >= bin_width && duration.is_finite()) {
        return Err(invalid(format!(
            "duration {duration} s must be at least one bin ({bin_width} s)"
        )));
    }
    Ok((duration / bin_width * (1.0 + 1e-12)).floor() as usize)
}

/// Binned photon-count trace under a constant drive.
pub fn simulate_trace(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    duration: f64,
    bin_width: f64,
    seed: u64,
) -> Result<BinnedTrace> {
    simulate_trace_with_truth(model, detection, drive, duration, bin_width, seed, f64::INFINITY)
        .map(|(t, _)| t)
}

/// As [`simulate_trace`], also reporting the time fraction spent above
/// `on_threshold_cps`.
pub fn simulate_trace_with_truth(
    model: &EmitterModel,
    detection: &DetectionModel,
    drive: &LaserDrive,
    duration: f64,
    bin_width: f64,
    seed: u64,
    on_threshold_cps: f64,
) -> Result<(BinnedTrace, TraceTruth)> {
    model.validate()?;
    detection.validate()?;
    drive.validate()?;
    let n = check_trace_args(duration, bin_width)?;
    let span = n as f64 * bin_width;
    let mut acc = BinAccumulator::new(0.0, bin_width, n);
    let mut engine = TwoTier::new(model, detection, substream(seed, 0, 0));
    let mut on_time = 0.0;
    let mut integral = 0.0;
    engine.run(drive, span, |start, len, rate, _| {
        acc.add(start, len, rate);
        integral += rate * len;
        if rate > on_threshold_cps {
            on_time += len;
        }
    });
    let mut rng = substream(seed, 0, 1);
    let bg = detection.background_rate_cps * bin_width;
    let counts = acc
        .expected
        .iter()
        .map(|&l| poisson_draw(l + bg, &mut rng))
        .collect();
    let truth = TraceTruth {
        on_fraction: on_time / span,
        threshold_cps: on_threshold_cps,
        mean_rate_cps: integral / span,
        slow_events: engine.events(),
    };
    Ok((BinnedTrace::new(bin_width, counts, 0.0)?, truth))
}
