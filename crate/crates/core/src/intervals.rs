//! ON/OFF thresholding of binned traces and switching-rate estimation from
//! the resulting interval durations.

use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use crate::data::{mean_and_sd, BinnedTrace, FitResult, Goodness};
use crate::error::{invalid, Error, Result};
use crate::fit::weighted_line;

/// A maximal run of bins in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub on: bool,
    pub start_s: f64,
    pub duration_s: f64,
    /// First or last run of the trace, whose true length is unknown.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub on_durations: Vec<f64>,
    pub off_durations: Vec<f64>,
    /// Counts per bin a bin must exceed to be ON.
    pub threshold: f64,
    pub n_sigma: f64,
    pub bin_width: f64,
    pub runs: Vec<Run>,
    pub on_bins: usize,
    pub total_bins: usize,
}

impl IntervalRecord {
    /// Interior runs as `state,start_s,duration_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "state,start_s,duration_s")?;
        for r in self.runs.iter().filter(|r| !r.truncated) {
            let state = if r.on { "on" } else { "off" };
            writeln!(w, "{state},{:.9},{:.9}", r.start_s, r.duration_s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A bin is ON iff its count exceeds `bg_mean + n_sigma·bg_sigma`. The
/// first and last runs are censored and left out of the duration lists.
pub fn classify_on_off(trace: &BinnedTrace, bg_mean: f64, bg_sigma: f64, n_sigma: f64) -> Result<IntervalRecord> {
    if !(bg_sigma >= 0.0) || !bg_mean.is_finite() || !n_sigma.is_finite() {
        return Err(invalid("background statistics must be finite with sigma ≥ 0"));
    }
    if trace.len() < 3 {
        return Err(invalid(format!("trace has {} bins; at least 3 are needed", trace.len())));
    }
    let threshold = bg_mean + n_sigma * bg_sigma;
    let bw = trace.bin_width();
    let states: Vec<bool> = trace.counts().iter().map(|&c| c as f64 > threshold).collect();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=states.len() {
        if i == states.len() || states[i] != states[start] {
            runs.push(Run {
                on: states[start],
                start_s: trace.t0() + start as f64 * bw,
                duration_s: (i - start) as f64 * bw,
                truncated: start == 0 || i == states.len(),
            });
            start = i;
        }
    }
    let interior = |on: bool| -> Vec<f64> {
        runs.iter()
            .filter(|r| !r.truncated && r.on == on)
            .map(|r| r.duration_s)
            .collect()
    };
    Ok(IntervalRecord {
        on_durations: interior(true),
        off_durations: interior(false),
        threshold,
        n_sigma,
        bin_width: bw,
        on_bins: states.iter().filter(|&&s| s).count(),
        total_bins: states.len(),
        runs,
    })
}

/// Background mean and sigma from a reference trace, then classification.
pub fn classify_with_reference(
    trace: &BinnedTrace,
    reference: &BinnedTrace,
    n_sigma: f64,
) -> Result<IntervalRecord> {
    let (m, s) = mean_and_sd(reference.counts());
    classify_on_off(trace, m, s, n_sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntervalFitOptions {
    /// Minimum number of durations.
    pub min_count: usize,
    /// Histogram bins with fewer entries are left out of the semilog fit.
    pub min_bin_entries: u64,
    /// Durations are multiples of this width (the trace bin width); each
    /// histogram bin then holds exactly one duration value.
    pub quantum_s: Option<f64>,
    /// Relative disagreement between the estimators that flags
    /// non-exponential statistics.
    pub discrepancy: f64,
}

impl Default for IntervalFitOptions {
    fn default() -> Self {
        Self {
            min_count: 50,
            min_bin_entries: 5,
            quantum_s: None,
            discrepancy: 0.25,
        }
    }
}

pub const NON_EXPONENTIAL: &str = "non-exponential statistics";

/// Point at which the exponential density equals its bin average.
fn exp_center(lo: f64, width: f64, rate: f64) -> f64 {
    let rw = rate * width;
    if rw < 1e-8 {
        return lo + width / 2.0;
    }
    lo - ((1.0 - (-rw).exp()) / rw).ln() / rate
}

/// Decay rate of a duration list.
///
/// The primary value `rate` is minus the slope of a count-weighted line
/// through the log of the duration histogram; `rate_inverse_mean` is
/// 1/mean. When too few histogram bins are populated the inverse mean is
/// used as the primary value and the result is flagged.
pub fn fit_interval_rate(durations: &[f64], opts: &IntervalFitOptions) -> Result<FitResult> {
    let n = durations.len();
    if n < opts.min_count.max(2) {
        return Err(Error::InsufficientData(format!(
            "{n} durations, at least {} required",
            opts.min_count.max(2)
        )));
    }
    if durations.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(invalid("durations must be positive and finite"));
    }
    let mean = durations.iter().sum::<f64>() / n as f64;
    let inv_mean = 1.0 / mean;
    let inv_mean_err = inv_mean / (n as f64).sqrt();

    let max = durations.iter().cloned().fold(0.0, f64::max);
    let (edges, quantized) = match opts.quantum_s {
        Some(q) if q > 0.0 => {
            let k_max = (max / q).round() as usize;
            ((0..=k_max + 1).map(|k| (k as f64 + 0.5) * q).collect::<Vec<_>>(), true)
        }
        Some(q) => return Err(invalid(format!("duration quantum must be positive, got {q}"))),
        None => {
            // about 3 mean lifetimes resolved in ~20 bins, never fewer than 10
            let bins = ((n as f64).sqrt() as usize).clamp(10, 40);
            let hi = max.min(8.0 * mean);
            let w = hi / bins as f64;
            ((0..=bins).map(|i| i as f64 * w).collect(), false)
        }
    };
    let mut counts = vec![0u64; edges.len() - 1];
    for &d in durations {
        let i = edges.partition_point(|&e| e <= d);
        if i >= 1 && i < edges.len() {
            counts[i - 1] += 1;
        }
    }
    let used: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] >= opts.min_bin_entries).collect();

    let mut fr;
    if used.len() >= 3 {
        let y: Vec<f64> = used.iter().map(|&i| (counts[i] as f64).ln()).collect();
        let w: Vec<f64> = used.iter().map(|&i| counts[i] as f64).collect();
        let mut rate = inv_mean;
        let mut line = (0.0, 0.0, 0.0, 0.0);
        // for continuous bins the abscissa depends on the rate itself
        for _ in 0..if quantized { 1 } else { 5 } {
            let x: Vec<f64> = used
                .iter()
                .map(|&i| {
                    if quantized {
                        0.5 * (edges[i] + edges[i + 1])
                    } else {
                        exp_center(edges[i], edges[i + 1] - edges[i], rate.max(0.0))
                    }
                })
                .collect();
            line = weighted_line(&x, &y, &w, true)?;
            rate = -line.1;
        }
        fr = FitResult::new(Goodness::Rss(f64::NAN), rate > 0.0, n)
            .with("rate", rate, line.3, "Hz")
            .with("rate_inverse_mean", inv_mean, inv_mean_err, "Hz");
        if !(rate > 0.0) || ((rate - inv_mean) / inv_mean).abs() > opts.discrepancy {
            fr.note(NON_EXPONENTIAL);
        }
    } else {
        fr = FitResult::new(Goodness::Rss(f64::NAN), false, n)
            .with("rate", inv_mean, inv_mean_err, "Hz")
            .with("rate_inverse_mean", inv_mean, inv_mean_err, "Hz");
        fr.note(format!(
            "semilog fit impossible ({} bins with ≥ {} entries); rate is 1/mean",
            used.len(),
            opts.min_bin_entries
        ));
        fr.note(NON_EXPONENTIAL);
    }
    Ok(fr)
}

/// Fraction of ON bins over the whole trace. Biased by the threshold; the
/// photon-number mixture model is the unbiased alternative.
pub fn on_probability_threshold(record: &IntervalRecord) -> f64 {
    if record.total_bins == 0 {
        0.0
    } else {
        record.on_bins as f64 / record.total_bins as f64
    }
}

pub const THRESHOLD_BIASED: &str = "threshold-biased";

/// Contents of `rates.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub off_rate_hz: Option<f64>,
    pub off_rate_err_hz: Option<f64>,
    pub on_rate_hz: Option<f64>,
    pub on_rate_err_hz: Option<f64>,
    pub on_probability: f64,
    pub threshold_counts: f64,
    pub n_sigma: f64,
    pub bin_width_s: f64,
    pub n_on: usize,
    pub n_off: usize,
    pub flags: Vec<String>,
}

/// Off-rate from ON durations, on-rate from OFF durations, and the
/// threshold ON probability. Rates that cannot be estimated are `None`
/// with the reason in `flags`.
pub fn summarize_rates(record: &IntervalRecord, opts: &IntervalFitOptions) -> RateSummary {
    let mut flags = vec![THRESHOLD_BIASED.to_string()];
    let mut one = |label: &str, d: &[f64]| match fit_interval_rate(d, opts) {
        Ok(fr) => {
            flags.extend(fr.notes.iter().map(|n| format!("{label}: {n}")));
            (Some(fr.value("rate")), Some(fr.error("rate")))
        }
        Err(e) => {
            flags.push(format!("{label}: {e}"));
            (None, None)
        }
    };
    let (off, off_err) = one("off_rate", &record.on_durations);
    let (on, on_err) = one("on_rate", &record.off_durations);
    RateSummary {
        off_rate_hz: off,
        off_rate_err_hz: off_err,
        on_rate_hz: on,
        on_rate_err_hz: on_err,
        on_probability: on_probability_threshold(record),
        threshold_counts: record.threshold,
        n_sigma: record.n_sigma,
        bin_width_s: record.bin_width,
        n_on: record.on_durations.len(),
        n_off: record.off_durations.len(),
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Poisson};

    fn trace(counts: &[u64], bw: f64) -> BinnedTrace {
        BinnedTrace::new(bw, counts.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn direct_reading() {
        let r = classify_on_off(&trace(&[0, 9, 9, 0, 0, 9, 0], 1e-3), 0.0, 1.0, 3.0).unwrap();
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&r.on_durations, &[2e-3, 1e-3]));
        assert!(close(&r.off_durations, &[2e-3]));
        assert_eq!(r.on_bins, 3);
    }

    #[test]
    fn all_zero_trace_has_no_intervals() {
        let r = classify_on_off(&trace(&[0; 100], 1e-3), 0.0, 1.0, 3.0).unwrap();
        assert!(r.on_durations.is_empty() && r.off_durations.is_empty());
        assert_eq!(r.runs.len(), 1);
        assert!(r.runs[0].truncated);
    }

    #[test]
    fn short_trace_rejected() {
        assert!(classify_on_off(&trace(&[1, 2], 1.0), 0.0, 1.0, 3.0).is_err());
        assert!(classify_on_off(&trace(&[1, 2, 3], 1.0), 0.0, -1.0, 3.0).is_err());
    }

    fn exp_samples(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Exp::new(rate).unwrap();
        (0..n).map(|_| e.sample(&mut rng)).collect()
    }

    #[test]
    fn exponential_round_trip() {
        for (rate, seed) in [(85e3, 1), (63e3, 2)] {
            let d = exp_samples(rate, 10_000, seed);
            let fr = fit_interval_rate(&d, &IntervalFitOptions::default()).unwrap();
            assert!((fr.value("rate") / rate - 1.0).abs() < 0.05, "{}", fr.value("rate"));
            assert!(!fr.has_note(NON_EXPONENTIAL));
            // the two estimators agree within 10% at n ≥ 10³
            assert!((fr.value("rate") / fr.value("rate_inverse_mean") - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn quantized_durations() {
        // geometric run lengths in bins of 1 µs at 85 kHz
        let b = 1e-6;
        let d: Vec<f64> = exp_samples(85e3, 20_000, 3)
            .into_iter()
            .map(|x| ((x / b).floor() + 1.0) * b)
            .collect();
        let opts = IntervalFitOptions {
            quantum_s: Some(b),
            ..Default::default()
        };
        let fr = fit_interval_rate(&d, &opts).unwrap();
        assert!((fr.value("rate") / 85e3 - 1.0).abs() < 0.05, "{}", fr.value("rate"));
    }

    #[test]
    fn deterministic_durations_are_flagged() {
        let fr = fit_interval_rate(&[2e-3; 200], &IntervalFitOptions::default()).unwrap();
        assert!(fr.has_note(NON_EXPONENTIAL));
    }

    #[test]
    fn too_few_durations() {
        let r = fit_interval_rate(&[1.0; 49], &IntervalFitOptions::default());
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn all_on_probability_is_one() {
        let r = classify_on_off(&trace(&[50; 20], 1e-3), 1.0, 1.0, 3.0).unwrap();
        assert_eq!(on_probability_threshold(&r), 1.0);
    }

    #[test]
    fn background_false_positive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Poisson::new(100.0).unwrap();
        let counts: Vec<u64> = (0..200_000).map(|_| p.sample(&mut rng) as u64).collect();
        let t = trace(&counts, 1e-3);
        let (m, s) = mean_and_sd(&counts);
        let r = classify_on_off(&t, m, s, 3.0).unwrap();
        assert!(on_probability_threshold(&r) < 0.005);
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_on_time(
            counts in proptest::collection::vec(0u64..40, 3..200),
            mean in 0.0f64..10.0,
            sigma in 0.0f64..5.0,
            a in 0.0f64..6.0,
            da in 0.0f64..6.0,
        ) {
            let t = trace(&counts, 1e-3);
            let lo = classify_on_off(&t, mean, sigma, a).unwrap();
            let hi = classify_on_off(&t, mean, sigma, a + da).unwrap();
            prop_assert!(hi.on_bins <= lo.on_bins);
        }

        #[test]
        fn inverse_mean_is_scale_equivariant(seed in 0u64..1000, c in 0.01f64..100.0) {
            let d = exp_samples(1.0, 60, seed);
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let opts = IntervalFitOptions::default();
            let a = fit_interval_rate(&d, &opts).unwrap().value("rate_inverse_mean");
            let b = fit_interval_rate(&scaled, &opts).unwrap().value("rate_inverse_mean");
            prop_assert!((a / c / b - 1.0).abs() < 1e-12);
        }
    }
}
