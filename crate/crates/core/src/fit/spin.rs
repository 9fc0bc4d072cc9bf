//! Metastable-state spectroscopy: pump–probe recovery and ODMR.

use serde::{Deserialize, Serialize};

use super::{nlls_fit, weighted_line, ModelId, ModelSpec};
use crate::data::FitResult;
use crate::error::{invalid, Error, Result};
use crate::sim::PumpProbeRecord;

pub const NON_MONOTONE: &str = "amplitude trend is non-monotone beyond noise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpProbeFit {
    pub t1_s: f64,
    pub t1_err_s: f64,
    /// (early − steady)/early of the longest-delay transient.
    pub contrast: f64,
    pub contrast_err: f64,
    /// Readout relaxation time shared by all transients.
    pub readout_tau_s: f64,
    pub delays_s: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub amplitude_errors: Vec<f64>,
    pub steady: Vec<f64>,
    pub contrasts: Vec<f64>,
    /// Amplitude-vs-delay recovery fit.
    pub recovery: FitResult,
}

/// Per-delay readout transients → recovery time T1 and contrast.
///
/// The longest-delay transient fixes the readout relaxation time; every
/// transient is then a linear fit of steady level plus excess amplitude,
/// and the amplitudes are fitted to A·(1 − e^{−τ/T1}).
pub fn fit_pump_probe(record: &PumpProbeRecord) -> Result<PumpProbeFit> {
    let delays = &record.delays_s;
    if delays.len() < 5 || record.transients.len() != delays.len() {
        return Err(Error::InsufficientData("pump–probe needs at least 5 delays".into()));
    }
    let pos: Vec<f64> = delays.iter().copied().filter(|&d| d > 0.0).collect();
    let (dmin, dmax) = pos
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(dmax >= 1e3 * dmin) {
        return Err(invalid("pump–probe delays must span at least three decades"));
    }
    let t = record.times();
    if t.len() < 6 {
        return Err(Error::InsufficientData("readout transients have fewer than 6 bins".into()));
    }
    let ilong = (0..delays.len()).max_by(|&a, &b| delays[a].total_cmp(&delays[b])).unwrap();
    let tau_r = readout_tau(&t, &record.transients[ilong])?;

    let x: Vec<f64> = t.iter().map(|&ti| (-ti / tau_r).exp()).collect();
    let mut amps = Vec::with_capacity(delays.len());
    let mut amp_errs = Vec::with_capacity(delays.len());
    let mut steady = Vec::with_capacity(delays.len());
    let mut contrasts = Vec::with_capacity(delays.len());
    let mut contrast_errs = Vec::with_capacity(delays.len());
    for tr in &record.transients {
        let y: Vec<f64> = tr.iter().map(|&c| c as f64).collect();
        let w: Vec<f64> = y.iter().map(|&c| 1.0 / c.max(1.0)).collect();
        let (s, a, se_s, se_a) = weighted_line(&x, &y, &w, true)?;
        let early = s + a;
        amps.push(a);
        amp_errs.push(se_a);
        steady.push(s);
        contrasts.push(a / early);
        // ∂c/∂a = s/early², ∂c/∂s = −a/early²; the two are nearly
        // independent for a well-sampled tail
        contrast_errs.push((s * se_a).hypot(a * se_s) / (early * early));
    }

    let a_max = amps.iter().cloned().fold(0.0, f64::max);
    let t1_0 = crossing(delays, &amps, (1.0 - (-1.0f64).exp()) * a_max).unwrap_or(pos[pos.len() / 2]);
    let spec = ModelSpec::new(ModelId::ExpRecovery).units(&["counts", "s"]);
    let errs: Vec<f64> = amp_errs.iter().map(|e| e.max(1e-12)).collect();
    let mut recovery = nlls_fit(&spec, delays, &amps, Some(&errs), &[a_max.max(1.0), t1_0])?;

    let mut order: Vec<usize> = (0..delays.len()).collect();
    order.sort_by(|&a, &b| delays[a].total_cmp(&delays[b]));
    let mut best = 0usize;
    for (k, &i) in order.iter().enumerate().skip(1) {
        let j = order[best];
        if amps[i] < amps[j] - 3.0 * amp_errs[i].hypot(amp_errs[j]) {
            recovery.note(NON_MONOTONE);
            break;
        }
        if amps[i] > amps[j] {
            best = k;
        }
    }

    Ok(PumpProbeFit {
        t1_s: recovery.value("t1"),
        t1_err_s: recovery.error("t1"),
        contrast: contrasts[ilong],
        contrast_err: contrast_errs[ilong],
        readout_tau_s: tau_r,
        delays_s: delays.clone(),
        amplitudes: amps,
        amplitude_errors: amp_errs,
        steady,
        contrasts,
        recovery,
    })
}

fn readout_tau(t: &[f64], counts: &[u64]) -> Result<f64> {
    let y: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let err: Vec<f64> = y.iter().map(|&c| c.max(1.0).sqrt()).collect();
    let tail = &y[y.len() * 4 / 5..];
    let offset = tail.iter().sum::<f64>() / tail.len() as f64;
    let amp = y[0] - offset;
    let tau0 = crossing(t, &y.iter().map(|v| y[0] - v).collect::<Vec<_>>(), (1.0 - (-1.0f64).exp()) * amp)
        .unwrap_or(t[t.len() - 1] / 10.0);
    let spec = ModelSpec::new(ModelId::ExpDecay);
    let fit = nlls_fit(&spec, t, &y, Some(&err), &[offset, amp, tau0.max(t[0])])
        .map_err(|e| Error::FitFailed(format!("readout transient: {e}")))?;
    let tau = fit.value("tau");
    if !(fit.value("amplitude") > 0.0) || !(tau < t[t.len() - 1]) {
        return Err(Error::FitFailed(
            "longest-delay transient shows no decay within the readout window".into(),
        ));
    }
    Ok(tau)
}

/// First abscissa (in ascending x) where `y` reaches `level`, linearly
/// interpolated.
fn crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    idx.windows(2).find_map(|w| {
        let (i, j) = (w[0], w[1]);
        (y[i] < level && y[j] >= level).then(|| x[i] + (level - y[i]) / (y[j] - y[i]) * (x[j] - x[i]))
    })
}

pub const CONTRAST_ZERO: &str = "contrast consistent with zero";

/// Signed Lorentzian on a flat baseline; adds `f0`, `contrast_peak` and
/// aliases to the raw parameters.
pub fn fit_odmr(freqs_ghz: &[f64], contrast: &[f64], errors: Option<&[f64]>) -> Result<FitResult> {
    if freqs_ghz.len() != contrast.len() {
        return Err(invalid("frequencies and contrast differ in length"));
    }
    if freqs_ghz.len() < 5 {
        return Err(Error::InsufficientData("ODMR sweep needs at least 5 frequencies".into()));
    }
    let mut sorted = contrast.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = sorted[sorted.len() / 2];
    let k = (0..contrast.len())
        .max_by(|&a, &b| (contrast[a] - base).abs().total_cmp(&(contrast[b] - base).abs()))
        .unwrap();
    let (lo, hi) = freqs_ghz
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &f| (l.min(f), h.max(f)));
    let span = hi - lo;
    // a line narrower than two frequency steps is not resolved by the sweep
    let step = span / (freqs_ghz.len() - 1) as f64;
    let spec = ModelSpec::new(ModelId::LorentzianDip)
        .units(&["", "", "GHz", "GHz"])
        .bound("fwhm", 2.0 * step, f64::INFINITY);
    let start = [base, contrast[k] - base, freqs_ghz[k], (span / 10.0).max(4.0 * step)];
    let mut fit = nlls_fit(&spec, freqs_ghz, contrast, errors, &start)?;
    let (a, ae) = (fit.value("amplitude"), fit.error("amplitude"));
    let (c, ce) = (fit.value("center"), fit.error("center"));
    fit.insert("f0", c, ce, "GHz");
    fit.insert("contrast_peak", a, ae, "");
    if !(a.abs() > 3.0 * ae) {
        fit.note(CONTRAST_ZERO);
    }
    if span < 3.0 * fit.value("fwhm") {
        fit.note("sweep spans less than 3 line widths");
    }
    Ok(fit)
}
