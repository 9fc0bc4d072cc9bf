//! Saturation curve, the ON-period rate extraction feeding it, and the
//! quantum-efficiency bound derived from its ceiling.

use serde::{Deserialize, Serialize};

use super::{nlls_fit, weighted_line, ModelId, ModelSpec};
use crate::data::{mean_and_sd, FitResult};
use crate::error::{invalid, Error, Result};
use crate::sim::SaturationRecord;

/// Fits `I(P) = I∞·P/(P + P_sat)`. Rates in counts/s, powers in µW.
pub fn fit_saturation(powers: &[f64], rates: &[f64], errors: Option<&[f64]>) -> Result<FitResult> {
    if powers.len() != rates.len() {
        return Err(invalid("powers and rates differ in length"));
    }
    if powers.iter().any(|&p| !(p > 0.0)) {
        return Err(invalid("saturation powers must be positive"));
    }
    let spec = ModelSpec::new(ModelId::Saturation).units(&["c/s", "uW"]);
    let start = saturation_start(powers, rates);
    let mut fit = nlls_fit(&spec, powers, rates, errors, &start)?;
    let (i_inf, p_sat) = (fit.value("I_inf"), fit.value("P_sat"));
    let half = ModelId::Saturation.eval(p_sat, &[i_inf, p_sat]) / i_inf;
    fit.insert("I_at_P_sat_over_I_inf", half, 0.0, "");
    Ok(fit)
}

/// Start from the double-reciprocal line 1/I = 1/I∞ + (P_sat/I∞)/P,
/// falling back to crude bounds when it is ill-conditioned.
fn saturation_start(powers: &[f64], rates: &[f64]) -> [f64; 2] {
    let pts: Vec<(f64, f64)> = powers
        .iter()
        .zip(rates)
        .filter(|(_, &r)| r > 0.0)
        .map(|(&p, &r)| (1.0 / p, 1.0 / r))
        .collect();
    let ymax = rates.iter().cloned().fold(0.0, f64::max);
    let fallback = [2.0 * ymax.max(1.0), powers[powers.len() / 2]];
    if pts.len() < 3 {
        return fallback;
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    // relative noise on I → weight 1/(1/I)² on the reciprocal
    let w: Vec<f64> = y.iter().map(|v| 1.0 / (v * v)).collect();
    match weighted_line(&x, &y, &w, false) {
        Ok((a, b, _, _)) if a > 0.0 && b > 0.0 => [1.0 / a, b / a],
        _ => fallback,
    }
}

/// Per-power rates extracted from a saturation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoints {
    pub powers_uw: Vec<f64>,
    pub rates_cps: Vec<f64>,
    pub errors_cps: Vec<f64>,
    pub background_cps: f64,
    /// Fraction of bins classified ON at each power.
    pub on_fraction: Vec<f64>,
}

/// Mean rate of ON bins above `background + n_sigma·sd`, background
/// subtracted. Powers without any ON bin are dropped.
pub fn saturation_points(record: &SaturationRecord, n_sigma: f64) -> Result<SaturationPoints> {
    if record.background.is_empty() {
        return Err(Error::InsufficientData("saturation sweep has no background trace".into()));
    }
    let (bg_mean, bg_sd) = mean_and_sd(record.background.counts());
    let threshold = bg_mean + n_sigma * bg_sd;
    let mut out = SaturationPoints {
        powers_uw: Vec::new(),
        rates_cps: Vec::new(),
        errors_cps: Vec::new(),
        background_cps: bg_mean / record.background.bin_width(),
        on_fraction: Vec::new(),
    };
    for (&p, trace) in record.powers_uw.iter().zip(&record.traces) {
        let on: Vec<u64> = trace.counts().iter().copied().filter(|&c| c as f64 > threshold).collect();
        if on.is_empty() {
            continue;
        }
        let (m, sd) = mean_and_sd(&on);
        let bw = trace.bin_width();
        let se = if on.len() > 1 { sd / (on.len() as f64).sqrt() } else { m.sqrt() };
        out.powers_uw.push(p);
        out.rates_cps.push((m - bg_mean) / bw);
        out.errors_cps.push(se.max(1.0) / bw);
        out.on_fraction.push(on.len() as f64 / trace.len() as f64);
    }
    if out.powers_uw.len() < 3 {
        return Err(Error::InsufficientData(
            "fewer than 3 powers show emission above the background threshold".into(),
        ));
    }
    Ok(out)
}

pub const QE_FORMULA: &str = "QE >= 2*I_inf*tau/eta (saturated two-level ceiling Gamma_max/2)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeBound {
    pub value: f64,
    pub formula: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Lower bound on the quantum efficiency from the saturated detected rate
/// (Mc/s), the detection efficiency and the excited-state lifetime (ns).
pub fn qe_lower_bound(i_inf_mcps: f64, eta: f64, tau_ns: f64) -> Result<QeBound> {
    for (name, v) in [("I_inf", i_inf_mcps), ("eta", eta), ("tau", tau_ns)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let value = 2.0 * (i_inf_mcps * 1e6) * (tau_ns * 1e-9) / eta;
    let warning = (value > 1.0).then(|| {
        format!("bound {value:.3} exceeds 1: inputs are outside the two-level saturation model")
    });
    Ok(QeBound {
        value,
        formula: QE_FORMULA.into(),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BinnedTrace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn curve(p: f64) -> f64 {
        12.5e6 * p / (p + 7.6)
    }

    const POWERS: [f64; 12] = [1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 14.0, 20.0, 28.0, 36.0, 48.0, 60.0];

    #[test]
    fn noisy_curve_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rates: Vec<f64> = POWERS
            .iter()
            .map(|&p| curve(p) * (1.0 + 0.03 * Normal::new(0.0, 1.0).unwrap().sample(&mut rng)))
            .collect();
        let f = fit_saturation(&POWERS, &rates, None).unwrap();
        assert!((f.value("I_inf") / 12.5e6 - 1.0).abs() < 0.05);
        assert!((f.value("P_sat") / 7.6 - 1.0).abs() < 0.10);
        assert_eq!(f.value("I_at_P_sat_over_I_inf"), 0.5);
    }

    #[test]
    fn model_form_limits() {
        assert_eq!(ModelId::Saturation.eval(0.0, &[12.5e6, 7.6]), 0.0);
        assert_eq!(ModelId::Saturation.eval(7.6, &[12.5e6, 7.6]), 12.5e6 / 2.0);
    }

    #[test]
    fn scaling_rates_scales_only_the_ceiling() {
        let rates: Vec<f64> = POWERS.iter().map(|&p| curve(p)).collect();
        let base = fit_saturation(&POWERS, &rates, None).unwrap();
        for c in [0.01, 3.0, 250.0] {
            let scaled: Vec<f64> = rates.iter().map(|r| r * c).collect();
            let f = fit_saturation(&POWERS, &scaled, None).unwrap();
            assert!((f.value("I_inf") / (c * base.value("I_inf")) - 1.0).abs() < 1e-9);
            assert!((f.value("P_sat") / base.value("P_sat") - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn on_bins_above_background_give_the_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bw = 1e-3;
        let bg = 20.0;
        let draw = |lam: f64, rng: &mut ChaCha8Rng| Poisson::new(lam).unwrap().sample(rng) as u64;
        let background =
            BinnedTrace::new(bw, (0..5000).map(|_| draw(bg, &mut rng)).collect(), 0.0).unwrap();
        let powers = vec![2.0, 8.0, 30.0];
        let traces = powers
            .iter()
            .map(|&p| {
                // half the bins dark, half emitting at the curve's rate
                let lam = curve(p) * bw + bg;
                let counts = (0..4000)
                    .map(|i| if i % 2 == 0 { draw(bg, &mut rng) } else { draw(lam, &mut rng) })
                    .collect();
                BinnedTrace::new(bw, counts, 0.0).unwrap()
            })
            .collect();
        let rec = SaturationRecord {
            powers_uw: powers.clone(),
            traces,
            background,
        };
        let pts = saturation_points(&rec, 3.0).unwrap();
        for (i, &p) in powers.iter().enumerate() {
            assert!((pts.rates_cps[i] / curve(p) - 1.0).abs() < 0.01, "{p}: {}", pts.rates_cps[i]);
            assert!((pts.on_fraction[i] - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn qe_bound_examples() {
        let q = qe_lower_bound(12.5, 0.10, 1.26).unwrap();
        assert!((q.value - 0.315).abs() < 1e-12);
        assert!(q.warning.is_none());
        // a detected rate of η·Γ/2 saturates the bound
        let (eta, tau) = (0.1, 1.26);
        let i = eta / (2.0 * tau * 1e-9) / 1e6;
        assert!((qe_lower_bound(i, eta, tau).unwrap().value - 1.0).abs() < 1e-12);
        let half = qe_lower_bound(12.5, 0.20, 1.26).unwrap().value;
        assert!((half - 0.315 / 2.0).abs() < 1e-12);
        assert!(qe_lower_bound(40.0, 0.1, 1.26).unwrap().warning.is_some());
        assert!(qe_lower_bound(0.0, 0.1, 1.26).is_err());
    }
}
