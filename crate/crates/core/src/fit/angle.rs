//! 180°-periodic modulation versus a field or polarization angle.

use nalgebra::{Matrix3, Vector3};

use super::{nlls_fit, ModelId, ModelSpec};
use crate::data::{FitResult, Goodness};
use crate::error::{invalid, Error, Result};

pub const EXTREMA_UNIDENTIFIABLE: &str = "amplitude consistent with zero; extrema unidentifiable";

/// Fits `m + a·cos(2(θ − θ₀))` and reports `mean`, `amplitude` (≥ 0),
/// `theta_max` and `theta_min` in [0°, 180°).
pub fn fit_sinusoid_180(angles_deg: &[f64], values: &[f64], errors: Option<&[f64]>) -> Result<FitResult> {
    if angles_deg.len() != values.len() {
        return Err(invalid("angles and values differ in length"));
    }
    if angles_deg.len() < 4 {
        return Err(Error::InsufficientData("a sinusoid fit needs at least 4 angles".into()));
    }
    let (lo, hi) = angles_deg
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| (l.min(a), h.max(a)));
    if hi - lo < 180.0 - 1e-9 {
        return Err(invalid(format!("angles span {:.1}°, need 180°", hi - lo)));
    }
    // the model is linear in (m, a·cos 2θ₀, a·sin 2θ₀)
    let w: Vec<f64> = match errors {
        Some(e) => e.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; values.len()],
    };
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for ((&th, &y), &wi) in angles_deg.iter().zip(values).zip(&w) {
        let r = (2.0 * th).to_radians();
        let row = Vector3::new(1.0, r.cos(), r.sin());
        ata += wi * row * row.transpose();
        aty += wi * y * row;
    }
    let lin = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::FitFailed("angles do not determine a 180° sinusoid".into()))?;
    let (m, c, s) = (lin[0], lin[1], lin[2]);
    let a = c.hypot(s);
    let theta0 = 0.5 * s.atan2(c).to_degrees();
    let scale = m.abs().max(values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))).max(f64::MIN_POSITIVE);

    let spec = ModelSpec::new(ModelId::Sinusoid180).units(&["", "", "deg"]);
    let mut fit = if a > 1e-9 * scale {
        match nlls_fit(&spec, angles_deg, values, errors, &[m, a, theta0]) {
            Ok(f) => f,
            Err(_) => null_fit(m, angles_deg.len()),
        }
    } else {
        null_fit(m, angles_deg.len())
    };
    let (mut amp, mut th0) = (fit.value("amplitude"), fit.value("theta0"));
    if amp < 0.0 {
        amp = -amp;
        th0 += 90.0;
    }
    let amp_err = fit.error("amplitude");
    let th_err = fit.error("theta0");
    fit.insert("amplitude", amp, amp_err, "");
    fit.insert("theta0", th0.rem_euclid(180.0), th_err, "deg");
    fit.insert("theta_max", th0.rem_euclid(180.0), th_err, "deg");
    fit.insert("theta_min", (th0 + 90.0).rem_euclid(180.0), th_err, "deg");
    if !(amp > 3.0 * amp_err) || amp <= 1e-9 * scale {
        fit.note(EXTREMA_UNIDENTIFIABLE);
    }
    Ok(fit)
}

fn null_fit(mean: f64, n: usize) -> FitResult {
    FitResult::new(Goodness::Rss(f64::NAN), true, n)
        .with("mean", mean, f64::NAN, "")
        .with("amplitude", 0.0, f64::NAN, "")
        .with("theta0", f64::NAN, f64::NAN, "deg")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn angles() -> Vec<f64> {
        (0..19).map(|i| 10.0 * i as f64).collect()
    }

    fn curve(th: f64, m: f64, a: f64) -> f64 {
        // maximum at 140°, minimum at 50°
        m + a * (2.0 * (th - 140.0)).to_radians().cos()
    }

    #[test]
    fn exact_extrema() {
        let y: Vec<f64> = angles().iter().map(|&t| curve(t, 100.0, 20.0)).collect();
        let f = fit_sinusoid_180(&angles(), &y, None).unwrap();
        assert!((f.value("theta_max") - 140.0).abs() < 1.0);
        assert!((f.value("theta_min") - 50.0).abs() < 1.0);
        assert!((f.value("amplitude") - 20.0).abs() < 1e-6);
        assert!(!f.has_note(EXTREMA_UNIDENTIFIABLE));
    }

    #[test]
    fn constant_data_is_unidentifiable() {
        let f = fit_sinusoid_180(&angles(), &[7.0; 19], None).unwrap();
        assert!(f.value("amplitude").abs() < 1e-9);
        assert!(f.has_note(EXTREMA_UNIDENTIFIABLE));
    }

    #[test]
    fn short_span_rejected() {
        let a: Vec<f64> = (0..10).map(|i| 10.0 * i as f64).collect();
        assert!(fit_sinusoid_180(&a, &[1.0; 10], None).is_err());
    }

    proptest! {
        #[test]
        fn extrema_invariant_under_offset(
            th in 0.0f64..180.0,
            a in 1.0f64..50.0,
            shift in -1e4f64..1e4,
            noise in proptest::collection::vec(-0.5f64..0.5, 19),
        ) {
            let y: Vec<f64> = angles()
                .iter()
                .zip(&noise)
                .map(|(&t, n)| 200.0 + a * (2.0 * (t - th)).to_radians().cos() + n)
                .collect();
            let ys: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let f0 = fit_sinusoid_180(&angles(), &y, None).unwrap();
            let f1 = fit_sinusoid_180(&angles(), &ys, None).unwrap();
            let d = (f0.value("theta_max") - f1.value("theta_max")).rem_euclid(180.0);
            prop_assert!(d.min(180.0 - d) < 1e-6);
            prop_assert!((f0.value("amplitude") - f1.value("amplitude")).abs() < 1e-6 * a);
        }
    }
}
