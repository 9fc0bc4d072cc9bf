//! Gaussian envelopes of histogrammed positions (PLE peak positions, ZPL
//! centers) and the per-scan peak finder feeding them.

use statrs::distribution::{DiscreteCDF, Poisson};

use super::{nlls_fit, ModelId, ModelSpec};
use crate::data::{FitResult, Histogram};
use crate::error::{Error, Result};
use crate::sim::{PleRecord, FWHM_PER_SIGMA};

const IRLS_ROUNDS: usize = 20;

pub const SIGMA_UNRESOLVED: &str = "sigma below half a bin width: distribution unresolved";

/// Gaussian fit of a histogram; reports `center`, `sigma`, `fwhm` and
/// `two_sigma` besides the raw model parameters. The offset is pinned at 0.
///
/// Bin errors are taken from the fitted model and the fit is repeated until
/// they settle, which solves the Poisson likelihood equations; errors from
/// the observed counts would pull sparse histograms toward a narrow peak.
pub fn fit_gaussian_histogram(hist: &Histogram) -> Result<FitResult> {
    if hist.occupied_bins() < 5 {
        return Err(Error::InsufficientData(format!(
            "Gaussian envelope needs 5 occupied bins, histogram has {}",
            hist.occupied_bins()
        )));
    }
    let x = hist.centers();
    let y: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let err: Vec<f64> = y.iter().map(|&c| c.max(1.0).sqrt()).collect();
    let total: f64 = y.iter().sum();
    let mean = x.iter().zip(&y).map(|(x, y)| x * y).sum::<f64>() / total;
    let var = x.iter().zip(&y).map(|(x, y)| y * (x - mean).powi(2)).sum::<f64>() / total;
    let min_width = hist.widths().into_iter().fold(f64::INFINITY, f64::min);
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let start = [peak, mean, var.sqrt().max(0.5 * min_width), 0.0];
    let spec = ModelSpec::new(ModelId::Gaussian).fix("offset", 0.0);
    let mut fit = nlls_fit(&spec, &x, &y, Some(&err), &start)?;
    let floor = 1e-6 * peak;
    for _ in 0..IRLS_ROUNDS {
        let p = [fit.value("amplitude"), fit.value("center"), fit.value("sigma"), 0.0];
        let err: Vec<f64> = x.iter().map(|&xi| ModelId::Gaussian.eval(xi, &p).max(floor).sqrt()).collect();
        let next = nlls_fit(&spec, &x, &y, Some(&err), &p[..])?;
        let shift = (next.value("sigma") / fit.value("sigma") - 1.0).abs()
            + (next.value("center") - fit.value("center")).abs() / fit.value("sigma");
        fit = next;
        if shift < 1e-8 {
            break;
        }
    }
    let (s, se) = (fit.value("sigma"), fit.error("sigma"));
    fit.insert("fwhm", FWHM_PER_SIGMA * s, FWHM_PER_SIGMA * se, "");
    fit.insert("two_sigma", 2.0 * s, 2.0 * se, "");
    if s < 0.5 * min_width {
        fit.note(SIGMA_UNRESOLVED);
    }
    Ok(fit)
}

/// Line-center estimate for every PLE scan whose maximum is improbable as a
/// Poisson fluctuation of the scan's median, with `false_alarm` the allowed
/// chance per scan. Returns the positions (GHz) and the number of scans
/// without a detectable line.
pub fn ple_peak_positions(record: &PleRecord, false_alarm: f64) -> (Vec<f64>, usize) {
    let x = &record.detunings_ghz;
    let mut positions = Vec::with_capacity(record.counts.len());
    let mut missed = 0;
    for scan in &record.counts {
        match scan_peak(x, scan, false_alarm) {
            Some(p) => positions.push(p),
            None => missed += 1,
        }
    }
    (positions, missed)
}

/// Baseline-subtracted centroid over the contiguous region around the
/// maximum that stays above half its height.
fn scan_peak(x: &[f64], counts: &[u64], false_alarm: f64) -> Option<f64> {
    if counts.len() < 3 {
        return None;
    }
    let mut sorted: Vec<u64> = counts.to_vec();
    sorted.sort_unstable();
    let base = sorted[sorted.len() / 2] as f64;
    let (imax, &cmax) = counts.iter().enumerate().max_by_key(|(_, &c)| c)?;
    let height = cmax as f64 - base;
    let tail = if cmax == 0 {
        1.0
    } else {
        Poisson::new(base.max(0.5)).ok()?.sf(cmax - 1)
    };
    if tail * counts.len() as f64 > false_alarm {
        return None;
    }
    let half = base + 0.5 * height;
    let mut lo = imax;
    while lo > 0 && counts[lo - 1] as f64 > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < counts.len() && counts[hi + 1] as f64 > half {
        hi += 1;
    }
    // widen by one point on each side so a single-point line still averages
    let (lo, hi) = (lo.saturating_sub(1), (hi + 1).min(counts.len() - 1));
    let (mut sw, mut swx) = (0.0, 0.0);
    for i in lo..=hi {
        let w = (counts[i] as f64 - base).max(0.0);
        sw += w;
        swx += w * x[i];
    }
    (sw > 0.0).then(|| swx / sw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{linear_edges, make_histogram};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    fn normal_sample(seed: u64, mu: f64, sigma: f64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn ple_positions_give_inhomogeneous_width() {
        // 2000 positions: the sampling spread of the fitted width is ~2%
        let v = normal_sample(5, 0.0, 18.7, 2000);
        let h = make_histogram(&v, &linear_edges(-80.0, 80.0, 40)).unwrap();
        let f = fit_gaussian_histogram(&h).unwrap();
        assert!((f.value("fwhm") - 44.0).abs() < 3.0, "{}", f.value("fwhm"));
        assert!(f.value("center").abs() < 2.0);
    }

    #[test]
    fn zpl_centers_give_two_sigma() {
        let v = normal_sample(8, 585.1, 0.19, 2000);
        let h = make_histogram(&v, &linear_edges(584.3, 585.9, 32)).unwrap();
        let f = fit_gaussian_histogram(&h).unwrap();
        assert!((f.value("two_sigma") - 0.38).abs() < 0.04);
        assert!((f.value("fwhm") / f.value("sigma") - 2.3548).abs() < 1e-3);
    }

    #[test]
    fn delta_like_is_flagged() {
        let mut v = vec![0.0; 1000];
        v.extend([-3.0, -2.0, 2.0, 3.0]);
        let h = make_histogram(&v, &linear_edges(-5.0, 5.0, 10)).unwrap();
        let f = fit_gaussian_histogram(&h).unwrap();
        assert!(f.has_note(SIGMA_UNRESOLVED));
    }

    #[test]
    fn too_few_bins() {
        let h = make_histogram(&[0.1, 0.2, 1.5], &linear_edges(0.0, 4.0, 4)).unwrap();
        assert!(matches!(fit_gaussian_histogram(&h), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn scan_peak_finds_lorentzian_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..641).map(|i| -80.0 + 0.25 * i as f64).collect();
        let centers = [-31.3, 0.0, 12.6, 57.9];
        let mut counts: Vec<Vec<u64>> = centers
            .iter()
            .map(|&c| {
                x.iter()
                    .map(|&d| {
                        let lam = 2.0 + 200.0 / (1.0 + ((d - c) / 0.25).powi(2));
                        Poisson::new(lam).unwrap().sample(&mut rng) as u64
                    })
                    .collect()
            })
            .collect();
        counts.push(x.iter().map(|_| Poisson::new(2.0).unwrap().sample(&mut rng) as u64).collect());
        let rec = PleRecord {
            detunings_ghz: x,
            dwell_s: 1e-4,
            counts,
        };
        let (pos, missed) = ple_peak_positions(&rec, 1e-3);
        assert_eq!(missed, 1);
        for (p, c) in pos.iter().zip(centers) {
            assert!((p - c).abs() < 0.1, "{p} vs {c}");
        }
    }
}
