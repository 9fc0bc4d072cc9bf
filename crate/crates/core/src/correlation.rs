//! Second-order autocorrelation of a photon time-tag stream.
//!
//! Every ordered pair with |Δt| inside the lag window is counted with a
//! sorted sliding window, O(n·k) for n tags and k tags per window. The
//! stream is cut into index chunks processed in parallel; a pair belongs to
//! the chunk holding its earlier tag, so each is counted exactly once.

use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FitResult, Goodness, TimeTagStream, TICKS_PER_NS};
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, ModelId, ModelSpec};

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    /// Bin centers in ns, symmetric about zero.
    pub lags_ns: Vec<f64>,
    pub values: Vec<f64>,
    pub raw: Vec<u64>,
    /// Accidental coincidences expected per bin, r²·T·Δτ.
    pub normalization: f64,
    pub bin_width_ns: f64,
}

impl G2Curve {
    /// Index of the zero-lag bin.
    pub fn center(&self) -> usize {
        self.lags_ns.len() / 2
    }

    pub fn zero_lag(&self) -> f64 {
        self.values[self.center()]
    }

    /// One-sigma Poisson error per bin. In the zero bin each unordered pair
    /// is counted twice, so its variance doubles.
    pub fn errors(&self) -> Vec<f64> {
        let c = self.center();
        self.raw
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let v = (r.max(1)) as f64 * if i == c { 2.0 } else { 1.0 };
                v.sqrt() / self.normalization
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "lag_ns,value,raw,error")?;
        for (((l, v), r), e) in self.lags_ns.iter().zip(&self.values).zip(&self.raw).zip(self.errors()) {
            writeln!(w, "{l:.6},{v:.6e},{r},{e:.6e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Histogram of tag-pair separations, normalized to the Poisson level.
///
/// Bin k is centered at k·Δτ and holds pairs with (k − ½)·Δτ ≤ |Δt| <
/// (k + ½)·Δτ; positive and negative lags are filled from the same pairs,
/// so the curve is exactly symmetric.
pub fn g2_histogram(stream: &TimeTagStream, max_lag_ns: f64, bin_width_ns: f64) -> Result<G2Curve> {
    if !(bin_width_ns > 0.0 && bin_width_ns.is_finite()) {
        return Err(invalid("g² bin width must be positive"));
    }
    if !(max_lag_ns >= 10.0 * bin_width_ns) {
        return Err(invalid("max lag must span at least 10 bins"));
    }
    if stream.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "g² needs at least two tags, stream has {}",
            stream.len()
        )));
    }
    let bw = (bin_width_ns * TICKS_PER_NS as f64).round() as u64;
    if bw == 0 {
        return Err(invalid("g² bin width is below the time-tag resolution"));
    }
    let k_max = (max_lag_ns / bin_width_ns).floor() as usize;
    // pairs with 2Δ + bw < (2k_max + 2)·bw land in bins 0..=k_max
    let limit2 = (2 * k_max as u64 + 2) * bw;
    let tags = stream.timestamps();
    let n = tags.len();

    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let half = starts
        .par_iter()
        .map(|&lo| {
            let hi = (lo + CHUNK).min(n);
            let mut h = vec![0u64; k_max + 1];
            for i in lo..hi {
                let ti = tags[i];
                for &tj in &tags[i + 1..] {
                    let v = 2 * (tj - ti) + bw;
                    if v >= limit2 {
                        break;
                    }
                    h[(v / (2 * bw)) as usize] += 1;
                }
            }
            h
        })
        .reduce(
            || vec![0u64; k_max + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let len = 2 * k_max + 1;
    let mut raw = vec![0u64; len];
    for (k, &c) in half.iter().enumerate() {
        raw[k_max + k] += c;
        raw[k_max - k] += c;
    }
    let t = stream.duration_s();
    let dtau = bw as f64 / crate::data::TICKS_PER_SECOND;
    let normalization = (n as f64).powi(2) * dtau / t;
    let width_ns = bw as f64 / TICKS_PER_NS as f64;
    Ok(G2Curve {
        lags_ns: (0..len).map(|i| (i as f64 - k_max as f64) * width_ns).collect(),
        values: raw.iter().map(|&r| r as f64 / normalization).collect(),
        raw,
        normalization,
        bin_width_ns: width_ns,
    })
}

/// Sums groups of `factor` bins outward from zero; the zero bin stays
/// centered by merging symmetric groups.
pub fn rebin(curve: &G2Curve, factor: usize) -> Result<G2Curve> {
    if factor == 0 || factor.is_multiple_of(2) {
        return Err(invalid("rebin factor must be odd so that zero stays centered"));
    }
    let c = curve.center() as i64;
    let h = (factor / 2) as i64;
    let k_new = (c - h) / factor as i64;
    let mut raw = Vec::new();
    let mut lags = Vec::new();
    for k in -k_new..=k_new {
        let mid = c + k * factor as i64;
        let sum: u64 = (mid - h..=mid + h).map(|i| curve.raw[i as usize]).sum();
        raw.push(sum);
        lags.push(k as f64 * factor as f64 * curve.bin_width_ns);
    }
    let normalization = curve.normalization * factor as f64;
    Ok(G2Curve {
        values: raw.iter().map(|&r| r as f64 / normalization).collect(),
        lags_ns: lags,
        raw,
        normalization,
        bin_width_ns: curve.bin_width_ns * factor as f64,
    })
}

/// Antibunching fit, and optionally the fit with a bunching shoulder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub antibunching: FitResult,
    pub bunching: Option<FitResult>,
}

fn start_values(curve: &G2Curve) -> (f64, f64) {
    let c = curve.center();
    let g0 = curve.values[c].clamp(0.0, 0.99);
    let target = 0.5 * (1.0 + g0);
    let tau = curve.values[c..]
        .iter()
        .position(|&v| v >= target)
        .filter(|&i| i > 0)
        .map_or(5.0 * curve.bin_width_ns, |i| {
            (i as f64 * curve.bin_width_ns / std::f64::consts::LN_2).max(curve.bin_width_ns)
        });
    (g0, tau)
}

fn unidentified(curve: &G2Curve, reason: &str) -> FitResult {
    let mut fr = FitResult::new(Goodness::Rss(f64::NAN), false, curve.values.len())
        .with("g0", curve.zero_lag(), f64::NAN, "")
        .with("tau_a", f64::NAN, f64::NAN, "ns");
    fr.note(format!("tau_a unidentifiable: {reason}"));
    fr
}

/// Fits g²(t) = 1 − (1 − g0)·e^{−|t|/τ_a}, and with `bunching` also
/// g²(t) = 1 − (1 − g0)·e^{−|t|/τ_a} + A_b·e^{−|t|/τ_b}.
pub fn fit_g2(curve: &G2Curve, bunching: bool) -> Result<G2Fit> {
    let n = curve.values.len();
    if n < 7 {
        return Err(Error::InsufficientData("g² curve has too few bins".into()));
    }
    let errors = curve.errors();
    let (g0, tau) = start_values(curve);
    let max_lag = curve.lags_ns[n - 1];
    let spec = ModelSpec::new(ModelId::G2Antibunching).units(&["", "ns"]);
    let antibunching = match levenberg_marquardt(&spec, &curve.lags_ns, &curve.values, Some(&errors), &[g0, tau]) {
        Ok(sol) => {
            let mut fr = crate::fit::package_solution(&spec, &sol, n);
            let depth = 1.0 - sol.params[0];
            if depth.abs() < 3.0 * sol.errors[0] {
                fr.note("no significant antibunching dip; tau_a unidentifiable");
            } else if 5.0 * sol.params[1] > max_lag {
                fr.note("lag window shorter than 5 tau_a");
            }
            fr
        }
        Err(Error::FitFailed(msg)) => unidentified(curve, &msg),
        Err(e) => return Err(e),
    };
    let bunching = if bunching {
        let spec = ModelSpec::new(ModelId::G2Bunching).units(&["", "ns", "", "ns"]);
        let ab = (curve.values[curve.center() + (n / 2) / 3] - 1.0).max(0.01);
        let start = [g0, tau, ab, (max_lag / 4.0).max(10.0 * tau)];
        Some(
            match levenberg_marquardt(&spec, &curve.lags_ns, &curve.values, Some(&errors), &start) {
                Ok(sol) => crate::fit::package_solution(&spec, &sol, n),
                Err(Error::FitFailed(msg)) => {
                    let mut fr = FitResult::new(Goodness::Rss(f64::NAN), false, n);
                    fr.note(format!("bunching fit failed: {msg}"));
                    fr
                }
                Err(e) => return Err(e),
            },
        )
    } else {
        None
    };
    Ok(G2Fit {
        antibunching,
        bunching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::background_tags;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poisson_stream(rate: f64, duration: f64, seed: u64) -> TimeTagStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tags = background_tags(rate, duration, &mut rng);
        TimeTagStream::new(tags, (duration * 1e12) as u64, 0).unwrap()
    }

    /// Brute-force O(n²) reference.
    fn naive(tags: &[u64], k_max: i64, bw: u64) -> Vec<u64> {
        let mut h = vec![0u64; (2 * k_max + 1) as usize];
        for (i, &a) in tags.iter().enumerate() {
            for (j, &b) in tags.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = b as i64 - a as i64;
                let k = (2 * d.abs() + bw as i64) / (2 * bw as i64);
                if k <= k_max {
                    let idx = if d >= 0 { k_max + k } else { k_max - k };
                    h[idx as usize] += 1;
                }
            }
        }
        h
    }

    #[test]
    fn matches_brute_force() {
        let s = poisson_stream(2e6, 2e-3, 9);
        let c = g2_histogram(&s, 50.0, 1.5).unwrap();
        assert_eq!(c.raw, naive(s.timestamps(), 33, 1500));
    }

    #[test]
    fn rejects_tiny_streams_and_bad_args() {
        let s = TimeTagStream::new(vec![5], 100, 0).unwrap();
        assert!(matches!(g2_histogram(&s, 10.0, 1.0), Err(Error::InsufficientData(_))));
        let s = TimeTagStream::new(vec![5, 9], 100, 0).unwrap();
        assert!(g2_histogram(&s, 5.0, 1.0).is_err());
        assert!(g2_histogram(&s, 10.0, 0.0).is_err());
    }

    #[test]
    fn poisson_stream_is_flat() {
        let s = poisson_stream(1e6, 1.0, 4);
        assert!(s.len() > 900_000);
        let c = g2_histogram(&s, 200.0, 4.0).unwrap();
        for (l, v) in c.lags_ns.iter().zip(&c.values) {
            assert!((v - 1.0).abs() < 0.05, "lag {l}: {v}");
        }
        let mean = c.values.iter().sum::<f64>() / c.values.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
    }

    #[test]
    fn rebin_preserves_pairs() {
        let s = poisson_stream(1e6, 0.05, 2);
        let c = g2_histogram(&s, 100.0, 1.0).unwrap();
        let r = rebin(&c, 5).unwrap();
        assert_eq!(r.lags_ns.len() % 2, 1);
        assert_eq!(r.raw[r.center()], c.raw[98..=102].iter().sum::<u64>());
        assert!(rebin(&c, 4).is_err());
    }

    #[test]
    fn synthetic_curve_fit() {
        let lags: Vec<f64> = (-100..=100).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = lags.iter().map(|&t| 1.0 - (-t.abs() / 1.26).exp()).collect();
        let norm = 1e4;
        let curve = G2Curve {
            raw: values.iter().map(|v| (v * norm).round() as u64).collect(),
            values,
            lags_ns: lags,
            normalization: norm,
            bin_width_ns: 0.1,
        };
        let f = fit_g2(&curve, false).unwrap();
        assert!((f.antibunching.value("tau_a") / 1.26 - 1.0).abs() < 0.05);
        assert!(f.antibunching.value("g0").abs() < 0.05);
    }

    #[test]
    fn flat_curve_is_flagged() {
        let s = poisson_stream(1e6, 0.2, 8);
        let c = g2_histogram(&s, 50.0, 1.0).unwrap();
        let f = fit_g2(&c, false).unwrap();
        assert!((f.antibunching.value("g0") - 1.0).abs() < 0.1);
        assert!(f.antibunching.has_note("unidentifiable"));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn exactly_symmetric(seed in 0u64..10_000, bw in 1u32..20) {
            let s = poisson_stream(5e6, 1e-3, seed);
            let c = g2_histogram(&s, 10.0 * bw as f64 * 0.5, bw as f64 * 0.5).unwrap();
            let n = c.values.len();
            for i in 0..n {
                proptest::prop_assert_eq!(c.values[i], c.values[n - 1 - i]);
                proptest::prop_assert_eq!(c.lags_ns[i], -c.lags_ns[n - 1 - i]);
            }
        }
    }
}
