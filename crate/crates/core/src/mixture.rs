//! Photon-number histogram model: a background Poissonian plus a weighted
//! continuum of emitter Poissonians on a λ grid, fitted by multinomial
//! maximum likelihood, with BIC selection of λ_max.

use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::data::{Estimate, FitResult, Goodness, Histogram};
use crate::error::{invalid, Error, Result};

/// Shape of the emitter weight function p(λ′) before the e^{−γλ′} factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Uniform,
    /// Gaussian detuning pushed through a Lorentzian line:
    /// λ′ = λ_max/(1 + x²) with x ~ N(0, width_ratio), where width_ratio is
    /// the detuning spread in units of the line half-width.
    LorentzianPushforward { width_ratio: f64 },
}

pub const DEFAULT_J: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub p_e: f64,
    pub lambda_b: f64,
    pub gamma: f64,
    pub lambda_max: f64,
    pub j: usize,
    pub weight_mode: WeightMode,
}

impl MixtureParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_e) {
            return Err(invalid(format!("p_e = {} outside [0, 1]", self.p_e)));
        }
        if !(self.lambda_b > 0.0 && self.lambda_b.is_finite()) {
            return Err(invalid("lambda_b must be positive"));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(invalid("lambda_max must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be non-negative"));
        }
        if self.j < 2 {
            return Err(invalid("J must be at least 2"));
        }
        if let WeightMode::LorentzianPushforward { width_ratio } = self.weight_mode {
            if !(width_ratio > 0.0 && width_ratio.is_finite()) {
                return Err(invalid("width_ratio must be positive"));
            }
        }
        Ok(())
    }

    /// Cell midpoints λ_j of the uniform grid on (0, λ_max] and the
    /// normalized cell masses w_j of p(λ′)·e^{−γλ′}.
    pub fn grid(&self) -> (Vec<f64>, Vec<f64>) {
        let j = self.j;
        let d = self.lambda_max / j as f64;
        let lambdas: Vec<f64> = (0..j).map(|i| (i as f64 + 0.5) * d).collect();
        let mut w: Vec<f64> = match self.weight_mode {
            // ∫ e^{−γλ} over each cell, relative to the first cell's lower edge
            WeightMode::Uniform => (0..j)
                .map(|i| {
                    let g = self.gamma * d;
                    let cell = if g < 1e-9 { 1.0 } else { -(-g).exp_m1() / g };
                    cell * (-g * i as f64).exp()
                })
                .collect(),
            WeightMode::LorentzianPushforward { width_ratio } => {
                // P(λ′ > a) = P(|x| < √(λ_max/a − 1))
                let above = |a: f64| {
                    if a <= 0.0 {
                        1.0
                    } else {
                        let u = (self.lambda_max / a - 1.0).max(0.0).sqrt();
                        erf(u / (width_ratio * std::f64::consts::SQRT_2))
                    }
                };
                (0..j)
                    .map(|i| {
                        let mass = above(i as f64 * d) - above((i + 1) as f64 * d);
                        mass * (-self.gamma * (lambdas[i] - lambdas[0])).exp()
                    })
                    .collect()
            }
        };
        let total: f64 = w.iter().sum();
        if total > 0.0 && total.is_finite() {
            w.iter_mut().for_each(|x| *x /= total);
        } else {
            // every cell underflowed: all mass sits in the lowest cell
            w.iter_mut().for_each(|x| *x = 0.0);
            w[0] = 1.0;
        }
        (lambdas, w)
    }
}

/// Poisson probabilities averaged over each λ cell,
/// K[n][j] = (1/Δ)∫_{cell j} Po(n; λ) dλ, from regularized incomplete gamma
/// functions. Independent of p_e, λ_b and γ, so it is built once per λ_max.
struct CellKernel {
    k: Vec<Vec<f64>>,
}

impl CellKernel {
    fn new(lambda_max: f64, j: usize, n_max: usize) -> Self {
        let d = lambda_max / j as f64;
        let k = (0..=n_max)
            .map(|n| {
                let a = (n + 1) as f64;
                // ∫_0^x Po(n; λ) dλ = P(n + 1, x); use the upper tail where it
                // is the small one
                let upper = |x: f64| if x <= 0.0 { 1.0 } else { gamma_ur(a, x) };
                let lower = |x: f64| if x <= 0.0 { 0.0 } else { gamma_lr(a, x) };
                (0..j)
                    .map(|i| {
                        let (lo, hi) = (i as f64 * d, (i + 1) as f64 * d);
                        let v = if 0.5 * (lo + hi) > a {
                            upper(lo) - upper(hi)
                        } else {
                            lower(hi) - lower(lo)
                        };
                        v.max(0.0) / d
                    })
                    .collect()
            })
            .collect();
        Self { k }
    }
}

fn ln_factorials(n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        out[n] = out[n - 1] + (n as f64).ln();
    }
    out
}

fn poisson_ln(n: usize, lambda: f64, ln_fact: &[f64]) -> f64 {
    n as f64 * lambda.ln() - lambda - ln_fact[n]
}

/// Smallest admissible n_max for `lambda_max`.
pub fn min_n_max(lambda_max: f64) -> usize {
    (lambda_max + 6.0 * lambda_max.sqrt()).ceil() as usize
}

fn pmf_unchecked(p: &MixtureParams, kernel: &CellKernel, ln_fact: &[f64]) -> Vec<f64> {
    let (_, w) = p.grid();
    kernel
        .k
        .iter()
        .enumerate()
        .map(|(n, row)| {
            let bg = poisson_ln(n, p.lambda_b, ln_fact).exp();
            let em: f64 = row.iter().zip(&w).map(|(k, w)| k * w).sum();
            (1.0 - p.p_e) * bg + p.p_e * em
        })
        .collect()
}

/// P(n) for n = 0..=n_max.
pub fn mixture_pmf(params: &MixtureParams, n_max: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if n_max < min_n_max(params.lambda_max) {
        return Err(invalid(format!(
            "n_max = {n_max} is below ⌈λ_max + 6√λ_max⌉ = {}",
            min_n_max(params.lambda_max)
        )));
    }
    let kernel = CellKernel::new(params.lambda_max, params.j, n_max);
    Ok(pmf_unchecked(params, &kernel, &ln_factorials(n_max)))
}

/// Frequencies h[n] of photon number n from a unit-bin integer histogram.
fn frequencies(hist: &Histogram) -> Result<Vec<u64>> {
    let edges = hist.edges();
    let integer_bins = edges.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < 1e-9)
        && (edges[0] + 0.5).fract().abs() < 1e-9
        && edges[0] >= -0.5;
    if !integer_bins {
        return Err(invalid("photon-number histogram must have unit bins centered on integers"));
    }
    let offset = (edges[0] + 0.5).round() as usize;
    let mut h = vec![0u64; offset];
    h.extend_from_slice(hist.counts());
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub params: MixtureParams,
    /// Standard errors of p_e, λ_b and γ; NaN where the likelihood surface
    /// is flat or the estimate sits on a bound.
    pub errors: [f64; 3],
    pub log_l: f64,
    pub n_bins: u64,
    pub converged: bool,
    pub notes: Vec<String>,
}

impl MixtureFit {
    pub fn bic(&self) -> f64 {
        4.0 * (self.n_bins as f64).ln() - 2.0 * self.log_l
    }

    pub fn to_fit_result(&self) -> FitResult {
        let p = &self.params;
        let mut fr = FitResult::new(Goodness::LogLikelihood(self.log_l), self.converged, self.n_bins as usize)
            .with("p_e", p.p_e, self.errors[0], "")
            .with("lambda_b", p.lambda_b, self.errors[1], "counts/bin")
            .with("gamma", p.gamma, self.errors[2], "1/count")
            .with("lambda_max", p.lambda_max, 0.0, "counts/bin")
            .with("logL", self.log_l, 0.0, "")
            .with("bic", self.bic(), 0.0, "");
        for n in &self.notes {
            fr.note(n.clone());
        }
        fr
    }
}

struct Objective<'a> {
    h: &'a [u64],
    ln_fact: Vec<f64>,
    kernel: CellKernel,
    lambda_max: f64,
    j: usize,
    mode: WeightMode,
}

impl Objective<'_> {
    fn params(&self, x: &[f64; 3]) -> MixtureParams {
        MixtureParams {
            p_e: x[0].clamp(0.0, 1.0),
            lambda_b: x[1],
            gamma: x[2].max(0.0),
            lambda_max: self.lambda_max,
            j: self.j,
            weight_mode: self.mode,
        }
    }

    fn log_l(&self, p: &MixtureParams) -> f64 {
        let pmf = pmf_unchecked(p, &self.kernel, &self.ln_fact);
        self.h
            .iter()
            .zip(pmf)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, q)| c as f64 * q.max(1e-300).ln())
            .sum()
    }

    /// Optimizer coordinates: logit p_e, ln λ_b, ln γ (γ → 0 reachable).
    fn from_u(u: &[f64; 3]) -> [f64; 3] {
        [1.0 / (1.0 + (-u[0]).exp()), u[1].exp(), u[2].exp()]
    }

    fn to_u(x: &[f64; 3]) -> [f64; 3] {
        let p = x[0].clamp(1e-9, 1.0 - 1e-9);
        [(p / (1.0 - p)).ln(), x[1].ln(), x[2].max(1e-12).ln()]
    }

    fn cost(&self, u: &[f64; 3]) -> f64 {
        let x = Self::from_u(u);
        let v = -self.log_l(&self.params(&x));
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Nelder–Mead with standard coefficients; returns (argmin, min, converged).
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(f: F, start: [f64; 3], step: [f64; 3], max_iter: usize) -> ([f64; 3], f64, bool) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, f(&start)));
    for k in 0..3 {
        let mut v = start;
        v[k] += step[k];
        simplex.push((v, f(&v)));
    }
    let combine = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        let spread = simplex
            .iter()
            .skip(1)
            .map(|(v, _)| (0..3).map(|k| (v[k] - simplex[0].0[k]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) && spread < 1e-7 {
            return (simplex[0].0, best, true);
        }
        let mut c = [0.0; 3];
        for (v, _) in &simplex[..3] {
            for k in 0..3 {
                c[k] += v[k] / 3.0;
            }
        }
        let xw = simplex[3].0;
        let xr = combine(&c, &xw, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = combine(&c, &xw, -2.0);
            let fe = f(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let x = combine(&c, &xr, 0.5);
                (x, f(&x))
            } else {
                let x = combine(&c, &xw, 0.5);
                (x, f(&x))
            };
            if fc < worst.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = combine(&x0, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, false)
}

/// Standard errors from the numerical Hessian of −logL in (p_e, λ_b, γ).
fn hessian_errors(obj: &Objective, x: &[f64; 3]) -> [f64; 3] {
    let f = |y: &[f64; 3]| -> f64 {
        if y[0] < 0.0 || y[0] > 1.0 || y[1] <= 0.0 || y[2] < 0.0 {
            return f64::NAN;
        }
        -obj.log_l(&obj.params(y))
    };
    let h: [f64; 3] = [
        1e-4 * x[0].max(1e-3),
        1e-4 * x[1],
        1e-4 * x[2].max(1e-3),
    ];
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let f0 = f(x);
    for i in 0..3 {
        for k in i..3 {
            let shifted = |si: f64, sk: f64| {
                let mut y = *x;
                y[i] += si * h[i];
                y[k] += sk * h[k];
                f(&y)
            };
            let v = if i == k {
                (shifted(1.0, 0.0) - 2.0 * f0 + shifted(-1.0, 0.0)) / (h[i] * h[i])
            } else {
                (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0) + shifted(-1.0, -1.0))
                    / (4.0 * h[i] * h[k])
            };
            m[(i, k)] = v;
            m[(k, i)] = v;
        }
    }
    match m.try_inverse() {
        Some(cov) => [0, 1, 2].map(|i| if cov[(i, i)] > 0.0 { cov[(i, i)].sqrt() } else { f64::NAN }),
        None => [f64::NAN; 3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixtureOptions {
    pub j: usize,
    pub weight_mode: WeightMode,
    /// Minimum number of histogram entries (trace bins).
    pub min_total: u64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            j: DEFAULT_J,
            weight_mode: WeightMode::Uniform,
            min_total: 1000,
        }
    }
}

/// Maximum-likelihood p_e, λ_b and γ at fixed λ_max, best of several
/// Nelder–Mead starts.
pub fn fit_mixture(hist: &Histogram, lambda_max: f64, opts: &MixtureOptions) -> Result<MixtureFit> {
    let h = frequencies(hist)?;
    let total: u64 = h.iter().sum();
    if total < opts.min_total {
        return Err(Error::InsufficientData(format!(
            "histogram holds {total} bins, at least {} required",
            opts.min_total
        )));
    }
    if h.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::FitFailed("histogram has a single occupied photon number".into()));
    }
    MixtureParams {
        p_e: 0.5,
        lambda_b: 1.0,
        gamma: 0.0,
        lambda_max,
        j: opts.j,
        weight_mode: opts.weight_mode,
    }
    .validate()?;
    let mut h = h;
    let n_max = min_n_max(lambda_max).max(h.len() - 1);
    h.resize(n_max + 1, 0);
    let obj = Objective {
        ln_fact: ln_factorials(n_max),
        kernel: CellKernel::new(lambda_max, opts.j, n_max),
        h: &h,
        lambda_max,
        j: opts.j,
        mode: opts.weight_mode,
    };

    // background guess from the low-count bulk
    let mut cum = 0;
    let median = h
        .iter()
        .position(|&c| {
            cum += c;
            cum * 2 >= total
        })
        .unwrap_or(0) as f64;
    let lb0 = median.clamp(0.05, lambda_max.max(0.1) * 0.5).max(0.05);
    let starts = [
        [0.02, lb0, 0.01 / lambda_max],
        [0.1, lb0, 1.0 / lambda_max],
        [0.3, lb0, 0.1 / lambda_max],
        [0.5, lb0 * 1.5, 3.0 / lambda_max],
        [0.8, lb0 * 0.7, 0.3 / lambda_max],
        [0.2, lb0, 10.0 / lambda_max],
    ];
    let runs: Vec<([f64; 3], f64, bool)> = starts
        .iter()
        .map(|s| {
            let u0 = Objective::to_u(s);
            let (u, v, ok) = nelder_mead(|u| obj.cost(u), u0, [1.0, 0.3, 1.0], 4000);
            // restart once from the optimum to escape a collapsed simplex
            let (u, v2, ok2) = nelder_mead(|u| obj.cost(u), u, [0.3, 0.1, 0.5], 4000);
            (u, v.min(v2), ok && ok2 || ok2)
        })
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::FitFailed(format!("all {} starts failed at λ_max = {lambda_max}", starts.len())))?;
    let x = Objective::from_u(&best.0);
    let params = obj.params(&x);
    let log_l = obj.log_l(&params);
    let mut notes = Vec::new();
    if matches!(opts.weight_mode, WeightMode::Uniform) {
        notes.push("weight function p(λ′) uniform (assumed)".to_string());
    } else {
        notes.push("weight function p(λ′) from Lorentzian pushforward (assumed)".to_string());
    }
    let mut errors = hessian_errors(&obj, &x);
    if params.p_e < 1e-6 {
        errors[0] = f64::NAN;
        notes.push("p_e at its lower bound".into());
    }
    if !best.2 {
        notes.push("simplex did not reach tolerance".into());
    }
    Ok(MixtureFit {
        params,
        errors,
        log_l,
        n_bins: total,
        converged: best.2,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicPoint {
    pub lambda_max: f64,
    pub bic: f64,
    pub log_l: f64,
    pub p_e: f64,
}

/// Fits each grid value of λ_max and keeps the BIC minimum (k = 4).
pub fn select_lambda_max(hist: &Histogram, grid: &[f64], opts: &MixtureOptions) -> Result<(MixtureFit, Vec<BicPoint>)> {
    if grid.len() < 3 {
        return Err(invalid(format!("λ_max grid needs at least 3 points, got {}", grid.len())));
    }
    let fits: Vec<Result<MixtureFit>> = grid.par_iter().map(|&l| fit_mixture(hist, l, opts)).collect();
    let curve = grid
        .iter()
        .zip(&fits)
        .map(|(&l, f)| match f {
            Ok(f) => BicPoint {
                lambda_max: l,
                bic: f.bic(),
                log_l: f.log_l,
                p_e: f.params.p_e,
            },
            Err(_) => BicPoint {
                lambda_max: l,
                bic: f64::NAN,
                log_l: f64::NAN,
                p_e: f64::NAN,
            },
        })
        .collect();
    let mut first_err = None;
    let mut best: Option<MixtureFit> = None;
    for f in fits {
        match f {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.bic() < b.bic()) {
                    best = Some(f);
                }
            }
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some(b) => Ok((b, curve)),
        None => Err(first_err.unwrap()),
    }
}

/// The mixture ON fraction is the emitter-event probability p_e.
pub fn on_fraction(fit: &MixtureFit) -> Estimate {
    Estimate {
        value: fit.params.p_e,
        error: fit.errors[0],
    }
}

/// `n,empirical,model` with the empirical column normalized.
pub fn write_pmf_compare<W: Write>(hist: &Histogram, params: &MixtureParams, out: W) -> Result<()> {
    let h = frequencies(hist)?;
    let total: u64 = h.iter().sum();
    let n_max = min_n_max(params.lambda_max).max(h.len().saturating_sub(1));
    let model = mixture_pmf(params, n_max)?;
    let mut w = BufWriter::new(out);
    writeln!(w, "n,empirical,model")?;
    for (n, m) in model.iter().enumerate() {
        let e = h.get(n).copied().unwrap_or(0) as f64 / total.max(1) as f64;
        writeln!(w, "{n},{e:.8e},{m:.8e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Pearson χ² p-value of the histogram against the fitted pmf, pooling
/// adjacent photon numbers until each expected count is at least 5.
pub fn goodness_of_fit(hist: &Histogram, fit: &MixtureFit) -> Result<f64> {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let h = frequencies(hist)?;
    let total: u64 = h.iter().sum();
    let n_max = min_n_max(fit.params.lambda_max).max(h.len() - 1);
    let pmf = mixture_pmf(&fit.params, n_max)?;
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    let (mut obs, mut exp) = (0.0, 0.0);
    let tail: f64 = 1.0 - pmf.iter().sum::<f64>();
    for (n, &q) in pmf.iter().enumerate().take(n_max + 1) {
        obs += h.get(n).copied().unwrap_or(0) as f64;
        exp += q * total as f64;
        if n == n_max {
            exp += tail.max(0.0) * total as f64;
        }
        if exp >= 5.0 || n == n_max {
            chi2 += (obs - exp).powi(2) / exp.max(1e-12);
            cells += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    let dof = cells.saturating_sub(4).max(1) as f64;
    Ok(1.0 - ChiSquared::new(dof).unwrap().cdf(chi2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn params(p_e: f64, lambda_b: f64, gamma: f64, lambda_max: f64) -> MixtureParams {
        MixtureParams {
            p_e,
            lambda_b,
            gamma,
            lambda_max,
            j: DEFAULT_J,
            weight_mode: WeightMode::Uniform,
        }
    }

    fn sample(p: &MixtureParams, n: usize, seed: u64) -> Histogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lambdas, w) = p.grid();
        let values: Vec<u64> = (0..n)
            .map(|_| {
                let lam = if rng.random::<f64>() < p.p_e {
                    // cell by mass, then uniform within the cell
                    let mut u = rng.random::<f64>();
                    let mut pick = lambdas.len() - 1;
                    for (i, w) in w.iter().enumerate() {
                        if u < *w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    (pick as f64 + rng.random::<f64>()) * p.lambda_max / lambdas.len() as f64
                } else {
                    p.lambda_b
                };
                Poisson::new(lam).unwrap().sample(&mut rng) as u64
            })
            .collect();
        Histogram::of_integers(&values)
    }

    #[test]
    fn no_emitter_is_plain_poisson() {
        let p = params(0.0, 2.5, 0.3, 10.0);
        let pmf = mixture_pmf(&p, 40).unwrap();
        let ln_fact = ln_factorials(40);
        for (n, q) in pmf.iter().enumerate() {
            assert!((q - poisson_ln(n, 2.5, &ln_fact).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn two_cell_uniform_closed_form() {
        // J = 2 on (0, 2λ_b], γ = 0: each cell carries half the emitter mass
        // and averages Po(n; λ) over its width, ∫_0^x Po(n; λ)dλ =
        // 1 − e^{−x}·Σ_{k≤n} x^k/k!
        let lb = 1.5;
        let mut p = params(0.4, lb, 0.0, 2.0 * lb);
        p.j = 2;
        let pmf = mixture_pmf(&p, 30).unwrap();
        let fact = |n: i32| (1..=n).map(|k| k as f64).product::<f64>();
        let po = |n: i32, l: f64| l.powi(n) * (-l).exp() / fact(n);
        let cdf = |n: i32, x: f64| 1.0 - (-x).exp() * (0..=n).map(|k| x.powi(k) / fact(k)).sum::<f64>();
        for n in 0..10 {
            let cell1 = cdf(n, lb) / lb;
            let cell2 = (cdf(n, 2.0 * lb) - cdf(n, lb)) / lb;
            let expect = 0.6 * po(n, lb) + 0.4 * 0.5 * (cell1 + cell2);
            assert!((pmf[n as usize] - expect).abs() < 1e-14, "{n}");
        }
    }

    #[test]
    fn n_max_floor_enforced() {
        assert!(mixture_pmf(&params(0.1, 1.0, 0.0, 100.0), 100).is_err());
        assert!(mixture_pmf(&params(1.5, 1.0, 0.0, 10.0), 40).is_err());
    }

    #[test]
    fn pushforward_cells_are_exact() {
        let mut p = params(1.0, 1.0, 0.0, 10.0);
        p.weight_mode = WeightMode::LorentzianPushforward { width_ratio: 1.0 };
        let (_, w) = p.grid();
        // mass above λ_max/2 equals P(|x| < 1) for x ~ N(0, 1)
        let upper: f64 = w[32..].iter().sum();
        assert!((upper - erf(1.0 / std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn round_trip_recovers_generating_parameters() {
        let truth = params(0.2, 1.0, 0.5, 20.0);
        let hist = sample(&truth, 100_000, 11);
        let fit = fit_mixture(&hist, 20.0, &MixtureOptions::default()).unwrap();
        let est = [fit.params.p_e, fit.params.lambda_b, fit.params.gamma];
        let true_v = [0.2, 1.0, 0.5];
        for k in 0..3 {
            assert!(
                (est[k] - true_v[k]).abs() < 3.0 * fit.errors[k],
                "param {k}: {} vs {} ± {}",
                est[k],
                true_v[k],
                fit.errors[k]
            );
        }
        let obj_truth = {
            let h = frequencies(&hist).unwrap();
            let n_max = min_n_max(20.0).max(h.len() - 1);
            let mut hh = h.clone();
            hh.resize(n_max + 1, 0);
            let pmf = mixture_pmf(&truth, n_max).unwrap();
            hh.iter().zip(pmf).filter(|(&c, _)| c > 0).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>()
        };
        assert!(fit.log_l >= obj_truth - 1e-6);
        assert!(fit.log_l - obj_truth < 5.0 + 10.0);
        assert!(goodness_of_fit(&hist, &fit).unwrap() > 0.01);
    }

    #[test]
    fn pure_poisson_gives_small_p_e() {
        let hist = sample(&params(0.0, 2.0, 0.0, 10.0), 20_000, 4);
        let fit = fit_mixture(&hist, 15.0, &MixtureOptions::default()).unwrap();
        assert!(fit.params.p_e < 0.02, "{}", fit.params.p_e);
    }

    #[test]
    fn degenerate_and_small_histograms() {
        let hist = Histogram::of_integers(&[3; 2000]);
        assert!(matches!(fit_mixture(&hist, 10.0, &MixtureOptions::default()), Err(Error::FitFailed(_))));
        let hist = Histogram::of_integers(&[1, 2, 3]);
        assert!(matches!(fit_mixture(&hist, 10.0, &MixtureOptions::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn bic_picks_generating_lambda_max() {
        let truth = params(0.2, 1.0, 0.05, 20.0);
        let hist = sample(&truth, 100_000, 21);
        let (best, curve) = select_lambda_max(&hist, &[10.0, 15.0, 20.0, 25.0, 30.0], &MixtureOptions::default()).unwrap();
        assert_eq!(best.params.lambda_max, 20.0, "{curve:?}");
        assert!(select_lambda_max(&hist, &[20.0], &MixtureOptions::default()).is_err());
    }

    #[test]
    fn refining_grid_converges() {
        let truth = params(0.2, 1.0, 0.2, 20.0);
        let hist = sample(&truth, 50_000, 8);
        let a = fit_mixture(&hist, 20.0, &MixtureOptions::default()).unwrap();
        let b = fit_mixture(&hist, 20.0, &MixtureOptions { j: 128, ..Default::default() }).unwrap();

        assert!((a.log_l - b.log_l).abs() < 0.1, "{} vs {}", a.log_l, b.log_l);
    }

    #[test]
    fn bic_prefers_no_emitter_on_poisson_data() {
        // nested comparison: free p_e costs one extra parameter
        let trials = 20;
        let mut simpler = 0;
        for seed in 0..trials {
            let hist = sample(&params(0.0, 2.0, 0.0, 10.0), 5_000, 100 + seed);
            let fit = fit_mixture(&hist, 10.0, &MixtureOptions::default()).unwrap();
            let h = frequencies(&hist).unwrap();
            let n = hist.total() as f64;
            let mean = h.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / n;
            let ln_fact = ln_factorials(h.len());
            let ll0: f64 = h.iter().enumerate().map(|(k, &c)| c as f64 * poisson_ln(k, mean, &ln_fact)).sum();
            let bic0 = 1.0 * n.ln() - 2.0 * ll0;
            let bic1 = 3.0 * n.ln() - 2.0 * fit.log_l;
            if bic0 < bic1 {
                simpler += 1;
            }
        }
        assert!(simpler as f64 >= 0.95 * trials as f64, "{simpler}/{trials}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn pmf_is_normalized(
            p_e in 0.0f64..=1.0,
            lambda_b in 0.01f64..20.0,
            gamma in 0.0f64..2.0,
            lambda_max in 0.1f64..60.0,
            j in 2usize..100,
            ratio in 0.05f64..5.0,
            push in proptest::bool::ANY,
        ) {
            let p = MixtureParams {
                p_e, lambda_b, gamma, lambda_max, j,
                weight_mode: if push { WeightMode::LorentzianPushforward { width_ratio: ratio } } else { WeightMode::Uniform },
            };
            // room for the background tail as well
            let n_max = min_n_max(lambda_max.max(lambda_b)) + 20;
            let pmf = mixture_pmf(&p, n_max).unwrap();
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
