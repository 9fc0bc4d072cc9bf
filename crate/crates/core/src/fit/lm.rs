//! Levenberg–Marquardt weighted least squares.
//!
//! Damping follows Marquardt's diagonal scaling: the step solves
//! `(JᵀJ + λ·diag(JᵀJ))·δ = Jᵀr`, λ shrinks ×10 on an accepted step and grows
//! ×10 on a rejected one. Iteration stops when every accepted parameter
//! change is below 1e-8 relative, when λ exceeds 1e15 (no descent direction
//! left at working precision), or after 200 iterations, in which case the
//! best point is returned with `converged = false`.

use nalgebra::{DMatrix, DVector};

use super::models::ModelId;
use crate::data::{FitResult, Goodness};
use crate::error::{invalid, Error, Result};

pub const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-8;
const LAMBDA_MAX: f64 = 1e15;

/// A model family plus parameter bounds and output units.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub id: ModelId,
    pub bounds: Vec<(f64, f64)>,
    pub units: Vec<String>,
    pub analytic_jacobian: bool,
}

impl ModelSpec {
    pub fn new(id: ModelId) -> Self {
        Self {
            id,
            bounds: id.default_bounds(),
            units: vec![String::new(); id.n_params()],
            analytic_jacobian: true,
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.id.param_names()
    }

    pub fn bound(mut self, name: &str, lo: f64, hi: f64) -> Self {
        let i = self.index(name);
        self.bounds[i] = (lo, hi);
        self
    }

    pub fn units(mut self, units: &[&str]) -> Self {
        self.units = units.iter().map(|u| u.to_string()).collect();
        self
    }

    fn index(&self, name: &str) -> usize {
        self.names()
            .iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("{:?} has no parameter {name}", self.id))
    }

    /// Pins `name` at `value`; it is excluded from the optimization and
    /// reported with zero uncertainty.
    pub fn fix(self, name: &str, value: f64) -> Self {
        self.bound(name, value, value)
    }

    fn free(&self) -> Vec<usize> {
        (0..self.bounds.len())
            .filter(|&j| self.bounds[j].0 < self.bounds[j].1)
            .collect()
    }

    /// A step that would cross a bound stops 90% of the way to it, so a
    /// parameter is never parked exactly on a bound where its gradient may
    /// vanish.
    fn step_within_bounds(&self, j: usize, from: f64, step: f64) -> f64 {
        let (lo, hi) = self.bounds[j];
        let to = from + step;
        if to < lo {
            lo + 0.1 * (from - lo)
        } else if to > hi {
            hi - 0.1 * (hi - from)
        } else {
            to
        }
    }

    fn clamp(&self, p: &mut [f64]) {
        for (v, &(lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Raw optimizer output.
#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    /// Weighted residual sum of squares at the optimum.
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_free: usize,
}

impl LmSolution {
    pub fn reduced_chi2(&self, n: usize) -> f64 {
        self.chi2 / (n - self.n_free) as f64
    }
}

struct Problem<'a> {
    spec: &'a ModelSpec,
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&x, &y), &w)| {
                let r = (y - self.spec.id.eval(x, p)) * w;
                r * r
            })
            .sum()
    }

    /// Weighted Jacobian over the free parameters and residual vector.
    fn linearize(&self, p: &[f64], free: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let mut jac = DMatrix::zeros(self.x.len(), free.len());
        let mut res = DVector::zeros(self.x.len());
        let mut g = vec![0.0; p.len()];
        for (i, ((&x, &y), &w)) in self.x.iter().zip(self.y).zip(&self.w).enumerate() {
            self.spec.id.grad(x, p, &mut g);
            for (k, &j) in free.iter().enumerate() {
                jac[(i, k)] = g[j] * w;
            }
            res[i] = (y - self.spec.id.eval(x, p)) * w;
        }
        (jac, res)
    }
}

/// Fits `spec` to `(x, y)`; `y_err` are one-sigma errors used as weights.
pub fn levenberg_marquardt(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    y_err: Option<&[f64]>,
    start: &[f64],
) -> Result<LmSolution> {
    let n_all = spec.id.n_params();
    if start.len() != n_all {
        return Err(invalid(format!(
            "{:?} takes {n_all} parameters, got {} starting values",
            spec.id,
            start.len()
        )));
    }
    if x.len() != y.len() {
        return Err(invalid("x and y differ in length"));
    }
    let free = spec.free();
    let m = free.len();
    if m == 0 {
        return Err(invalid("every parameter is fixed"));
    }
    if x.len() < m + 1 {
        return Err(invalid(format!(
            "{} points cannot constrain {m} parameters",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) || start.iter().any(|v| !v.is_finite()) {
        return Err(invalid("fit inputs must be finite"));
    }
    let w = match y_err {
        Some(e) => {
            if e.len() != y.len() || e.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(invalid("y errors must be positive and match y in length"));
            }
            e.iter().map(|s| 1.0 / s).collect()
        }
        None => vec![1.0; y.len()],
    };
    let prob = Problem { spec, x, y, w };

    let mut p = start.to_vec();
    spec.clamp(&mut p);
    let mut cost = prob.cost(&p);
    if !cost.is_finite() {
        return Err(Error::FitFailed(format!(
            "{:?}: model is not finite at the starting point",
            spec.id
        )));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (jac, res) = prob.linearize(&p, &free);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        loop {
            let mut a = jtj.clone();
            for j in 0..m {
                // a zero diagonal (parameter with no influence) still gets damped
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-30);
            }
            let step = a.cholesky().map(|c| c.solve(&jtr));
            if let Some(step) = step {
                let mut trial = p.clone();
                for (k, &j) in free.iter().enumerate() {
                    trial[j] = spec.step_within_bounds(j, p[j], step[k]);
                }
                let trial_cost = prob.cost(&trial);
                if trial_cost.is_finite() && trial_cost < cost {
                    let small = trial
                        .iter()
                        .zip(&p)
                        .all(|(n, o)| (n - o).abs() <= REL_TOL * (o.abs() + REL_TOL));
                    p = trial;
                    cost = trial_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    if small {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                converged = true;
                break 'outer;
            }
        }
    }

    let (jac, _) = prob.linearize(&p, &free);
    let jtj = jac.transpose() * &jac;
    let cov = invert_normal_matrix(&jtj).ok_or_else(|| {
        Error::FitFailed(format!(
            "{:?}: singular Jacobian at the optimum (χ² = {cost:.4e}); parameters not identifiable",
            spec.id
        ))
    })?;
    let scale = if y_err.is_some() {
        1.0
    } else {
        cost / (x.len() - m) as f64
    };
    let mut errors = vec![0.0; n_all];
    for (k, &j) in free.iter().enumerate() {
        errors[j] = (cov[(k, k)] * scale).max(0.0).sqrt();
    }
    Ok(LmSolution {
        params: p,
        errors,
        chi2: cost,
        iterations,
        converged,
        n_free: m,
    })
}

/// Inverse of JᵀJ via a scaled SVD; `None` when the condition number
/// exceeds 1e13.
fn invert_normal_matrix(jtj: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = jtj.nrows();
    let d: Vec<f64> = (0..m).map(|j| jtj[(j, j)].sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(m, m, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-13) {
        return None;
    }
    let inv = svd.pseudo_inverse(0.0).ok()?;
    Some(DMatrix::from_fn(m, m, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

/// Fits and packages the result with the model's parameter names.
pub fn nlls_fit(
    spec: &ModelSpec,
    x: &[f64],
    y: &[f64],
    y_err: Option<&[f64]>,
    start: &[f64],
) -> Result<FitResult> {
    let sol = levenberg_marquardt(spec, x, y, y_err, start)?;
    Ok(package_solution(spec, &sol, x.len()))
}

pub(crate) fn package_solution(spec: &ModelSpec, sol: &LmSolution, n: usize) -> FitResult {
    let mut fr = FitResult::new(Goodness::Rss(sol.chi2), sol.converged, n);
    for (j, name) in spec.names().iter().enumerate() {
        fr.insert(name, sol.params[j], sol.errors[j], &spec.units[j]);
    }
    if !sol.converged {
        fr.note(format!("stopped after {} iterations without converging", sol.iterations));
    }
    fr
}

/// Weighted straight-line fit `y = a + b·x`; returns `(a, b, se_a, se_b)`.
/// With `absolute_weights` the weights are inverse variances; otherwise the
/// errors are scaled by the reduced χ².
pub fn weighted_line(x: &[f64], y: &[f64], w: &[f64], absolute_weights: bool) -> Result<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < 3 || y.len() != n || w.len() != n {
        return Err(Error::InsufficientData("a line fit needs at least 3 points".into()));
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::FitFailed("line fit has no spread in x".into()));
    }
    let b = sxy / sxx;
    let a = ym - b * xm;
    let chi2: f64 = w
        .iter()
        .zip(x)
        .zip(y)
        .map(|((w, x), y)| w * (y - a - b * x).powi(2))
        .sum();
    let s2 = if absolute_weights { 1.0 } else { chi2 / (n - 2) as f64 };
    let se_b = (s2 / sxx).sqrt();
    let se_a = (s2 * (1.0 / sw + xm * xm / sxx)).sqrt();
    Ok((a, b, se_a, se_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_saturation_exact() {
        let spec = ModelSpec::new(ModelId::Saturation);
        let x: Vec<f64> = (1..=12).map(|i| i as f64 * 5.0).collect();
        let y: Vec<f64> = x.iter().map(|&p| 12.5e6 * p / (p + 7.6)).collect();
        let s = levenberg_marquardt(&spec, &x, &y, None, &[5e6, 20.0]).unwrap();
        assert!(s.converged);
        assert!((s.params[0] / 12.5e6 - 1.0).abs() < 1e-6);
        assert!((s.params[1] / 7.6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn every_model_recovers_noiseless_truth() {
        let cases: Vec<(ModelId, Vec<f64>, Vec<f64>, Vec<f64>)> = vec![
            (ModelId::Gaussian, (0..80).map(|i| -60.0 + 1.5 * i as f64).collect(), vec![40.0, 3.0, 18.7, 1.0], vec![30.0, 0.0, 10.0, 0.0]),
            (ModelId::LorentzianDip, (0..60).map(|i| 1.4 + 0.015 * i as f64).collect(), vec![0.001, -0.0265, 1.87, 0.2], vec![0.0, -0.01, 1.85, 0.3]),
            (ModelId::ExpRecovery, (0..20).map(|i| 1e-5 * 1.6f64.powi(i)).collect(), vec![1.3, 5.6e-3], vec![1.0, 1e-3]),
            (ModelId::Sinusoid180, (0..19).map(|i| 10.0 * i as f64).collect(), vec![1.0, 0.1, 140.0], vec![1.0, 0.05, 120.0]),
            (ModelId::ExpDecay, (0..50).map(|i| 5e-4 * i as f64).collect(), vec![0.82, 0.18, 5e-3], vec![0.7, 0.1, 1e-3]),
            (ModelId::G2Bunching, (0..101).map(|i| -25.0 + 0.5 * i as f64).collect(), vec![0.1, 1.26, 0.3, 8.0], vec![0.3, 2.0, 0.1, 4.0]),
            (ModelId::G2Antibunching, (0..101).map(|i| -12.5 + 0.25 * i as f64).collect(), vec![0.0, 1.26], vec![0.4, 2.0]),
            (ModelId::DoubleGaussian, (0..200).map(|i| 584.8 + 0.002 * i as f64).collect(),
                vec![3.0, 585.0, 0.03, 1.0, 585.12, 0.03, 0.01], vec![2.0, 584.99, 0.04, 0.5, 585.11, 0.04, 0.0]),
        ];
        for (id, x, truth, start) in cases {
            let spec = ModelSpec::new(id);
            let y: Vec<f64> = x.iter().map(|&v| id.eval(v, &truth)).collect();
            let s = levenberg_marquardt(&spec, &x, &y, None, &start).unwrap();
            for (j, (&got, &want)) in s.params.iter().zip(&truth).enumerate() {
                let scale = want.abs().max(1e-3);
                assert!((got - want).abs() / scale < 1e-6, "{id:?} p{j}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn saturation_with_three_percent_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (1..=60).map(|p| p as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&p| {
                let m = 12.5 * p / (p + 7.6);
                m * (1.0 + 0.03 * Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
            })
            .collect();
        let f = nlls_fit(&ModelSpec::new(ModelId::Saturation), &x, &y, None, &[10.0, 5.0]).unwrap();
        assert!((f.value("I_inf") / 12.5 - 1.0).abs() < 0.05);
        assert!((f.value("P_sat") / 7.6 - 1.0).abs() < 0.10);
        assert!(f.error("P_sat") > 0.0);
    }

    #[test]
    fn too_few_points() {
        let spec = ModelSpec::new(ModelId::Sinusoid180);
        assert!(matches!(
            levenberg_marquardt(&spec, &[0.0, 90.0], &[1.0, 2.0], None, &[1.0, 1.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unidentifiable_parameter_fails() {
        // flat g² curve: τ_a has no influence once g0 = 1
        let spec = ModelSpec::new(ModelId::G2Antibunching);
        let x: Vec<f64> = (0..40).map(|i| i as f64 - 20.0).collect();
        let y = vec![1.0; 40];
        let r = levenberg_marquardt(&spec, &x, &y, None, &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::FitFailed(_))));
    }

    #[test]
    fn errors_scale_with_supplied_sigmas() {
        let spec = ModelSpec::new(ModelId::ExpDecay);
        let x: Vec<f64> = (0..40).map(|i| 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.0 + 2.0 * (-t).exp()).collect();
        let e1 = vec![0.01; 40];
        let e2 = vec![0.02; 40];
        let a = levenberg_marquardt(&spec, &x, &y, Some(&e1), &[0.5, 1.0, 2.0]).unwrap();
        let b = levenberg_marquardt(&spec, &x, &y, Some(&e2), &[0.5, 1.0, 2.0]).unwrap();
        for j in 0..3 {
            assert!((b.errors[j] / a.errors[j] - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_parameters_are_held() {
        let spec = ModelSpec::new(ModelId::Gaussian).fix("offset", 0.0).fix("center", 1.0);
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| 5.0 * (-0.5 * ((v - 1.0) / 0.7f64).powi(2)).exp()).collect();
        let s = levenberg_marquardt(&spec, &x, &y, None, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.params[1], 1.0);
        assert_eq!(s.errors[3], 0.0);
        assert!((s.params[0] - 5.0).abs() < 1e-6 && (s.params[2] - 0.7).abs() < 1e-6);
        assert_eq!(s.n_free, 2);
    }

    #[test]
    fn line_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, _, _) = weighted_line(&x, &y, &[1.0; 4], false).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn invariant_under_reordering(seed in 0u64..1000, rot in 1usize..11) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.02).unwrap();
            let x: Vec<f64> = (1..=12).map(|p| 5.0 * p as f64).collect();
            let y: Vec<f64> = x.iter().map(|&p| (12.5 * p / (p + 7.6)) * (1.0 + noise.sample(&mut rng))).collect();
            let spec = ModelSpec::new(ModelId::Saturation);
            let a = levenberg_marquardt(&spec, &x, &y, None, &[10.0, 5.0]).unwrap();
            let mut xs = x.clone();
            let mut ys = y.clone();
            xs.rotate_left(rot);
            ys.rotate_left(rot);
            xs.reverse();
            ys.reverse();
            let b = levenberg_marquardt(&spec, &xs, &ys, None, &[10.0, 5.0]).unwrap();
            for j in 0..2 {
                proptest::prop_assert!((a.params[j] - b.params[j]).abs() <= 1e-7 * a.params[j].abs());
            }
        }

        #[test]
        fn saturation_scaling(c in 0.01f64..100.0) {
            let x: Vec<f64> = (1..=12).map(|p| 5.0 * p as f64).collect();
            let y: Vec<f64> = x.iter().map(|&p| 12.5 * p / (p + 7.6)).collect();
            let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
            let spec = ModelSpec::new(ModelId::Saturation);
            let a = levenberg_marquardt(&spec, &x, &y, None, &[10.0, 5.0]).unwrap();
            let b = levenberg_marquardt(&spec, &x, &yc, None, &[10.0 * c, 5.0]).unwrap();
            proptest::prop_assert!((b.params[0] / (c * a.params[0]) - 1.0).abs() < 1e-7);
            proptest::prop_assert!((b.params[1] / a.params[1] - 1.0).abs() < 1e-7);
        }
    }
}
