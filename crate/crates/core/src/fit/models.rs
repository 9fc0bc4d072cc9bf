use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Closed-form model families with analytic Jacobians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// `I_inf·P/(P + P_sat)`
    Saturation,
    /// `amp·exp(−(x − center)²/2σ²) + offset`
    Gaussian,
    /// `baseline + amplitude·(w/2)²/((x − center)² + (w/2)²)`, amplitude signed
    LorentzianDip,
    /// `amplitude·(1 − exp(−x/t1))`
    ExpRecovery,
    /// `mean + amplitude·cos(2(θ − θ₀))`, θ in degrees
    Sinusoid180,
    /// Two Gaussians on a shared offset.
    DoubleGaussian,
    /// `offset + amplitude·exp(−x/tau)`
    ExpDecay,
    /// `1 − (1 − g0)·exp(−|t|/τ_a) + A_b·exp(−|t|/τ_b)`
    G2Bunching,
    /// `1 − (1 − g0)·exp(−|t|/τ_a)`
    G2Antibunching,
}

impl ModelId {
    pub const ALL: [ModelId; 9] = [
        ModelId::Saturation,
        ModelId::Gaussian,
        ModelId::LorentzianDip,
        ModelId::ExpRecovery,
        ModelId::Sinusoid180,
        ModelId::DoubleGaussian,
        ModelId::ExpDecay,
        ModelId::G2Bunching,
        ModelId::G2Antibunching,
    ];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelId::Saturation => &["I_inf", "P_sat"],
            ModelId::Gaussian => &["amplitude", "center", "sigma", "offset"],
            ModelId::LorentzianDip => &["baseline", "amplitude", "center", "fwhm"],
            ModelId::ExpRecovery => &["amplitude", "t1"],
            ModelId::Sinusoid180 => &["mean", "amplitude", "theta0"],
            ModelId::DoubleGaussian => &[
                "amplitude1",
                "center1",
                "sigma1",
                "amplitude2",
                "center2",
                "sigma2",
                "offset",
            ],
            ModelId::ExpDecay => &["offset", "amplitude", "tau"],
            ModelId::G2Bunching => &["g0", "tau_a", "amp_b", "tau_b"],
            ModelId::G2Antibunching => &["g0", "tau_a"],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    /// Parameters that must stay positive for the model to be well posed.
    pub(crate) fn default_bounds(self) -> Vec<(f64, f64)> {
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        let pos = (f64::MIN_POSITIVE, f64::INFINITY);
        match self {
            ModelId::Saturation => vec![free, pos],
            ModelId::Gaussian => vec![free, free, pos, free],
            ModelId::LorentzianDip => vec![free, free, free, pos],
            ModelId::ExpRecovery => vec![free, pos],
            ModelId::Sinusoid180 => vec![free, free, free],
            ModelId::DoubleGaussian => vec![free, free, pos, free, free, pos, free],
            ModelId::ExpDecay => vec![free, free, pos],
            ModelId::G2Bunching => vec![free, pos, free, pos],
            ModelId::G2Antibunching => vec![free, pos],
        }
    }

    pub fn eval(self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelId::Saturation => p[0] * x / (x + p[1]),
            ModelId::Gaussian => p[0] * gauss(x, p[1], p[2]) + p[3],
            ModelId::LorentzianDip => {
                let h = 0.5 * p[3];
                let d = x - p[2];
                p[0] + p[1] * h * h / (d * d + h * h)
            }
            ModelId::ExpRecovery => -p[0] * (-x / p[1]).exp_m1(),
            ModelId::Sinusoid180 => p[0] + p[1] * (2.0 * (x - p[2]).to_radians()).cos(),
            ModelId::DoubleGaussian => {
                p[0] * gauss(x, p[1], p[2]) + p[3] * gauss(x, p[4], p[5]) + p[6]
            }
            ModelId::ExpDecay => p[0] + p[1] * (-x / p[2]).exp(),
            ModelId::G2Bunching => {
                let t = x.abs();
                1.0 - (1.0 - p[0]) * (-t / p[1]).exp() + p[2] * (-t / p[3]).exp()
            }
            ModelId::G2Antibunching => 1.0 - (1.0 - p[0]) * (-x.abs() / p[1]).exp(),
        }
    }

    /// Writes ∂f/∂p into `out`.
    pub fn grad(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            ModelId::Saturation => {
                let d = x + p[1];
                out[0] = x / d;
                out[1] = -p[0] * x / (d * d);
            }
            ModelId::Gaussian => {
                gauss_grad(x, p[0], p[1], p[2], &mut out[0..3]);
                out[3] = 1.0;
            }
            ModelId::LorentzianDip => {
                let h = 0.5 * p[3];
                let d = x - p[2];
                let den = d * d + h * h;
                let l = h * h / den;
                out[0] = 1.0;
                out[1] = l;
                out[2] = p[1] * 2.0 * h * h * d / (den * den);
                out[3] = p[1] * h * d * d / (den * den);
            }
            ModelId::ExpRecovery => {
                let e = (-x / p[1]).exp();
                out[0] = -(-x / p[1]).exp_m1();
                out[1] = -p[0] * e * x / (p[1] * p[1]);
            }
            ModelId::Sinusoid180 => {
                let phi = 2.0 * (x - p[2]).to_radians();
                out[0] = 1.0;
                out[1] = phi.cos();
                out[2] = p[1] * phi.sin() * 2.0_f64.to_radians();
            }
            ModelId::DoubleGaussian => {
                gauss_grad(x, p[0], p[1], p[2], &mut out[0..3]);
                gauss_grad(x, p[3], p[4], p[5], &mut out[3..6]);
                out[6] = 1.0;
            }
            ModelId::ExpDecay => {
                let e = (-x / p[2]).exp();
                out[0] = 1.0;
                out[1] = e;
                out[2] = p[1] * e * x / (p[2] * p[2]);
            }
            ModelId::G2Bunching => {
                let t = x.abs();
                let ea = (-t / p[1]).exp();
                let eb = (-t / p[3]).exp();
                out[0] = ea;
                out[1] = -(1.0 - p[0]) * ea * t / (p[1] * p[1]);
                out[2] = eb;
                out[3] = p[2] * eb * t / (p[3] * p[3]);
            }
            ModelId::G2Antibunching => {
                let t = x.abs();
                let ea = (-t / p[1]).exp();
                out[0] = ea;
                out[1] = -(1.0 - p[0]) * ea * t / (p[1] * p[1]);
            }
        }
    }
}

fn gauss(x: f64, c: f64, s: f64) -> f64 {
    let z = (x - c) / s;
    (-0.5 * z * z).exp()
}

fn gauss_grad(x: f64, a: f64, c: f64, s: f64, out: &mut [f64]) {
    let z = (x - c) / s;
    let g = (-0.5 * z * z).exp();
    out[0] = g;
    out[1] = a * g * z / s;
    out[2] = a * g * z * z / s;
}

/// Largest relative deviation between analytic gradient components and an
/// O(h⁴) central difference over `draws` random points in a typical
/// parameter range. The rounding error of the difference quotient, ≈ε·|f|/h,
/// is not counted, so components that vanish analytically compare as equal.
pub fn jacobian_deviation(id: ModelId, draws: usize, seed: u64) -> f64 {
    deviation_of(id, draws, seed, |x, p, g| id.grad(x, p, g))
}

fn deviation_of(id: ModelId, draws: usize, seed: u64, grad: impl Fn(f64, &[f64], &mut [f64])) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = id.n_params();
    let mut g = vec![0.0; n];
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (x, p) = random_point(id, &mut rng);
        grad(x, &p, &mut g);
        let f = id.eval(x, &p).abs();
        for j in 0..n {
            let central = |h: f64| {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[j] += h;
                lo[j] -= h;
                (id.eval(x, &hi) - id.eval(x, &lo)) / (2.0 * h)
            };
            let h = 1e-7 * p[j].abs().max(1.0);
            // Richardson extrapolation
            let fd = (4.0 * central(0.5 * h) - central(h)) / 3.0;
            let rounding = 4.0 * f64::EPSILON * f / h;
            let scale = g[j].abs().max(fd.abs()).max(1e-300);
            worst = worst.max(((g[j] - fd).abs() - rounding).max(0.0) / scale);
        }
    }
    worst
}

fn random_point(id: ModelId, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match id {
        ModelId::Saturation => (u(0.5, 60.0), vec![u(1e6, 2e7), u(1.0, 20.0)]),
        ModelId::Gaussian => (u(-50.0, 50.0), vec![u(1.0, 100.0), u(-20.0, 20.0), u(5.0, 30.0), u(-1.0, 1.0)]),
        ModelId::LorentzianDip => (u(1.5, 2.3), vec![u(-0.1, 0.1), u(-0.05, 0.05), u(1.8, 1.95), u(0.1, 0.3)]),
        ModelId::ExpRecovery => (u(1e-5, 4e-2), vec![u(0.5, 2.0), u(1e-3, 1e-2)]),
        ModelId::Sinusoid180 => (u(0.0, 180.0), vec![u(0.0, 2.0), u(-1.0, 1.0), u(0.0, 180.0)]),
        ModelId::DoubleGaussian => (
            u(584.8, 585.4),
            vec![u(1.0, 5.0), u(584.95, 585.05), u(0.02, 0.05), u(0.3, 2.0), u(585.08, 585.16), u(0.02, 0.05), u(0.0, 0.1)],
        ),
        ModelId::ExpDecay => (u(0.0, 0.03), vec![u(0.5, 1.0), u(0.05, 0.5), u(1e-3, 1e-2)]),
        ModelId::G2Bunching => (u(-10.0, 10.0), vec![u(0.0, 0.5), u(0.8, 2.0), u(0.0, 0.5), u(5.0, 50.0)]),
        ModelId::G2Antibunching => (u(-10.0, 10.0), vec![u(0.0, 0.5), u(0.8, 2.0)]),
    }
}
