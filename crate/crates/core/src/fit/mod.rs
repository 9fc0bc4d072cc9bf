//! Least-squares engine and the named model fits.

mod angle;
mod envelope;
mod lm;
mod models;
mod saturation;
mod spectrum;
mod spin;

pub use angle::{fit_sinusoid_180, EXTREMA_UNIDENTIFIABLE};
pub use envelope::{fit_gaussian_histogram, ple_peak_positions, SIGMA_UNRESOLVED};
pub(crate) use lm::package_solution;
pub use lm::{levenberg_marquardt, nlls_fit, weighted_line, LmSolution, ModelSpec, MAX_ITERATIONS};
pub use models::{jacobian_deviation, ModelId};
pub use saturation::{fit_saturation, qe_lower_bound, saturation_points, QeBound, SaturationPoints, QE_FORMULA};
pub use spectrum::{
    analyze_spectrum, two_line_anticorrelation, Anticorrelation, Line, SpectrumAnalysis, SpectrumOptions,
};
pub use spin::{fit_odmr, fit_pump_probe, PumpProbeFit, CONTRAST_ZERO, NON_MONOTONE};
