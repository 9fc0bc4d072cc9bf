//! Photophysics simulator and statistical analyses for a single solid-state
//! quantum emitter with spectral diffusion, two radiative pathways and a
//! spin-dependent metastable shelf.
//!
//! The simulator produces binned traces, photon time tags, spectra and
//! protocol records; the analysis modules extract rates, mixture-model duty
//! cycles, g² antibunching and fitted line shapes from them, so that every
//! parameter injected into the simulator can be checked for recovery.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod correlation;
pub mod data;
pub mod fit;
pub mod closed_loop;
pub mod intervals;
pub mod mixture;
pub mod sim;

pub use error::{Error, Result};
