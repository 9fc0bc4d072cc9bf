//! Containers shared by the simulator and the analyses.

mod binned;
mod fit_result;
mod histogram;
mod spectrum;
mod timetags;

pub use binned::{background_stats, bin_timetags, BinnedTrace};
pub(crate) use binned::mean_and_sd;
pub use fit_result::{Estimate, FitResult, Goodness, Param};
pub use histogram::{linear_edges, log_edges, make_histogram, Histogram};
pub use spectrum::{nm_to_thz, thz_to_nm, Spectrum, C_NM_THZ};
pub use timetags::{TimeTagStream, TICKS_PER_NS, TICKS_PER_SECOND};
