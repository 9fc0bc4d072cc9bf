//! Command-line driver: configuration, run directories and manifests.

pub mod analyze;
pub mod closed_loop;
pub mod config;
pub mod exit;
pub mod io;
pub mod report;
pub mod simulate;
