//! Closed-loop verification: simulate with known generator parameters,
//! run the analyses, and compare estimates with the truth.

mod optics;
mod properties;
mod scenarios;
mod spin;
mod switching;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use scenarios::*;

pub const DEFAULT_SEED: u64 = 20_240_611;

pub const SUITES: [&str; 10] = [
    "A1-saturation",
    "A2-ple",
    "A3-off-rates",
    "A4-mixture",
    "A5-g2",
    "A6-pump-probe",
    "A7-odmr",
    "A8-angle",
    "A9-qe",
    "A10-properties",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// |estimate − truth| ≤ value·|truth|
    Relative(f64),
    /// |estimate − truth| ≤ value
    Absolute(f64),
    /// estimate < truth
    Below,
    /// estimate > truth
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: String,
    pub quantity: String,
    pub truth: f64,
    pub estimate: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn new(criterion: &str, quantity: &str, truth: f64, estimate: f64, tolerance: Tolerance) -> Self {
        let pass = match tolerance {
            Tolerance::Relative(r) => (estimate - truth).abs() <= r * truth.abs(),
            Tolerance::Absolute(a) => (estimate - truth).abs() <= a,
            Tolerance::Below => estimate < truth,
            Tolerance::Above => estimate > truth,
        };
        Self {
            criterion: criterion.into(),
            quantity: quantity.into(),
            truth,
            estimate,
            tolerance,
            pass,
            note: None,
        }
    }

    /// A boolean property; truth and estimate are recorded as 1/0.
    pub fn holds(criterion: &str, quantity: &str, ok: bool) -> Self {
        Self::new(criterion, quantity, 1.0, if ok { 1.0 } else { 0.0 }, Tolerance::Absolute(0.0))
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// One line for terminal output.
    pub fn summary(&self) -> String {
        let tol = match self.tolerance {
            Tolerance::Relative(r) => format!("±{}%", r * 100.0),
            Tolerance::Absolute(a) => format!("±{a}"),
            Tolerance::Below => "<".into(),
            Tolerance::Above => ">".into(),
        };
        format!(
            "{} {:<4} {:<44} truth {:<12.6} estimate {:<12.6} tol {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.quantity,
            self.truth,
            self.estimate,
            tol
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Optional output directory for the data behind a suite.
#[derive(Debug, Clone, Default)]
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn none() -> Self {
        Self { dir: None }
    }

    pub fn to_dir(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn is_active(&self) -> bool {
        self.dir.is_some()
    }

    pub fn write(&self, name: &str, f: impl FnOnce(File) -> Result<()>) -> Result<()> {
        match &self.dir {
            Some(d) => f(File::create(d.join(name))?),
            None => Ok(()),
        }
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        self.write(name, |f| {
            let mut w = BufWriter::new(f);
            serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
            writeln!(w)?;
            w.flush()?;
            Ok(())
        })
    }

    /// Writes `header` then one comma-separated line per row.
    pub fn table(&self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        self.write(name, |f| {
            let mut w = BufWriter::new(f);
            writeln!(w, "{header}")?;
            for r in rows {
                let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", line.join(","))?;
            }
            w.flush()?;
            Ok(())
        })
    }
}

pub fn is_suite(name: &str) -> bool {
    SUITES.contains(&name)
}

/// Runs one named suite; data and the report go to `sink` when active.
pub fn run_suite(name: &str, seed: u64, sink: &Sink) -> Result<SuiteReport> {
    let checks = match name {
        "A1-saturation" => optics::saturation(seed, sink)?,
        "A2-ple" => optics::ple_envelope(seed, sink)?,
        "A3-off-rates" => switching::off_rates(seed, sink)?,
        "A4-mixture" => switching::mixture(seed, sink)?,
        "A5-g2" => optics::g2(seed, sink)?,
        "A6-pump-probe" => spin::pump_probe(seed, sink)?,
        "A7-odmr" => spin::odmr(seed, sink)?,
        "A8-angle" => spin::angle(seed, sink)?,
        "A9-qe" => optics::qe(sink)?,
        "A10-properties" => properties::properties(seed, sink)?,
        other => {
            return Err(invalid(format!(
                "unknown suite `{other}`; available: {}",
                SUITES.join(", ")
            )))
        }
    };
    let report = SuiteReport {
        suite: name.into(),
        seed,
        passed: checks.iter().all(|c| c.pass),
        checks,
    };
    sink.json("report.json", &report)?;
    Ok(report)
}
