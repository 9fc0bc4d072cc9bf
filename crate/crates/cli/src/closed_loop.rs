use std::path::Path;

use photodyn_core::closed_loop::{is_suite, run_suite, Sink, SuiteReport, SUITES};

use crate::exit::{CliError, CliResult};

/// `all` or one suite name.
pub fn resolve(suite: &str) -> CliResult<Vec<&'static str>> {
    if suite == "all" {
        return Ok(SUITES.to_vec());
    }
    if !is_suite(suite) {
        return Err(CliError::Usage(format!(
            "unknown suite `{suite}`; available: all, {}",
            SUITES.join(", ")
        )));
    }
    Ok(SUITES.iter().copied().filter(|s| *s == suite).collect())
}

/// Runs the suites, printing one line per check. With `out`, each suite's
/// data and `report.json` go to `out/<suite>`.
pub fn closed_loop(suite: &str, seed: u64, out: Option<&Path>) -> CliResult<Vec<SuiteReport>> {
    let mut reports = Vec::new();
    for name in resolve(suite)? {
        let sink = match out {
            Some(dir) => Sink::to_dir(&dir.join(name))?,
            None => Sink::none(),
        };
        let report = run_suite(name, seed, &sink)?;
        for c in &report.checks {
            println!("{}", c.summary());
            if let Some(note) = &c.note {
                println!("     {note}");
            }
        }
        println!("{} {name}", if report.passed { "PASSED" } else { "FAILED" });
        reports.push(report);
    }
    Ok(reports)
}
