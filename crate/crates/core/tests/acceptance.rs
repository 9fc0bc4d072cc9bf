//! Every closed-loop acceptance criterion at its stated tolerance.
//! Prints one PASS/FAIL line per criterion, then the individual checks.

use std::io::Write;
use std::time::Instant;

use photodyn_core::closed_loop::{run_suite, Check, Sink, DEFAULT_SEED, SUITES};

#[test]
fn acceptance_criteria() {
    let mut lines = Vec::new();
    let mut details = Vec::new();
    let mut failed = Vec::new();
    for suite in SUITES {
        let criterion = suite.split('-').next().unwrap();
        let start = Instant::now();
        let (pass, checks): (bool, Vec<Check>) = match run_suite(suite, DEFAULT_SEED, &Sink::none()) {
            Ok(r) => (r.passed, r.checks),
            Err(e) => {
                details.push(format!("     {suite}: error: {e}"));
                (false, Vec::new())
            }
        };
        let secs = start.elapsed().as_secs_f64();
        // every criterion runs at desk scale
        let fast = secs < 60.0;
        let ok = pass && fast;
        lines.push(format!(
            "{} {criterion:<4} {suite:<16} {} checks, {secs:.1} s{}",
            if ok { "PASS" } else { "FAIL" },
            checks.len(),
            if fast { "" } else { " (over 60 s)" }
        ));
        for c in &checks {
            details.push(format!("     {}", c.summary()));
            if let Some(n) = &c.note {
                details.push(format!("          {n}"));
            }
        }
        if !ok {
            failed.push(suite);
        }
    }
    // written past the harness capture so the lines show in every run
    let mut out = std::io::stdout().lock();
    let mut report = format!("\nacceptance criteria, seed {DEFAULT_SEED}\n");
    for l in lines.iter().chain([String::new()].iter()).chain(&details) {
        report.push_str(l);
        report.push('\n');
    }
    out.write_all(report.as_bytes()).unwrap();
    out.flush().unwrap();
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
