use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::timetags::{TimeTagStream, TICKS_PER_SECOND};
use crate::error::{invalid, Error, Result};

/// Photon counts in consecutive fixed-width time bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedTrace {
    bin_width: f64,
    counts: Vec<u64>,
    t0: f64,
}

impl BinnedTrace {
    pub fn new(bin_width: f64, counts: Vec<u64>, t0: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(invalid(format!("bin width must be positive, got {bin_width}")));
        }
        if counts.is_empty() {
            return Err(invalid("a trace needs at least one bin"));
        }
        Ok(Self {
            bin_width,
            counts,
            t0,
        })
    }

    /// Bin width in seconds.
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn duration(&self) -> f64 {
        self.bin_width * self.counts.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.total() as f64 / self.len() as f64
    }

    /// Mean count rate in counts per second.
    pub fn mean_rate(&self) -> f64 {
        self.mean() / self.bin_width
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "t_start_s,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:.9e},{}", self.t0 + i as f64 * self.bin_width, c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse_err = |what: &str| Error::Format(format!("line {}: bad {what}", lineno + 1));
            let t: f64 = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("time"))?;
            let c: u64 = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("count"))?;
            starts.push(t);
            counts.push(c);
        }
        if starts.len() < 2 {
            return Err(Error::Format("trace CSV needs at least two rows".into()));
        }
        let bw = (starts[starts.len() - 1] - starts[0]) / (starts.len() - 1) as f64;
        Self::new(bw, counts, starts[0])
    }
}

/// Counts the timestamps in each `[i·bw, (i+1)·bw)` window from time zero.
/// The trailing partial bin is dropped.
pub fn bin_timetags(stream: &TimeTagStream, bin_width: f64) -> Result<BinnedTrace> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(invalid(format!("bin width must be positive, got {bin_width}")));
    }
    let bw = (bin_width * TICKS_PER_SECOND).round() as u64;
    if bw == 0 {
        return Err(invalid("bin width is below the time-tag resolution"));
    }
    let n = (stream.duration() / bw) as usize;
    if n == 0 {
        return Err(invalid("stream is shorter than one bin"));
    }
    let mut counts = vec![0u64; n];
    for &t in stream.timestamps() {
        let i = (t / bw) as usize;
        if i < n {
            counts[i] += 1;
        }
    }
    BinnedTrace::new(bw as f64 / TICKS_PER_SECOND, counts, 0.0)
}

/// Sample mean and sample standard deviation (n − 1 denominator) of the
/// counts in `region`.
pub fn background_stats(trace: &BinnedTrace, region: Range<usize>) -> Result<(f64, f64)> {
    if region.is_empty() {
        return Err(invalid("background region is empty"));
    }
    if region.end > trace.len() {
        return Err(invalid(format!(
            "background region {region:?} exceeds trace length {}",
            trace.len()
        )));
    }
    Ok(mean_and_sd(&trace.counts()[region]))
}

pub(crate) fn mean_and_sd(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&c| c as f64).sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
