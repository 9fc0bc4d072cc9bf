use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Counts over contiguous left-closed bins `[edges[i], edges[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
    /// Values that fell outside `[edges[0], edges[last])`.
    ignored: u64,
}

impl Histogram {
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        check_edges(&edges)?;
        if counts.len() + 1 != edges.len() {
            return Err(invalid(format!(
                "{} edges cannot hold {} bins",
                edges.len(),
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(Self {
            edges,
            counts,
            total,
            ignored: 0,
        })
    }

    /// Unit-width bins centered on 0, 1, …, max(values).
    pub fn of_integers(values: &[u64]) -> Self {
        let max = values.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max + 1];
        for &v in values {
            counts[v as usize] += 1;
        }
        let edges = (0..=max + 1).map(|k| k as f64 - 0.5).collect();
        Self {
            edges,
            total: values.len() as u64,
            counts,
            ignored: 0,
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// `x_unit` names the unit of the bin edges in the CSV header, e.g. `s`.
    pub fn write_csv<W: Write>(&self, out: W, x_unit: &str) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "left_{x_unit},right_{x_unit},counts")?;
        for (e, c) in self.edges.windows(2).zip(&self.counts) {
            writeln!(w, "{:.9e},{:.9e},{}", e[0], e[1], c)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid("a histogram needs at least two edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(invalid("histogram edges must be finite"));
    }
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("histogram edges must be strictly increasing"));
    }
    Ok(())
}

/// Left-closed binning. Values outside the edge range (including the last
/// edge itself) are counted in [`Histogram::ignored`].
pub fn make_histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    check_edges(edges)?;
    let mut counts = vec![0u64; edges.len() - 1];
    let mut ignored = 0;
    let (lo, hi) = (edges[0], edges[edges.len() - 1]);
    for &v in values {
        if !(v >= lo && v < hi) {
            ignored += 1;
            continue;
        }
        // first edge strictly greater than v, minus one
        let i = edges.partition_point(|&e| e <= v) - 1;
        counts[i] += 1;
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        total: values.len() as u64 - ignored,
        counts,
        ignored,
    })
}

pub fn linear_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let step = (hi - lo) / bins as f64;
    (0..=bins).map(|i| lo + step * i as f64).collect()
}

pub fn log_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / bins as f64;
    (0..=bins).map(|i| (a + step * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value() {
        let h = make_histogram(&[0.5], &[0.0, 1.0]).unwrap();
        assert_eq!(h.counts(), &[1]);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn empty_values() {
        let h = make_histogram(&[], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[0, 0]);
    }

    #[test]
    fn left_closed_and_ignored() {
        let h = make_histogram(&[0.0, 1.0, 1.5, 2.0, -0.1, f64::NAN], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts(), &[1, 2]);
        assert_eq!(h.ignored(), 3);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(make_histogram(&[1.0], &[1.0, 0.0]).is_err());
        assert!(make_histogram(&[1.0], &[1.0, 1.0]).is_err());
        assert!(make_histogram(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn integer_histogram() {
        let h = Histogram::of_integers(&[0, 2, 2, 3]);
        assert_eq!(h.counts(), &[1, 0, 2, 1]);
        assert_eq!(h.centers(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn log_edges_span() {
        let e = log_edges(1e-6, 1e-3, 3);
        assert!((e[1] - 1e-5).abs() < 1e-18);
        assert!((e[3] - 1e-3).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn total_counts_in_range_values(
            values in proptest::collection::vec(-5.0f64..15.0, 0..300),
            bins in 1usize..20,
        ) {
            let edges = linear_edges(0.0, 10.0, bins);
            let h = make_histogram(&values, &edges).unwrap();
            let in_range = values.iter().filter(|&&v| (0.0..edges[bins]).contains(&v)).count() as u64;
            proptest::prop_assert_eq!(h.total(), in_range);
            proptest::prop_assert_eq!(h.counts().iter().sum::<u64>(), h.total());
            proptest::prop_assert_eq!(h.total() + h.ignored(), values.len() as u64);
        }
    }
}
