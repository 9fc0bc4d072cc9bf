use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Speed of light in nm·THz.
pub const C_NM_THZ: f64 = 299_792.458;

pub fn nm_to_thz(nm: f64) -> f64 {
    C_NM_THZ / nm
}

pub fn thz_to_nm(thz: f64) -> f64 {
    C_NM_THZ / thz
}

/// Counts on a strictly increasing wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    wavelengths: Vec<f64>,
    counts: Vec<f64>,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        if wavelengths.len() != counts.len() {
            return Err(invalid("wavelength and count arrays differ in length"));
        }
        if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("wavelengths must be strictly increasing"));
        }
        if counts.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(invalid("spectrum counts must be finite and non-negative"));
        }
        Ok(Self {
            wavelengths,
            counts,
        })
    }

    /// Wavelengths in nm.
    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Trapezoidal area over `[lo, hi]` nm, restricted to grid points.
    pub fn area(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .wavelengths
            .iter()
            .zip(&self.counts)
            .filter(|(&w, _)| w >= lo && w <= hi)
            .map(|(&w, &c)| (w, c))
            .collect();
        pts.windows(2)
            .map(|p| 0.5 * (p[0].1 + p[1].1) * (p[1].0 - p[0].0))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "wavelength_nm,counts")?;
        for (l, c) in self.wavelengths.iter().zip(&self.counts) {
            writeln!(w, "{l:.6},{c:.6e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut wl = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("line {}: expected wavelength,counts", lineno + 1));
            let (a, b) = line.split_once(',').ok_or_else(bad)?;
            wl.push(a.trim().parse().map_err(|_| bad())?);
            counts.push(b.trim().parse().map_err(|_| bad())?);
        }
        Self::new(wl, counts)
    }
}
