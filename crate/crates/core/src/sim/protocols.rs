//! Measurement protocols built on the two-tier engine.
//!
//! Sweep points run in parallel, each on its own RNG substream
//! (seed, point, 0) for the slow dynamics and (seed, point, 1) for the
//! Poisson counting noise, so records do not depend on the thread count.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::drive::{LaserDrive, MwTone, PulseSequence};
use super::engine::{poisson_draw, simulate_trace_with_truth, BinAccumulator, TraceTruth, TwoTier};
use super::model::{Band, DetectionModel, EmitterModel};
use super::photon::simulate_timetags_capped;
use super::seed::{substream, substream_seed};
use super::state::Pathway;
use crate::data::{nm_to_thz, BinnedTrace, Spectrum, TimeTagStream, C_NM_THZ};
use crate::error::{invalid, Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn increasing(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{name} must be finite and strictly increasing")));
    }
    Ok(())
}

fn engine_for<'a>(model: &'a EmitterModel, detection: &'a DetectionModel, seed: u64, point: u64) -> TwoTier<'a> {
    TwoTier::new(model, detection, substream(seed, point, 0))
}

/// Repeated laser-frequency scans. Every scan starts from an independent
/// environment, as after a long dark wait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PleSweep {
    pub drive: LaserDrive,
    pub start_ghz: f64,
    pub stop_ghz: f64,
    pub step_ghz: f64,
    pub dwell_s: f64,
    pub scans: usize,
}

impl PleSweep {
    pub fn detunings(&self) -> Vec<f64> {
        let n = ((self.stop_ghz - self.start_ghz) / self.step_ghz + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start_ghz + i as f64 * self.step_ghz).collect()
    }

    fn validate(&self) -> Result<()> {
        self.drive.validate()?;
        positive("ple.step_ghz", self.step_ghz)?;
        positive("ple.dwell_s", self.dwell_s)?;
        if !(self.stop_ghz > self.start_ghz) {
            return Err(invalid("ple.stop_ghz must exceed start_ghz"));
        }
        if self.scans == 0 {
            return Err(invalid("ple.scans must be at least 1"));
        }
        if self.drive.p_res_uw <= 0.0 {
            return Err(invalid("a PLE scan needs resonant power"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleRecord {
    pub detunings_ghz: Vec<f64>,
    pub dwell_s: f64,
    /// counts[scan][point]
    pub counts: Vec<Vec<u64>>,
}

impl PleRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "scan,detuning_ghz,counts,rate_cps")?;
        for (s, scan) in self.counts.iter().enumerate() {
            for (d, c) in self.detunings_ghz.iter().zip(scan) {
                writeln!(w, "{s},{d:.6},{c},{:.6e}", *c as f64 / self.dwell_s)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_ple(model: &EmitterModel, detection: &DetectionModel, p: &PleSweep, seed: u64) -> Result<PleRecord> {
    p.validate()?;
    let axis = p.detunings();
    let bg = detection.background_rate_cps * p.dwell_s;
    let counts = (0..p.scans)
        .into_par_iter()
        .map(|scan| {
            let mut engine = engine_for(model, detection, seed, scan as u64);
            let mut rng = substream(seed, scan as u64, 1);
            axis.iter()
                .map(|&d| {
                    let drive = LaserDrive {
                        detuning_ghz: d,
                        ..p.drive
                    };
                    poisson_draw(engine.integrate(&drive, p.dwell_s) + bg, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(PleRecord {
        detunings_ghz: axis,
        dwell_s: p.dwell_s,
        counts,
    })
}

/// Binned traces at a list of resonant powers plus a laser-off reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSweep {
    pub drive: LaserDrive,
    pub powers_uw: Vec<f64>,
    pub duration_s: f64,
    pub bin_s: f64,
    pub background_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationRecord {
    pub powers_uw: Vec<f64>,
    pub traces: Vec<BinnedTrace>,
    pub background: BinnedTrace,
}

impl SaturationRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "series,power_uw,t_start_s,counts")?;
        let rows = self
            .powers_uw
            .iter()
            .zip(&self.traces)
            .map(|(p, t)| ("sweep", *p, t))
            .chain(std::iter::once(("background", 0.0, &self.background)));
        for (series, p, t) in rows {
            for (i, c) in t.counts().iter().enumerate() {
                writeln!(w, "{series},{p},{:.9},{c}", t.t0() + i as f64 * t.bin_width())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_saturation(
    model: &EmitterModel,
    detection: &DetectionModel,
    p: &SaturationSweep,
    seed: u64,
) -> Result<SaturationRecord> {
    p.drive.validate()?;
    increasing("saturation.powers_uw", &p.powers_uw)?;
    if p.powers_uw[0] < 0.0 {
        return Err(invalid("saturation powers must be non-negative"));
    }
    positive("saturation.duration_s", p.duration_s)?;
    positive("saturation.background_s", p.background_s)?;
    let n = p.powers_uw.len();
    let mut traces = (0..=n)
        .into_par_iter()
        .map(|i| {
            let (drive, duration) = if i < n {
                (
                    LaserDrive {
                        p_res_uw: p.powers_uw[i],
                        ..p.drive
                    },
                    p.duration_s,
                )
            } else {
                (p.drive.dark(), p.background_s)
            };
            let seed = substream_seed(seed, i as u64, 0);
            simulate_trace_with_truth(model, detection, &drive, duration, p.bin_s, seed, f64::INFINITY)
                .map(|(t, _)| t)
        })
        .collect::<Result<Vec<_>>>()?;
    let background = traces.pop().unwrap();
    Ok(SaturationRecord {
        powers_uw: p.powers_uw.clone(),
        traces,
        background,
    })
}

/// Pump, dark wait τ, recorded readout; repeated per delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpProbe {
    pub pump: LaserDrive,
    /// Extra pumping after each readout; zero when the readout itself
    /// re-initializes the shelf.
    #[serde(default)]
    pub pump_s: f64,
    pub readout: LaserDrive,
    pub readout_s: f64,
    pub bin_s: f64,
    pub delays_s: Vec<f64>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpProbeRecord {
    pub delays_s: Vec<f64>,
    pub bin_s: f64,
    pub repeats: usize,
    /// Readout counts summed over repeats, transients[delay][bin].
    pub transients: Vec<Vec<u64>>,
}

impl PumpProbeRecord {
    pub fn times(&self) -> Vec<f64> {
        let n = self.transients.first().map_or(0, |t| t.len());
        (0..n).map(|i| (i as f64 + 0.5) * self.bin_s).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "delay_s,t_s,counts")?;
        let times = self.times();
        for (d, tr) in self.delays_s.iter().zip(&self.transients) {
            for (t, c) in times.iter().zip(tr) {
                writeln!(w, "{d:.6e},{t:.6e},{c}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_pump_probe(model: &EmitterModel, detection: &DetectionModel, p: &PumpProbe, seed: u64) -> Result<PumpProbeRecord> {
    p.pump.validate()?;
    p.readout.validate()?;
    increasing("pump_probe.delays_s", &p.delays_s)?;
    if p.delays_s[0] < 0.0 {
        return Err(invalid("pump-probe delays must be non-negative"));
    }
    positive("pump_probe.readout_s", p.readout_s)?;
    positive("pump_probe.bin_s", p.bin_s)?;
    if !(p.pump_s >= 0.0) || p.repeats == 0 {
        return Err(invalid("pump_probe needs pump_s ≥ 0 and at least one repeat"));
    }
    let nbins = (p.readout_s / p.bin_s * (1.0 + 1e-12)).floor() as usize;
    if nbins < 2 {
        return Err(invalid("pump_probe readout must span at least two bins"));
    }
    let dark = p.pump.dark();
    let transients = p
        .delays_s
        .par_iter()
        .enumerate()
        .map(|(i, &delay)| {
            let mut engine = engine_for(model, detection, seed, i as u64);
            let mut acc = BinAccumulator::new(0.0, p.bin_s, nbins);
            // initialize with one full pump + readout before recording
            engine.run(&p.pump, p.pump_s.max(p.readout_s), |_, _, _, _| {});
            for _ in 0..p.repeats {
                if delay > 0.0 {
                    engine.run(&dark, delay, |_, _, _, _| {});
                }
                acc.t0 = engine.t;
                engine.run(&p.readout, p.readout_s, |s, l, r, _| acc.add(s, l, r));
                if p.pump_s > 0.0 {
                    engine.run(&p.pump, p.pump_s, |_, _, _, _| {});
                }
            }
            let bg = detection.background_rate_cps * p.bin_s * p.repeats as f64;
            let mut rng = substream(seed, i as u64, 1);
            acc.expected.iter().map(|&l| poisson_draw(l + bg, &mut rng)).collect()
        })
        .collect();
    Ok(PumpProbeRecord {
        delays_s: p.delays_s.clone(),
        bin_s: p.bin_s,
        repeats: p.repeats,
        transients,
    })
}

/// MW frequency sweep with interleaved MW-on and MW-off dwell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrSweep {
    pub drive: LaserDrive,
    pub powers_dbm: Vec<f64>,
    pub frequencies_ghz: Vec<f64>,
    /// Total dwell per frequency in each MW state.
    pub dwell_s: f64,
    /// Number of on/off alternations within the dwell.
    #[serde(default = "default_chunks")]
    pub chunks: usize,
}

fn default_chunks() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrRecord {
    pub powers_dbm: Vec<f64>,
    pub frequencies_ghz: Vec<f64>,
    pub dwell_s: f64,
    /// counts_on[power][frequency]
    pub counts_on: Vec<Vec<u64>>,
    pub counts_off: Vec<Vec<u64>>,
}

impl OdmrRecord {
    /// Signed contrast (on − off)/off per power and frequency.
    pub fn contrast(&self) -> Vec<Vec<f64>> {
        self.counts_on
            .iter()
            .zip(&self.counts_off)
            .map(|(on, off)| {
                on.iter()
                    .zip(off)
                    .map(|(&a, &b)| if b == 0 { 0.0 } else { (a as f64 - b as f64) / b as f64 })
                    .collect()
            })
            .collect()
    }

    /// Poisson error of each contrast value.
    pub fn contrast_errors(&self) -> Vec<Vec<f64>> {
        self.counts_on
            .iter()
            .zip(&self.counts_off)
            .map(|(on, off)| {
                on.iter()
                    .zip(off)
                    .map(|(&a, &b)| {
                        let (a, b) = (a.max(1) as f64, b.max(1) as f64);
                        a / b * (1.0 / a + 1.0 / b).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "power_dbm,frequency_ghz,counts_on,counts_off,contrast")?;
        let contrast = self.contrast();
        for (k, p) in self.powers_dbm.iter().enumerate() {
            for (j, f) in self.frequencies_ghz.iter().enumerate() {
                writeln!(
                    w,
                    "{p},{f:.6},{},{},{:.6e}",
                    self.counts_on[k][j], self.counts_off[k][j], contrast[k][j]
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_odmr(model: &EmitterModel, detection: &DetectionModel, p: &OdmrSweep, seed: u64) -> Result<OdmrRecord> {
    p.drive.validate()?;
    increasing("odmr.frequencies_ghz", &p.frequencies_ghz)?;
    if p.powers_dbm.is_empty() || p.powers_dbm.iter().any(|v| !v.is_finite()) {
        return Err(invalid("odmr.powers_dbm must be a non-empty list of finite values"));
    }
    positive("odmr.dwell_s", p.dwell_s)?;
    if p.chunks == 0 {
        return Err(invalid("odmr.chunks must be at least 1"));
    }
    let nf = p.frequencies_ghz.len();
    let piece = p.dwell_s / p.chunks as f64;
    let bg = detection.background_rate_cps * p.dwell_s;
    let points: Vec<(u64, u64)> = (0..p.powers_dbm.len() * nf)
        .into_par_iter()
        .map(|i| {
            let tone = MwTone {
                frequency_ghz: p.frequencies_ghz[i % nf],
                power_dbm: p.powers_dbm[i / nf],
                on: true,
            };
            let on = LaserDrive {
                mw: Some(tone),
                ..p.drive
            };
            let off = LaserDrive { mw: None, ..p.drive };
            let mut engine = engine_for(model, detection, seed, i as u64);
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..p.chunks {
                a += engine.integrate(&on, piece);
                b += engine.integrate(&off, piece);
            }
            let mut rng = substream(seed, i as u64, 1);
            (poisson_draw(a + bg, &mut rng), poisson_draw(b + bg, &mut rng))
        })
        .collect();
    let (mut counts_on, mut counts_off) = (Vec::new(), Vec::new());
    for row in points.chunks(nf) {
        counts_on.push(row.iter().map(|x| x.0).collect());
        counts_off.push(row.iter().map(|x| x.1).collect());
    }
    Ok(OdmrRecord {
        powers_dbm: p.powers_dbm.clone(),
        frequencies_ghz: p.frequencies_ghz.clone(),
        dwell_s: p.dwell_s,
        counts_on,
        counts_off,
    })
}

/// Integrated count rate versus in-plane magnet angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleSweep {
    pub drive: LaserDrive,
    pub angles_deg: Vec<f64>,
    pub dwell_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub angles_deg: Vec<f64>,
    pub dwell_s: f64,
    pub counts: Vec<u64>,
}

impl AngleRecord {
    pub fn rates(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.dwell_s).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "theta_deg,counts,rate_cps")?;
        for ((a, c), r) in self.angles_deg.iter().zip(&self.counts).zip(self.rates()) {
            writeln!(w, "{a},{c},{r:.6e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_angle(model: &EmitterModel, detection: &DetectionModel, p: &AngleSweep, seed: u64) -> Result<AngleRecord> {
    p.drive.validate()?;
    increasing("angle_sweep.angles_deg", &p.angles_deg)?;
    positive("angle_sweep.dwell_s", p.dwell_s)?;
    let bg = detection.background_rate_cps * p.dwell_s;
    let counts = p
        .angles_deg
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let drive = LaserDrive {
                theta_deg: theta,
                ..p.drive
            };
            let mut engine = engine_for(model, detection, seed, i as u64);
            let expected = engine.integrate(&drive, p.dwell_s);
            poisson_draw(expected + bg, &mut substream(seed, i as u64, 1))
        })
        .collect();
    Ok(AngleRecord {
        angles_deg: p.angles_deg.clone(),
        dwell_s: p.dwell_s,
        counts,
    })
}

/// Consecutive spectrometer frames of the full emission spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSeries {
    pub drive: LaserDrive,
    pub frames: usize,
    pub frame_s: f64,
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub step_nm: f64,
    /// Gaussian σ of the spectrometer response.
    pub resolution_nm: f64,
    /// Dark counts per pixel and frame.
    pub pixel_background: f64,
}

impl Default for SpectralSeries {
    fn default() -> Self {
        Self {
            drive: LaserDrive::green(240.0),
            frames: 100,
            frame_s: 1.0,
            lambda_min_nm: 570.0,
            lambda_max_nm: 700.0,
            step_nm: 0.01,
            resolution_nm: 0.03,
            pixel_background: 0.0,
        }
    }
}

fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Spectral density (per nm) of one photon emitted by `pathway`, as seen
/// through a spectrometer of Gaussian resolution `resolution_nm`.
pub fn emission_profile(model: &EmitterModel, pathway: Pathway, resolution_nm: f64, lambda_nm: f64) -> f64 {
    let sh = &model.spectral;
    let zpl = sh.zpl_center_nm(pathway);
    let inh_nm = zpl * zpl / C_NM_THZ * model.sigma_inh_ghz * 1e-3;
    let sigma_zpl = resolution_nm.hypot(inh_nm);
    let dw = model.debye_waller;
    let f_zpl = nm_to_thz(zpl);
    let f = nm_to_thz(lambda_nm);
    let acoustic = gauss(f, f_zpl - sh.acoustic_gap_thz, sh.acoustic_sigma_thz) * C_NM_THZ / (lambda_nm * lambda_nm);
    let n_opt = sh.optical_sidebands_nm.len();
    let (a_frac, optical) = if n_opt == 0 {
        (1.0, 0.0)
    } else {
        let shift = zpl - sh.zpl_nm;
        let o: f64 = sh
            .optical_sidebands_nm
            .iter()
            .map(|&c| gauss(lambda_nm, c + shift, sh.optical_sideband_sigma_nm))
            .sum::<f64>()
            / n_opt as f64;
        (sh.acoustic_fraction, o)
    };
    dw * gauss(lambda_nm, zpl, sigma_zpl) + (1.0 - dw) * (a_frac * acoustic + (1.0 - a_frac) * optical)
}

pub fn run_spectral_series(
    model: &EmitterModel,
    detection: &DetectionModel,
    p: &SpectralSeries,
    seed: u64,
) -> Result<Vec<Spectrum>> {
    p.drive.validate()?;
    positive("spectral_series.frame_s", p.frame_s)?;
    positive("spectral_series.step_nm", p.step_nm)?;
    positive("spectral_series.resolution_nm", p.resolution_nm)?;
    if p.frames == 0 || !(p.lambda_max_nm > p.lambda_min_nm) || !(p.pixel_background >= 0.0) {
        return Err(invalid("spectral_series needs frames ≥ 1, a valid wavelength range and background ≥ 0"));
    }
    // the spectrometer disperses everything the collection path delivers
    let det = DetectionModel {
        band: Band::All,
        ..*detection
    };
    let n = ((p.lambda_max_nm - p.lambda_min_nm) / p.step_nm).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| p.lambda_min_nm + i as f64 * p.step_nm).collect();
    let profiles: Vec<Vec<f64>> = [Pathway::P1, Pathway::P2]
        .iter()
        .map(|&pw| grid.iter().map(|&l| emission_profile(model, pw, p.resolution_nm, l) * p.step_nm).collect())
        .collect();
    // frames are consecutive, so the slow dynamics run sequentially
    let mut engine = engine_for(model, &det, seed, 0);
    let mut photons = Vec::with_capacity(p.frames);
    for _ in 0..p.frames {
        let mut per = [0.0f64; 2];
        engine.run(&p.drive, p.frame_s, |_, len, rate, env| {
            per[(env.pathway == Pathway::P2) as usize] += rate * len;
        });
        photons.push(per);
    }
    photons
        .par_iter()
        .enumerate()
        .map(|(k, per)| {
            let mut rng = substream(seed, k as u64, 1);
            let counts = (0..n)
                .map(|i| {
                    let lam = per[0] * profiles[0][i] + per[1] * profiles[1][i] + p.pixel_background;
                    poisson_draw(lam, &mut rng) as f64
                })
                .collect();
            Spectrum::new(grid.clone(), counts)
        })
        .collect()
}

pub fn write_spectra_csv<W: Write>(frames: &[Spectrum], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "frame,wavelength_nm,counts")?;
    for (k, s) in frames.iter().enumerate() {
        for (l, c) in s.wavelengths().iter().zip(s.counts()) {
            writeln!(w, "{k},{l:.5},{c}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_spectra_csv`]; frames must be numbered 0, 1, … in order.
pub fn read_spectra_csv<R: Read>(input: R) -> Result<Vec<Spectrum>> {
    let mut frames: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: expected frame,wavelength_nm,counts", lineno + 1));
        let mut parts = line.split(',');
        let mut field = || parts.next().map(str::trim).ok_or_else(bad);
        let k: usize = field()?.parse().map_err(|_| bad())?;
        let l: f64 = field()?.parse().map_err(|_| bad())?;
        let c: f64 = field()?.parse().map_err(|_| bad())?;
        if k == frames.len() {
            frames.push((Vec::new(), Vec::new()));
        } else if k + 1 != frames.len() {
            return Err(bad());
        }
        let f = frames.last_mut().unwrap();
        f.0.push(l);
        f.1.push(c);
    }
    frames.into_iter().map(|(l, c)| Spectrum::new(l, c)).collect()
}

/// Recorded segments of a pulse sequence, summed over repeats.
pub fn run_sequence(
    model: &EmitterModel,
    detection: &DetectionModel,
    seq: &PulseSequence,
    seed: u64,
) -> Result<Vec<BinnedTrace>> {
    seq.validate()?;
    let mut engine = engine_for(model, detection, seed, 0);
    let mut accs: Vec<Option<BinAccumulator>> = seq
        .segments
        .iter()
        .map(|s| {
            s.record_bin_s.map(|b| {
                BinAccumulator::new(0.0, b, ((s.duration_s / b) * (1.0 + 1e-12)).floor() as usize)
            })
        })
        .collect();
    if accs.iter().all(Option::is_none) {
        return Err(invalid("pulse sequence records no segment; set record_bin_s"));
    }
    for _ in 0..seq.repeats {
        for (seg, acc) in seq.segments.iter().zip(accs.iter_mut()) {
            match acc {
                Some(acc) => {
                    acc.t0 = engine.t;
                    engine.run(&seg.drive, seg.duration_s, |s, l, r, _| acc.add(s, l, r));
                }
                None => engine.run(&seg.drive, seg.duration_s, |_, _, _, _| {}),
            }
        }
    }
    let mut rng = substream(seed, 0, 1);
    let mut offset = 0.0;
    let mut out = Vec::new();
    for (seg, acc) in seq.segments.iter().zip(accs) {
        if let Some(acc) = acc {
            let bg = detection.background_rate_cps * acc.bin * seq.repeats as f64;
            let counts = acc.expected.iter().map(|&l| poisson_draw(l + bg, &mut rng)).collect();
            out.push(BinnedTrace::new(acc.bin, counts, offset)?);
        }
        offset += seg.duration_s;
    }
    Ok(out)
}

/// Protocol descriptor as it appears under `[protocol]` in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Trace {
        drive: LaserDrive,
        duration_s: f64,
        bin_s: f64,
        /// Rate above which the emitter counts as ON for the truth record;
        /// defaults to 1% of the resonant peak rate.
        #[serde(default)]
        on_threshold_cps: Option<f64>,
    },
    Timetags {
        drive: LaserDrive,
        duration_s: f64,
        #[serde(default)]
        event_cap: Option<u64>,
    },
    Ple(PleSweep),
    Saturation(SaturationSweep),
    PumpProbe(PumpProbe),
    Odmr(OdmrSweep),
    AngleSweep(AngleSweep),
    SpectralSeries(SpectralSeries),
    PulseSequence(PulseSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolRecord {
    Trace { trace: BinnedTrace, truth: TraceTruth },
    Timetags(TimeTagStream),
    Ple(PleRecord),
    Saturation(SaturationRecord),
    PumpProbe(PumpProbeRecord),
    Odmr(OdmrRecord),
    Angle(AngleRecord),
    Spectra(Vec<Spectrum>),
    Sequence(Vec<BinnedTrace>),
}

pub fn run_protocol(
    model: &EmitterModel,
    detection: &DetectionModel,
    protocol: &Protocol,
    seed: u64,
) -> Result<ProtocolRecord> {
    model.validate()?;
    detection.validate()?;
    Ok(match protocol {
        Protocol::Trace {
            drive,
            duration_s,
            bin_s,
            on_threshold_cps,
        } => {
            let thr = on_threshold_cps
                .unwrap_or_else(|| 0.01 * super::rates::peak_emission_rate(model, detection, drive));
            let (trace, truth) = simulate_trace_with_truth(model, detection, drive, *duration_s, *bin_s, seed, thr)?;
            ProtocolRecord::Trace { trace, truth }
        }
        Protocol::Timetags {
            drive,
            duration_s,
            event_cap,
        } => ProtocolRecord::Timetags(simulate_timetags_capped(
            model,
            detection,
            drive,
            *duration_s,
            seed,
            event_cap.unwrap_or(super::photon::DEFAULT_EVENT_CAP),
        )?),
        Protocol::Ple(p) => ProtocolRecord::Ple(run_ple(model, detection, p, seed)?),
        Protocol::Saturation(p) => ProtocolRecord::Saturation(run_saturation(model, detection, p, seed)?),
        Protocol::PumpProbe(p) => ProtocolRecord::PumpProbe(run_pump_probe(model, detection, p, seed)?),
        Protocol::Odmr(p) => ProtocolRecord::Odmr(run_odmr(model, detection, p, seed)?),
        Protocol::AngleSweep(p) => ProtocolRecord::Angle(run_angle(model, detection, p, seed)?),
        Protocol::SpectralSeries(p) => ProtocolRecord::Spectra(run_spectral_series(model, detection, p, seed)?),
        Protocol::PulseSequence(p) => ProtocolRecord::Sequence(run_sequence(model, detection, p, seed)?),
    })
}
