use std::io::BufReader;
use std::path::Path;

use photodyn_core::correlation::{fit_g2, g2_histogram};
use photodyn_core::data::{linear_edges, make_histogram, BinnedTrace, Histogram, Spectrum, TimeTagStream};
use photodyn_core::fit::{
    analyze_spectrum, fit_gaussian_histogram, fit_odmr, fit_pump_probe, fit_saturation, fit_sinusoid_180,
    ple_peak_positions, qe_lower_bound, saturation_points, two_line_anticorrelation, SpectrumOptions,
};
use photodyn_core::intervals::{classify_with_reference, summarize_rates, IntervalFitOptions};
use photodyn_core::mixture::{select_lambda_max, write_pmf_compare, MixtureOptions};
use photodyn_core::sim::{
    read_spectra_csv, AngleRecord, OdmrRecord, PleRecord, Protocol, PumpProbeRecord, SaturationRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Stage, STAGE_NAMES};
use crate::exit::{CliError, CliResult};
use crate::io::{open_input, read_json, write_json, write_with};
use crate::simulate::{TimetagMeta, CONFIG_COPY};

pub const SUMMARY: &str = "analysis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: String,
    pub ok: bool,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Exit code class of the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<i32>,
}

/// Stages run when neither the config nor the command line names any.
fn default_stages(protocol: &Protocol) -> Vec<&'static str> {
    match protocol {
        Protocol::Trace { .. } => vec!["intervals", "mixture"],
        Protocol::Timetags { .. } => vec!["g2"],
        Protocol::Ple(_) => vec!["ple"],
        Protocol::Saturation(_) => vec!["saturation"],
        Protocol::PumpProbe(_) => vec!["pump_probe"],
        Protocol::Odmr(_) => vec!["odmr"],
        Protocol::AngleSweep(_) => vec!["angle"],
        Protocol::SpectralSeries(_) => vec!["spectrum"],
        Protocol::PulseSequence(_) => vec![],
    }
}

/// Resolves stage names against the configured stages; unnamed stages
/// fall back to their defaults.
pub fn plan(cfg: &RunConfig, names: Option<&[String]>) -> CliResult<Vec<Stage>> {
    let names: Vec<String> = match names {
        Some(n) => n.to_vec(),
        None if !cfg.analysis.is_empty() => return Ok(cfg.analysis.clone()),
        None => default_stages(&cfg.protocol).into_iter().map(String::from).collect(),
    };
    names
        .iter()
        .map(|n| {
            cfg.analysis
                .iter()
                .find(|s| s.name() == n)
                .cloned()
                .or_else(|| Stage::named(n))
                .ok_or_else(|| {
                    CliError::Usage(format!("unknown analysis stage `{n}`; available: {}", STAGE_NAMES.join(", ")))
                })
        })
        .collect()
}

/// Runs every planned stage on the run directory; a failing stage does not
/// stop the others. Outcomes are also written to `analysis.json`.
pub fn analyze(dir: &Path, names: Option<&[String]>) -> CliResult<Vec<StageOutcome>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("run directory {} does not exist", dir.display())));
    }
    let text = std::io::read_to_string(open_input(dir, CONFIG_COPY)?)?;
    let cfg = RunConfig::parse(&text)?;
    let stages = plan(&cfg, names)?;
    let outcomes: Vec<StageOutcome> = stages
        .iter()
        .map(|stage| match run_stage(&cfg, stage, dir) {
            Ok(outputs) => StageOutcome {
                stage: stage.name().into(),
                ok: true,
                outputs,
                error: None,
                code: None,
            },
            Err(e) => StageOutcome {
                stage: stage.name().into(),
                ok: false,
                outputs: Vec::new(),
                error: Some(e.to_string()),
                code: Some(e.code()),
            },
        })
        .collect();
    write_json(dir, SUMMARY, &outcomes)?;
    Ok(outcomes)
}

fn run_stage(cfg: &RunConfig, stage: &Stage, dir: &Path) -> CliResult<Vec<String>> {
    match stage {
        Stage::Intervals { n_sigma, fit } => intervals(dir, *n_sigma, fit),
        Stage::Mixture {
            lambda_max_grid,
            options,
        } => mixture(dir, lambda_max_grid.as_deref(), options),
        Stage::G2 {
            max_lag_ns,
            bin_ns,
            bunching,
        } => g2(dir, *max_lag_ns, *bin_ns, *bunching),
        Stage::Saturation { n_sigma } => saturation(cfg, dir, *n_sigma),
        Stage::Ple { false_alarm, bins } => ple(dir, *false_alarm, *bins),
        Stage::PumpProbe {} => {
            let rec: PumpProbeRecord = read_json(dir, "pump_probe.json")?;
            write_json(dir, "t1.json", &fit_pump_probe(&rec)?)?;
            Ok(vec!["t1.json".into()])
        }
        Stage::Odmr {} => odmr(dir),
        Stage::Angle {} => {
            let rec: AngleRecord = read_json(dir, "angle.json")?;
            let errors: Vec<f64> = rec.counts.iter().map(|&c| (c.max(1) as f64).sqrt() / rec.dwell_s).collect();
            let fit = fit_sinusoid_180(&rec.angles_deg, &rec.rates(), Some(&errors))?;
            write_json(dir, "angle_fit.json", &fit)?;
            Ok(vec!["angle_fit.json".into()])
        }
        Stage::Spectrum { options } => spectrum(dir, options),
    }
}

fn read_trace(dir: &Path, name: &str) -> CliResult<BinnedTrace> {
    Ok(BinnedTrace::read_csv(BufReader::new(open_input(dir, name)?))?)
}

fn intervals(dir: &Path, n_sigma: f64, fit: &IntervalFitOptions) -> CliResult<Vec<String>> {
    let trace = read_trace(dir, "trace.csv")?;
    let reference = read_trace(dir, "background.csv")?;
    let record = classify_with_reference(&trace, &reference, n_sigma)?;
    let opts = IntervalFitOptions {
        quantum_s: fit.quantum_s.or(Some(trace.bin_width())),
        ..*fit
    };
    let summary = summarize_rates(&record, &opts);
    write_with(dir, "intervals.csv", |w| record.write_csv(w))?;
    write_json(dir, "rates.json", &summary)?;
    Ok(vec!["intervals.csv".into(), "rates.json".into()])
}

/// λ_max candidates spanning the upper tail of the count distribution.
fn default_grid(hist: &Histogram) -> Vec<f64> {
    let total = hist.total();
    let mut seen = 0;
    let mut q = 1.0;
    for (c, &n) in hist.centers().iter().zip(hist.counts()) {
        seen += n;
        if seen as f64 >= 0.999 * total as f64 {
            q = c.max(1.0);
            break;
        }
    }
    [0.25, 0.5, 0.75, 1.0, 1.25, 1.5].iter().map(|f| f * q).collect()
}

fn mixture(dir: &Path, grid: Option<&[f64]>, opts: &MixtureOptions) -> CliResult<Vec<String>> {
    let trace = read_trace(dir, "trace.csv")?;
    let hist = Histogram::of_integers(trace.counts());
    let grid = grid.map_or_else(|| default_grid(&hist), <[f64]>::to_vec);
    let (fit, bic) = select_lambda_max(&hist, &grid, opts)?;
    write_with(dir, "counts_hist.csv", |w| hist.write_csv(w, "counts"))?;
    write_with(dir, "pmf.csv", |w| write_pmf_compare(&hist, &fit.params, w))?;
    write_json(dir, "mixture.json", &fit.to_fit_result())?;
    write_with(dir, "mixture_bic.csv", |w| {
        use std::io::Write;
        writeln!(w, "lambda_max,bic,log_l,p_e")?;
        for b in &bic {
            writeln!(w, "{},{},{},{}", b.lambda_max, b.bic, b.log_l, b.p_e)?;
        }
        Ok(())
    })?;
    Ok(["counts_hist.csv", "pmf.csv", "mixture.json", "mixture_bic.csv"]
        .map(String::from)
        .to_vec())
}

fn g2(dir: &Path, max_lag_ns: f64, bin_ns: f64, bunching: bool) -> CliResult<Vec<String>> {
    let meta: TimetagMeta = read_json(dir, "timetags.json")?;
    let stream = TimeTagStream::read_binary(open_input(dir, "timetags.bin")?, Some(meta.duration_ps))?;
    let curve = g2_histogram(&stream, max_lag_ns, bin_ns)?;
    write_with(dir, "g2.csv", |w| curve.write_csv(w))?;
    write_json(dir, "g2_fit.json", &fit_g2(&curve, bunching)?)?;
    Ok(vec!["g2.csv".into(), "g2_fit.json".into()])
}

fn saturation(cfg: &RunConfig, dir: &Path, n_sigma: f64) -> CliResult<Vec<String>> {
    let rec: SaturationRecord = read_json(dir, "saturation.json")?;
    let pts = saturation_points(&rec, n_sigma)?;
    let fit = fit_saturation(&pts.powers_uw, &pts.rates_cps, Some(&pts.errors_cps))?;
    let qe = qe_lower_bound(fit.value("I_inf") / 1e6, cfg.detection.eta, cfg.model.lifetime_ns)?;
    write_json(dir, "saturation_points.json", &pts)?;
    write_json(dir, "saturation_fit.json", &fit)?;
    write_json(dir, "qe.json", &qe)?;
    Ok(["saturation_points.json", "saturation_fit.json", "qe.json"]
        .map(String::from)
        .to_vec())
}

fn ple(dir: &Path, false_alarm: f64, bins: usize) -> CliResult<Vec<String>> {
    let rec: PleRecord = read_json(dir, "ple.json")?;
    let (positions, _) = ple_peak_positions(&rec, false_alarm);
    let (lo, hi) = match (rec.detunings_ghz.first(), rec.detunings_ghz.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(CliError::Usage("ple.json holds no detuning axis".into())),
    };
    let hist = make_histogram(&positions, &linear_edges(lo, hi, bins))?;
    write_with(dir, "ple_positions.csv", |w| hist.write_csv(w, "GHz"))?;
    write_json(dir, "ple_fit.json", &fit_gaussian_histogram(&hist)?)?;
    Ok(vec!["ple_positions.csv".into(), "ple_fit.json".into()])
}

fn odmr(dir: &Path) -> CliResult<Vec<String>> {
    let rec: OdmrRecord = read_json(dir, "odmr.json")?;
    let contrast = rec.contrast();
    let errors = rec.contrast_errors();
    let fits = contrast
        .iter()
        .zip(&errors)
        .map(|(c, e)| fit_odmr(&rec.frequencies_ghz, c, Some(e)))
        .collect::<photodyn_core::Result<Vec<_>>>()?;
    write_with(dir, "odmr_contrast.csv", |w| {
        use std::io::Write;
        writeln!(w, "power_dbm,frequency_ghz,contrast,error")?;
        for ((p, c), e) in rec.powers_dbm.iter().zip(&contrast).zip(&errors) {
            for ((f, c), e) in rec.frequencies_ghz.iter().zip(c).zip(e) {
                writeln!(w, "{p},{f},{c:.6e},{e:.6e}")?;
            }
        }
        Ok(())
    })?;
    write_json(dir, "odmr_fits.json", &fits)?;
    Ok(vec!["odmr_contrast.csv".into(), "odmr_fits.json".into()])
}

/// Frames below this count give no meaningful frame-to-frame correlation.
const MIN_FRAMES_FOR_CORRELATION: usize = 20;

fn spectrum(dir: &Path, opts: &SpectrumOptions) -> CliResult<Vec<String>> {
    let frames = read_spectra_csv(BufReader::new(open_input(dir, "spectra.csv")?))?;
    let first = frames
        .first()
        .ok_or_else(|| CliError::Usage("spectra.csv holds no frames".into()))?;
    let mut total = vec![0.0; first.counts().len()];
    for f in &frames {
        if f.wavelengths() != first.wavelengths() {
            return Err(CliError::Usage("spectral frames do not share one wavelength grid".into()));
        }
        for (t, c) in total.iter_mut().zip(f.counts()) {
            *t += c;
        }
    }
    let summed = Spectrum::new(first.wavelengths().to_vec(), total)?;
    write_json(dir, "spectrum_fit.json", &analyze_spectrum(&summed, opts)?)?;
    let mut out = vec!["spectrum_fit.json".to_string()];
    if frames.len() >= MIN_FRAMES_FOR_CORRELATION {
        write_json(dir, "anticorrelation.json", &two_line_anticorrelation(&frames, opts)?)?;
        out.push("anticorrelation.json".into());
    }
    Ok(out)
}
