use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::scenarios::*;
use super::{Check, Sink, Tolerance};
use crate::data::Spectrum;
use crate::error::{invalid, Result};
use crate::fit::{jacobian_deviation, two_line_anticorrelation, ModelId, SpectrumOptions};
use crate::intervals::classify_with_reference;
use crate::sim::{
    run_ple, simulate_timetags, simulate_trace, stationary_rate, substream_seed, DetectionModel, EmitterModel,
    LaserDrive, Pathway, PleSweep, Shelving,
};

pub fn properties(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let worst = ModelId::ALL
        .iter()
        .map(|&id| jacobian_deviation(id, 100, substream_seed(seed, 0, 0)))
        .fold(0.0f64, f64::max);
    checks.push(Check::new(
        "A10",
        "max Jacobian vs finite-difference deviation",
        0.0,
        worst,
        Tolerance::Absolute(1e-6),
    ));

    checks.extend(rate_oracle(seed)?);
    checks.extend(determinism(seed)?);
    checks.push(threshold_monotonicity(seed)?);
    checks.extend(anticorrelation_nulls(seed)?);
    sink.json("properties.json", &checks)?;
    Ok(checks)
}

/// Fast shelving so that both engines average many shelf visits.
fn blinking_fast() -> EmitterModel {
    EmitterModel {
        shelving: Shelving {
            kappa_up_hz: 4e4,
            kappa_down_hz: 1e4,
            d_up_hz: 1e4,
            d_down_hz: 5e3,
            ..Shelving::default()
        },
        ..frozen_model()
    }
}

fn rate_oracle(seed: u64) -> Result<Vec<Check>> {
    let model = blinking_fast();
    let det = DetectionModel::default();
    let drive = LaserDrive::resonant(0.1 * model.p_sat_uw);
    let oracle = stationary_rate(&model, &det, &drive, 0.0, Pathway::P1);
    let duration = 0.5;
    let trace = simulate_trace(&model, &det, &drive, duration, 1e-4, substream_seed(seed, 1, 0))?;
    let tags = simulate_timetags(&model, &det, &drive, duration, substream_seed(seed, 1, 1))?;
    Ok(vec![
        Check::new("A10", "two-tier mean rate vs stationary (c/s)", oracle, trace.mean_rate(), Tolerance::Relative(0.03)),
        Check::new("A10", "photon SSA mean rate vs stationary (c/s)", oracle, tags.mean_rate(), Tolerance::Relative(0.03)),
    ])
}

fn determinism(seed: u64) -> Result<Vec<Check>> {
    let model = blinking_fast();
    let det = DetectionModel {
        background_rate_cps: 1e4,
        ..DetectionModel::default()
    };
    let drive = LaserDrive::resonant(0.1 * model.p_sat_uw);
    let trace_bytes = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        simulate_trace(&model, &det, &drive, 0.05, 1e-5, seed)?.write_csv(&mut buf)?;
        Ok(buf)
    };
    let tag_bytes = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        simulate_timetags(&model, &det, &drive, 0.01, seed)?.write_binary(&mut buf)?;
        Ok(buf)
    };
    // parallel protocols must not depend on the thread count
    let ple = PleSweep {
        drive: LaserDrive::resonant(20.0),
        start_ghz: -40.0,
        stop_ghz: 40.0,
        step_ghz: 0.5,
        dwell_s: 1e-4,
        scans: 16,
    };
    let ple_model = ple_model();
    let ple_bytes = |threads: usize| -> Result<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| invalid(e.to_string()))?;
        let rec = pool.install(|| run_ple(&ple_model, &det, &ple, seed))?;
        let mut buf = Vec::new();
        rec.write_csv(&mut buf)?;
        Ok(buf)
    };
    Ok(vec![
        Check::holds("A10", "binned trace CSV byte-identical on rerun", trace_bytes()? == trace_bytes()?),
        Check::holds("A10", "time-tag binary byte-identical on rerun", tag_bytes()? == tag_bytes()?),
        Check::holds("A10", "PLE record identical on 1 and 4 threads", ple_bytes(1)? == ple_bytes(4)?),
    ])
}

/// Raising n_sigma never increases the ON time.
fn threshold_monotonicity(seed: u64) -> Result<Check> {
    let pw = Pathway::P1;
    let model = telegraph_model(pw);
    let det = DetectionModel {
        background_rate_cps: 1e5,
        ..telegraph_detection()
    };
    let drive = telegraph_drive(&model, pw, 77.0);
    let trace = simulate_trace(&model, &det, &drive, 0.05, TELEGRAPH_BIN_S, substream_seed(seed, 2, 0))?;
    let reference = simulate_trace(&model, &det, &drive.dark(), 0.05, TELEGRAPH_BIN_S, substream_seed(seed, 2, 1))?;
    let mut on = Vec::new();
    for i in 0..=40 {
        let n_sigma = 0.25 * i as f64;
        on.push(classify_with_reference(&trace, &reference, n_sigma)?.on_bins);
    }
    let ok = on.windows(2).all(|w| w[1] <= w[0]);
    Ok(Check::holds("A10", "ON time non-increasing in n_sigma", ok)
        .with_note(format!("ON bins {} -> {}", on[0], on[on.len() - 1])))
}

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn two_line_frame(a1: f64, a2: f64, floor: f64) -> Result<Spectrum> {
    let g = |x: f64, area: f64, c: f64, s: f64| area / (s * SQRT_2PI) * (-0.5 * ((x - c) / s).powi(2)).exp();
    let grid: Vec<f64> = (0..=1000).map(|i| 580.0 + 0.01 * i as f64).collect();
    let counts = grid
        .iter()
        .map(|&x| floor + g(x, a1, 585.0, 0.03) + g(x, a2, 585.12, 0.03))
        .collect();
    Spectrum::new(grid, counts)
}

fn anticorrelation_nulls(seed: u64) -> Result<Vec<Check>> {
    let opts = SpectrumOptions {
        total_band_nm: (580.0, 590.0),
        ..SpectrumOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 3, 0));
    let share = Normal::new(0.5f64, 0.15).unwrap();
    // exact exchange of a constant total
    let exchange: Vec<Spectrum> = (0..100)
        .map(|_| {
            let f = share.sample(&mut rng).clamp(0.05, 0.95);
            two_line_frame(4000.0 * f, 4000.0 * (1.0 - f), 5.0)
        })
        .collect::<Result<_>>()?;
    let ex = two_line_anticorrelation(&exchange, &opts)?;
    // independent Poisson-noisy areas
    let area = Normal::new(2000.0f64, 400.0).unwrap();
    let independent: Vec<Spectrum> = (0..100)
        .map(|_| {
            let frame = two_line_frame(area.sample(&mut rng).max(100.0), area.sample(&mut rng).max(100.0), 5.0)?;
            let noisy = frame
                .counts()
                .iter()
                .map(|&c| Poisson::new(c).unwrap().sample(&mut rng))
                .collect();
            Spectrum::new(frame.wavelengths().to_vec(), noisy)
        })
        .collect::<Result<_>>()?;
    let ind = two_line_anticorrelation(&independent, &opts)?;
    Ok(vec![
        Check::new("A10", "exchanged lines: Pearson r", -1.0, ex.pearson_r, Tolerance::Absolute(1e-6)),
        Check::new("A10", "exchanged lines: total-intensity CV", 0.0, ex.total_intensity_cv, Tolerance::Absolute(1e-6)),
        Check::new("A10", "independent lines: |Pearson r| below", 0.2, ind.pearson_r.abs(), Tolerance::Below),
    ])
}
