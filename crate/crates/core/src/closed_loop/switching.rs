use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenarios::*;
use super::{Check, Sink, Tolerance};
use crate::data::Histogram;
use crate::error::Result;
use crate::intervals::{classify_with_reference, on_probability_threshold, summarize_rates, IntervalFitOptions};
use crate::mixture::{mixture_pmf, min_n_max, select_lambda_max, write_pmf_compare, MixtureOptions, MixtureParams, WeightMode};
use crate::sim::{peak_emission_rate, simulate_trace, simulate_trace_with_truth, substream_seed, Pathway};

const TRACE_S: f64 = 0.5;

pub fn off_rates(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let det = telegraph_detection();
    let opts = IntervalFitOptions {
        quantum_s: Some(TELEGRAPH_BIN_S),
        ..IntervalFitOptions::default()
    };
    let mut checks = Vec::new();
    // (pathway, temperature) → (truth, estimate)
    let mut results = Vec::new();
    let cases = [(Pathway::P1, 77.0), (Pathway::P1, 8.0), (Pathway::P2, 77.0), (Pathway::P2, 8.0)];
    for (i, &(pw, temp)) in cases.iter().enumerate() {
        let model = telegraph_model(pw);
        let drive = telegraph_drive(&model, pw, temp);
        let truth = telegraph_off_rate_hz(&model, &drive, pw);
        let trace = simulate_trace(&model, &det, &drive, TRACE_S, TELEGRAPH_BIN_S, substream_seed(seed, i as u64, 0))?;
        let reference = simulate_trace(
            &model,
            &det,
            &drive.dark(),
            TRACE_S,
            TELEGRAPH_BIN_S,
            substream_seed(seed, i as u64, 1),
        )?;
        let rec = classify_with_reference(&trace, &reference, TELEGRAPH_N_SIGMA)?;
        let summary = summarize_rates(&rec, &opts);
        let tag = format!("{}_{}K", if pw == Pathway::P1 { "p1" } else { "p2" }, temp);
        if sink.is_active() {
            sink.write(&format!("trace_{tag}.csv"), |f| trace.write_csv(f))?;
            sink.write(&format!("intervals_{tag}.csv"), |f| rec.write_csv(f))?;
            sink.json(&format!("rates_{tag}.json"), &summary)?;
        }
        let est = summary.off_rate_hz.unwrap_or(f64::NAN);
        results.push((truth, est));
        if pw == Pathway::P1 {
            checks.push(Check::new(
                "A3",
                &format!("off-rate pathway 1, {temp} K (Hz)"),
                truth,
                est,
                Tolerance::Relative(0.10),
            ));
        }
    }
    checks.push(Check::holds("A3", "pathway-1 off-rate ordering 77 K > 8 K", results[0].1 > results[1].1));
    let truth_ratio = results[2].0 / results[3].0;
    let ratio = results[2].1 / results[3].1;
    checks.push(Check::new(
        "A3",
        "pathway-2 77 K/8 K off-rate factor",
        truth_ratio,
        ratio,
        Tolerance::Relative(0.30),
    ));
    Ok(checks)
}

pub fn mixture(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = blinking_model();
    let det = blinking_detection();
    let opts = MixtureOptions {
        weight_mode: WeightMode::LorentzianPushforward { width_ratio: 1.0 },
        ..MixtureOptions::default()
    };
    let factors = [0.5, 0.75, 1.0, 1.25, 1.5];
    let grid: Vec<f64> = factors.iter().map(|f| f * BLINK_LAMBDA_MAX).collect();
    let mut checks = Vec::new();
    for (i, (blue, duration, label)) in [(false, 100.0, "dark"), (true, 10.0, "blue")].into_iter().enumerate() {
        let drive = blinking_drive(&model, blue);
        // ON while emitting above 1% of the resonant peak
        let threshold = 0.01 * peak_emission_rate(&model, &det, &drive);
        let (trace, truth) = simulate_trace_with_truth(
            &model,
            &det,
            &drive,
            duration,
            BLINK_BIN_S,
            substream_seed(seed, i as u64, 0),
            threshold,
        )?;
        let hist = Histogram::of_integers(trace.counts());
        let (fit, bic) = select_lambda_max(&hist, &grid, &opts)?;
        let reference = simulate_trace(&model, &det, &drive.dark(), 1.0, BLINK_BIN_S, substream_seed(seed, i as u64, 1))?;
        let thr = on_probability_threshold(&classify_with_reference(&trace, &reference, 3.0)?);
        if sink.is_active() {
            sink.write(&format!("counts_{label}.csv"), |f| hist.write_csv(f, "counts"))?;
            sink.write(&format!("pmf_{label}.csv"), |f| write_pmf_compare(&hist, &fit.params, f))?;
            sink.json(&format!("mixture_{label}.json"), &fit.to_fit_result())?;
            sink.table(
                &format!("bic_{label}.csv"),
                "lambda_max,bic,log_l,p_e",
                bic.iter().map(|b| vec![b.lambda_max, b.bic, b.log_l, b.p_e]),
            )?;
        }
        let duty = if blue { "blue-assisted" } else { "dark" };
        checks.push(
            Check::new("A4", &format!("p_e, {duty} duty"), truth.on_fraction, fit.params.p_e, Tolerance::Absolute(0.02))
                .with_note(format!("threshold estimate {thr:.4}")),
        );
        checks.push(Check::new(
            "A4",
            &format!("BIC-selected lambda_max, {duty} duty"),
            BLINK_LAMBDA_MAX,
            fit.params.lambda_max,
            Tolerance::Absolute(1e-9),
        ));
    }
    checks.push(Check::new(
        "A4",
        "max |sum pmf - 1| over 1000 draws",
        0.0,
        pmf_normalization_error(seed, 1000)?,
        Tolerance::Absolute(1e-9),
    ));
    Ok(checks)
}

/// Largest normalization defect of the mixture pmf over random parameters.
fn pmf_normalization_error(seed: u64, draws: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, 99, 0));
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let lambda_max = rng.random_range(0.1..60.0);
        let weight_mode = if rng.random::<bool>() {
            WeightMode::Uniform
        } else {
            WeightMode::LorentzianPushforward {
                width_ratio: rng.random_range(0.05..5.0),
            }
        };
        let params = MixtureParams {
            p_e: rng.random_range(0.0..1.0),
            lambda_b: rng.random_range(0.01..20.0),
            gamma: rng.random_range(0.0..2.0),
            lambda_max,
            j: rng.random_range(2..100),
            weight_mode,
        };
        // room for the background tail as well
        let n = min_n_max(params.lambda_max.max(params.lambda_b)) + 20;
        let pmf = mixture_pmf(&params, n)?;
        worst = worst.max((pmf.iter().sum::<f64>() - 1.0).abs());
    }
    Ok(worst)
}
