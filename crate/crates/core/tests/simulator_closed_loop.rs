//! Simulator outputs pushed through the analyses, against generator truths.

use photodyn_core::closed_loop::*;
use photodyn_core::correlation::{fit_g2, g2_histogram};
use photodyn_core::data::Histogram;
use photodyn_core::fit::{fit_pump_probe, two_line_anticorrelation, SpectrumOptions};
use photodyn_core::intervals::{classify_with_reference, on_probability_threshold};
use photodyn_core::mixture::{fit_mixture, goodness_of_fit, MixtureOptions, WeightMode};
use photodyn_core::sim::{
    peak_emission_rate, run_pump_probe, run_spectral_series, simulate_timetags, simulate_trace,
    simulate_trace_with_truth, DetectionModel, EmitterModel, LaserDrive, PumpProbe, Shelving, SpectralSeries,
};

#[test]
fn background_only_trace_mean() {
    let det = DetectionModel {
        background_rate_cps: 1000.0,
        ..DetectionModel::default()
    };
    let trace = simulate_trace(&frozen_model(), &det, &LaserDrive::default(), 10.0, 1e-3, 1).unwrap();
    assert_eq!(trace.len(), 10_000);
    let se = (1.0f64 / 10_000.0).sqrt();
    assert!((trace.mean() - 1.0).abs() < 3.0 * se, "{}", trace.mean());
}

struct Blinking {
    truth: f64,
    p_e: f64,
    threshold: f64,
    p_value: f64,
}

fn blinking_run(blue: bool, background_cps: f64, duration: f64, seed: u64) -> Blinking {
    let model = blinking_model();
    let det = DetectionModel {
        background_rate_cps: background_cps,
        ..blinking_detection()
    };
    let drive = blinking_drive(&model, blue);
    let on_level = 0.01 * peak_emission_rate(&model, &det, &drive);
    let (trace, truth) =
        simulate_trace_with_truth(&model, &det, &drive, duration, BLINK_BIN_S, seed, on_level).unwrap();
    let reference = simulate_trace(&model, &det, &drive.dark(), 1.0, BLINK_BIN_S, seed + 1).unwrap();
    let hist = Histogram::of_integers(trace.counts());
    let opts = MixtureOptions {
        weight_mode: WeightMode::LorentzianPushforward { width_ratio: 1.0 },
        ..MixtureOptions::default()
    };
    let fit = fit_mixture(&hist, BLINK_LAMBDA_MAX, &opts).unwrap();
    Blinking {
        truth: truth.on_fraction,
        p_e: fit.params.p_e,
        threshold: on_probability_threshold(&classify_with_reference(&trace, &reference, 3.0).unwrap()),
        p_value: goodness_of_fit(&hist, &fit).unwrap(),
    }
}

#[test]
fn blue_light_raises_on_probability() {
    let dark = blinking_run(false, 1e4, 40.0, 11);
    let blue = blinking_run(true, 1e4, 10.0, 12);
    assert!(dark.truth < 0.01, "dark duty {}", dark.truth);
    assert!((0.15..0.25).contains(&blue.truth), "blue duty {}", blue.truth);
    // a rare-ON trace gives a small mixture weight
    assert!(dark.p_e < 0.02, "{}", dark.p_e);
    assert!((blue.p_e - blue.truth).abs() < 0.02);
}

#[test]
fn mixture_fit_reproduces_histogram() {
    // 10^5 bins; much longer traces resolve the bins that straddle an
    // ON/OFF switch, which the static-intensity mixture does not describe
    let run = blinking_run(true, 1e4, 2.0, 12);
    assert!(run.p_value > 0.01, "chi2 p-value {}", run.p_value);
}

#[test]
fn mixture_beats_threshold_when_background_overlaps() {
    // two background counts per bin hide the dim part of the ON population
    let run = blinking_run(true, 1e5, 10.0, 21);
    assert!((0.1..0.3).contains(&run.threshold), "threshold {}", run.threshold);
    assert!(
        (run.p_e - run.truth).abs() < (run.threshold - run.truth).abs(),
        "truth {} mixture {} threshold {}",
        run.truth,
        run.p_e,
        run.threshold
    );
}

#[test]
fn shelving_produces_bunching() {
    let model = EmitterModel {
        shelving: Shelving {
            kappa_up_hz: 4e5,
            kappa_down_hz: 0.0,
            d_up_hz: 1e5,
            d_down_hz: 0.0,
            ..Shelving::default()
        },
        ..frozen_model()
    };
    let det = DetectionModel {
        eta: 0.02,
        ..DetectionModel::default()
    };
    let drive = LaserDrive::resonant(model.p_sat_uw);
    let stream = simulate_timetags(&model, &det, &drive, 0.05, 5).unwrap();
    let curve = g2_histogram(&stream, 20_000.0, 200.0).unwrap();
    let fit = fit_g2(&curve, true).unwrap();
    let b = fit.bunching.unwrap();
    let (ab, err) = (b.value("amp_b"), b.error("amp_b"));
    assert!(ab > 3.0 * err && ab > 0.0, "A_b {ab} ± {err}");
}

#[test]
fn pathway_telegraph_anticorrelates_zpl_lines() {
    let series = SpectralSeries {
        frames: 40,
        pixel_background: 2.0,
        ..SpectralSeries::default()
    };
    let frames = run_spectral_series(&EmitterModel::default(), &DetectionModel::default(), &series, 3).unwrap();
    let opts = SpectrumOptions {
        total_band_nm: (570.0, 700.0),
        ..SpectrumOptions::default()
    };
    let a = two_line_anticorrelation(&frames, &opts).unwrap();
    assert!(a.pearson_r < -0.7, "r {}", a.pearson_r);
    assert!(a.total_intensity_cv < 0.1, "cv {}", a.total_intensity_cv);
}

#[test]
fn zero_field_shortens_recovery() {
    let model = spin_model();
    let det = DetectionModel::paper_psb(&model);
    let t1 = |b: f64| {
        let readout = green_readout(b, 50.0);
        let p = PumpProbe {
            pump: readout,
            pump_s: 0.0,
            readout,
            readout_s: 25e-3,
            bin_s: 0.5e-3,
            delays_s: (0..13).map(|i| 1e-5 * 4000f64.powf(i as f64 / 12.0)).collect(),
            repeats: 20_000,
        };
        fit_pump_probe(&run_pump_probe(&model, &det, &p, 9).unwrap()).unwrap()
    };
    let (field, zero) = (t1(SPIN_FIELD_MT), t1(0.0));
    assert!(zero.t1_s < field.t1_s);
    assert!(zero.contrast < field.contrast);
    // about 1.2 ms without a field
    assert!((0.7e-3..1.7e-3).contains(&zero.t1_s), "{}", zero.t1_s);
}
