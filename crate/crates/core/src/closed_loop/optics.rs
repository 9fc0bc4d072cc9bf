use super::scenarios::*;
use super::{Check, Sink, Tolerance};
use crate::correlation::{fit_g2, g2_histogram};
use crate::data::{linear_edges, make_histogram};
use crate::error::Result;
use crate::fit::{fit_gaussian_histogram, fit_saturation, ple_peak_positions, qe_lower_bound, saturation_points};
use crate::sim::{
    run_ple, run_saturation, simulate_timetags, substream_seed, Band, DetectionModel, LaserDrive, PleSweep,
    SaturationSweep, FWHM_PER_SIGMA,
};

pub fn saturation(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = frozen_model();
    let det = saturation_detection(&model);
    let sweep = SaturationSweep {
        drive: LaserDrive::resonant(1.0),
        powers_uw: SATURATION_POWERS_UW.to_vec(),
        duration_s: 0.2,
        bin_s: 1e-3,
        background_s: 0.2,
    };
    let rec = run_saturation(&model, &det, &sweep, seed)?;
    let pts = saturation_points(&rec, 3.0)?;
    let fit = fit_saturation(&pts.powers_uw, &pts.rates_cps, Some(&pts.errors_cps))?;
    sink.write("saturation.csv", |f| rec.write_csv(f))?;
    sink.json("saturation_points.json", &pts)?;
    sink.json("saturation_fit.json", &fit)?;
    Ok(vec![
        Check::new("A1", "I_inf (c/s)", model.i_inf_target_mcps * 1e6, fit.value("I_inf"), Tolerance::Relative(0.05)),
        Check::new("A1", "P_sat (uW)", model.p_sat_uw, fit.value("P_sat"), Tolerance::Relative(0.10)),
    ])
}

pub fn ple_envelope(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = ple_model();
    let det = saturation_detection(&model);
    let sweep = PleSweep {
        drive: LaserDrive::resonant(100.0),
        start_ghz: -80.0,
        stop_ghz: 80.0,
        step_ghz: 0.25,
        dwell_s: 1e-4,
        scans: 200,
    };
    let rec = run_ple(&model, &det, &sweep, seed)?;
    let (positions, missed) = ple_peak_positions(&rec, 1e-3);
    let hist = make_histogram(&positions, &linear_edges(-80.0, 80.0, 32))?;
    let fit = fit_gaussian_histogram(&hist)?;
    sink.write("ple.csv", |f| rec.write_csv(f))?;
    sink.write("ple_positions.csv", |f| hist.write_csv(f, "GHz"))?;
    sink.json("ple_fit.json", &fit)?;
    let truth = FWHM_PER_SIGMA * model.sigma_inh_ghz;
    Ok(vec![Check::new("A2", "inhomogeneous FWHM (GHz)", truth, fit.value("fwhm"), Tolerance::Absolute(5.0))
        .with_note(format!("{} scans with a line, {missed} without", positions.len()))])
}

pub fn g2(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = frozen_model();
    let mut checks = Vec::new();

    // background alone: uncorrelated arrivals
    let dark = DetectionModel {
        background_rate_cps: 2e6,
        ..DetectionModel::default()
    };
    let stream = simulate_timetags(&model, &dark, &LaserDrive::default(), 2.0, substream_seed(seed, 0, 0))?;
    let flat = g2_histogram(&stream, 50.0, 1.0)?;
    let dev = flat.values.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    sink.write("g2_poisson.csv", |f| flat.write_csv(f))?;
    checks.push(Check::new("A5", "Poisson stream max |g2 - 1|", 0.0, dev, Tolerance::Absolute(0.05)));

    // emitter at s = 1 with background tuned so that 1 − ρ² = 0.443
    let g0_target: f64 = 0.443;
    let rho = (1.0 - g0_target).sqrt();
    let drive = LaserDrive::resonant(model.p_sat_uw);
    let clean = DetectionModel {
        band: Band::All,
        ..DetectionModel::default()
    };
    let signal = crate::sim::peak_emission_rate(&model, &clean, &drive);
    let noisy = DetectionModel {
        background_rate_cps: signal * (1.0 - rho) / rho,
        ..clean
    };
    let stream = simulate_timetags(&model, &noisy, &drive, 0.1, substream_seed(seed, 1, 0))?;
    let curve = g2_histogram(&stream, 20.0, 0.1)?;
    let fit = fit_g2(&curve, false)?;
    sink.write("g2.csv", |f| curve.write_csv(f))?;
    sink.json("g2_fit.json", &fit)?;
    checks.push(Check::new(
        "A5",
        "g2(0) with background",
        g0_target,
        fit.antibunching.value("g0"),
        Tolerance::Absolute(0.05),
    ));

    // lifetime: the antibunching time is τ/(1 + s)
    let s = 0.2;
    let drive = LaserDrive::resonant(s * model.p_sat_uw);
    let stream = simulate_timetags(&model, &clean, &drive, 0.5, substream_seed(seed, 2, 0))?;
    let curve = g2_histogram(&stream, 20.0, 0.1)?;
    let fit = fit_g2(&curve, false)?;
    sink.write("g2_lifetime.csv", |f| curve.write_csv(f))?;
    let tau = fit.antibunching.value("tau_a") * (1.0 + s);
    checks.push(Check::new("A5", "lifetime (ns)", model.lifetime_ns, tau, Tolerance::Relative(0.15)));
    Ok(checks)
}

pub fn qe(sink: &Sink) -> Result<Vec<Check>> {
    let b = qe_lower_bound(12.5, 0.10, 1.26)?;
    sink.json("qe.json", &b)?;
    Ok(vec![
        Check::new("A9", "QE bound formula value", 0.315, b.value, Tolerance::Absolute(1e-12)),
        Check::new("A9", "QE bound vs measured 0.33 +- 0.09", 0.33, b.value, Tolerance::Absolute(0.09)),
    ])
}
