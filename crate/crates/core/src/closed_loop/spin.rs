use super::scenarios::*;
use super::{Check, Sink, Tolerance};
use crate::error::Result;
use crate::fit::{fit_odmr, fit_pump_probe, fit_sinusoid_180, PumpProbeFit};
use crate::sim::{
    run_angle, run_odmr, run_pump_probe, substream_seed, AngleSweep, Band, DetectionModel, EmitterModel, LaserDrive,
    OdmrSweep, PumpProbe,
};

fn log_delays(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn pump_probe_run(
    model: &EmitterModel,
    det: &DetectionModel,
    readout: LaserDrive,
    seed: u64,
    sink: &Sink,
    label: &str,
) -> Result<PumpProbeFit> {
    let p = PumpProbe {
        pump: readout,
        pump_s: 0.0,
        readout,
        readout_s: 25e-3,
        bin_s: 0.5e-3,
        delays_s: log_delays(1e-5, 4e-2, 13),
        repeats: 30_000,
    };
    let rec = run_pump_probe(model, det, &p, seed)?;
    let fit = fit_pump_probe(&rec)?;
    if sink.is_active() {
        sink.write(&format!("pump_probe_{label}.csv"), |f| rec.write_csv(f))?;
        sink.json(&format!("t1_{label}.json"), &fit)?;
    }
    Ok(fit)
}

pub fn pump_probe(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = spin_model();
    let det = DetectionModel::paper_psb(&model);
    let field = green_readout(SPIN_FIELD_MT, 50.0);
    let zero = green_readout(0.0, 50.0);
    // near-saturating resonant readout on the same field configuration
    let resonant = LaserDrive {
        p_res_uw: 5.0 * model.p_sat_uw,
        b_field_mt: SPIN_FIELD_MT,
        theta_deg: 50.0,
        ..LaserDrive::default()
    };
    let f_field = pump_probe_run(&model, &det, field, substream_seed(seed, 0, 0), sink, "field_50deg")?;
    let f_zero = pump_probe_run(&model, &det, zero, substream_seed(seed, 1, 0), sink, "zero_field")?;
    let f_res = pump_probe_run(&model, &det, resonant, substream_seed(seed, 2, 0), sink, "resonant")?;
    let generator_t1 = dark_recovery_time_s(&model, &field);
    Ok(vec![
        Check::new("A6", "T1 at field, 50 deg (s)", 5.6e-3, f_field.t1_s, Tolerance::Relative(0.15))
            .with_note(format!("generator dark recovery time {generator_t1:.4e} s")),
        Check::new("A6", "T1 zero field < T1 at field (s)", f_field.t1_s, f_zero.t1_s, Tolerance::Below),
        Check::new("A6", "contrast zero field < at field", f_field.contrast, f_zero.contrast, Tolerance::Below),
        Check::new("A6", "contrast resonant > off-resonant", f_field.contrast, f_res.contrast, Tolerance::Above),
    ])
}

fn odmr_frequencies() -> Vec<f64> {
    (0..31).map(|i| 1.37 + i as f64 * (1.0 / 30.0)).collect()
}

pub fn odmr(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = spin_model();
    let det = DetectionModel::paper_psb(&model);
    let mut powers = vec![ODMR_CALIBRATED_DBM];
    powers.extend(ODMR_SERIES_DBM);
    let sweep = OdmrSweep {
        drive: green_readout(SPIN_FIELD_MT, 50.0),
        powers_dbm: powers,
        frequencies_ghz: odmr_frequencies(),
        dwell_s: ODMR_DWELL_S,
        chunks: 200,
    };
    let rec = run_odmr(&model, &det, &sweep, seed)?;
    let contrast = rec.contrast();
    let errors = rec.contrast_errors();
    let mut fits = Vec::new();
    for (c, e) in contrast.iter().zip(&errors) {
        fits.push(fit_odmr(&rec.frequencies_ghz, c, Some(e))?);
    }
    sink.write("odmr.csv", |f| rec.write_csv(f))?;
    sink.json("odmr_fits.json", &fits)?;
    let cal = &fits[0];
    let mags: Vec<f64> = fits[1..].iter().map(|f| f.value("contrast_peak").abs()).collect();
    let monotone = mags.windows(2).all(|w| w[1] < w[0]);
    Ok(vec![
        Check::new("A7", "resonance f0 (GHz)", model.mw.f0_ghz, cal.value("f0"), Tolerance::Absolute(0.02)),
        Check::new("A7", "|contrast| at 0 dBm", 0.0265, cal.value("contrast_peak").abs(), Tolerance::Absolute(0.005)),
        Check::new("A7", "FWHM (GHz)", 0.2, cal.value("fwhm"), Tolerance::Absolute(0.04)),
        Check::holds("A7", "|contrast| falls with MW power", monotone).with_note(format!(
            "{:?} dBm -> {:.4?}",
            ODMR_SERIES_DBM, mags
        )),
    ])
}

pub const ODMR_DWELL_S: f64 = 5000.0;
pub const ANGLE_DWELL_S: f64 = 2000.0;

pub fn angle(seed: u64, sink: &Sink) -> Result<Vec<Check>> {
    let model = spin_model();
    let det = DetectionModel {
        band: Band::Zpl,
        ..DetectionModel::paper_psb(&model)
    };
    let sweep = AngleSweep {
        drive: green_readout(SPIN_FIELD_MT, 0.0),
        angles_deg: (0..19).map(|i| 10.0 * i as f64).collect(),
        dwell_s: ANGLE_DWELL_S,
    };
    let rec = run_angle(&model, &det, &sweep, seed)?;
    let rates = rec.rates();
    let errors: Vec<f64> = rec.counts.iter().map(|&c| (c as f64).sqrt() / rec.dwell_s).collect();
    let fit = fit_sinusoid_180(&rec.angles_deg, &rates, Some(&errors))?;
    sink.write("angle.csv", |f| rec.write_csv(f))?;
    sink.json("angle_fit.json", &fit)?;
    Ok(vec![
        Check::new("A8", "angle of minimum (deg)", 50.0, fit.value("theta_min"), Tolerance::Absolute(5.0)),
        Check::new("A8", "angle of maximum (deg)", 140.0, fit.value("theta_max"), Tolerance::Absolute(5.0)),
    ])
}
