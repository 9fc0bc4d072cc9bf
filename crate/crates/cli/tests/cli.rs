use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use photodyn::config::RunConfig;
use photodyn::simulate::Manifest;
use photodyn_core::data::BinnedTrace;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> PathBuf {
    configs_dir().join(name)
}

fn photodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photodyn"))
        .args(args)
        .env_remove("PHOTODYN_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn simulate(cfg: &Path, dir: &Path) {
    let out = photodyn(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 2);
}

#[test]
fn background_only_trace_is_poisson() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("background_only.toml"), &dir);
    let trace = BinnedTrace::read_csv(fs::File::open(dir.join("trace.csv")).unwrap()).unwrap();
    let counts: Vec<f64> = trace.counts().iter().map(|&c| c as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // 5000 c/s in 1 ms bins
    assert!((mean - 5.0).abs() < 5.0 * (5.0 / n).sqrt(), "mean {mean}");
    assert!((var / mean - 1.0).abs() < 0.15, "Fano factor {}", var / mean);
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("paper_77K.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&cfg, &a);
    simulate(&cfg, &b);
    assert_eq!(files_of(&a), files_of(&b));

    let c = tmp.path().join("c");
    let out = photodyn(&["simulate", "-c", cfg.to_str().unwrap(), "-o", c.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(c.join("trace.csv")).unwrap());
    let manifest: Manifest = serde_json::from_slice(&fs::read(c.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest.config_sha256.len(), 64);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("ple.toml");
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let dir = tmp.path().join(threads);
        let out = Command::new(env!("CARGO_BIN_EXE_photodyn"))
            .args(["simulate", "-c", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()])
            .env("PHOTODYN_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        runs.push(files_of(&dir));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn manifest_hashes_match_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("saturation.toml"), &dir);
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest.protocol, "saturation");
    for f in &manifest.outputs {
        let bytes = fs::read(dir.join(&f.file)).unwrap();
        assert_eq!(photodyn::io::sha256_hex(&bytes), f.sha256, "{}", f.file);
    }
    let text = fs::read_to_string(config("saturation.toml")).unwrap();
    assert_eq!(manifest.config_sha256, photodyn::io::sha256_hex(text.as_bytes()));
}

#[test]
fn invalid_config_exits_2_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "seed = 1\n[protocol]\nkind = \"trace\"\nduration_s = 1.0\nbin_s = 1e-3\ndrive = {}\n[detection]\netaa = 0.1\n",
    );
    let out = photodyn(&["simulate", "-c", cfg.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8"), "{err}");

    let cfg = write_config(
        tmp.path(),
        "[protocol]\nkind = \"trace\"\nduration_s = 1.0\nbin_s = 1e-3\ndrive = { p_res_uw = -1.0 }\n",
    );
    let out = photodyn(&["simulate", "-c", cfg.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("o").exists());

    let out = photodyn(&["simulate", "-c", tmp.path().join("absent.toml").to_str().unwrap(), "-o", "x"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&photodyn(&["simulate"])), 2);
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = photodyn(&[
        "simulate",
        "-c",
        config("background_only.toml").to_str().unwrap(),
        "-o",
        blocker.join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn trace_analysis_writes_intervals_and_mixture() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("paper_77K.toml"), &dir);
    let before = files_of(&dir);
    let out = photodyn(&["analyze", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["intervals.csv", "rates.json", "mixture.json", "pmf.csv", "mixture_bic.csv", "analysis.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    // raw inputs are untouched
    for (name, bytes) in &before {
        assert_eq!(&fs::read(dir.join(name)).unwrap(), bytes, "{name}");
    }
    let rates: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("rates.json")).unwrap()).unwrap();
    let off = rates["off_rate_hz"].as_f64().unwrap();
    assert!((off / 85e3 - 1.0).abs() < 0.1, "off-rate {off}");
}

#[test]
fn stages_fail_in_isolation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("background_only.toml"), &dir);
    fs::remove_file(dir.join("background.csv")).unwrap();
    let out = photodyn(&["analyze", dir.to_str().unwrap(), "--stages", "intervals,mixture"]);
    assert_eq!(code(&out), 2);
    assert!(dir.join("mixture.json").is_file());
    assert!(!dir.join("intervals.csv").exists());

    let out = photodyn(&["analyze", dir.to_str().unwrap(), "--stages", "bogus"]);
    assert_eq!(code(&out), 2);
    let out = photodyn(&["analyze", tmp.path().join("absent").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn failing_stage_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[detection]\nbackground_rate_cps = 10.0\n[protocol]\nkind = \"timetags\"\nduration_s = 0.01\ndrive = {}\n",
    );
    let dir = tmp.path().join("run");
    simulate(&cfg, &dir);
    let out = photodyn(&["analyze", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["ok"], false);
}

#[test]
fn timetag_analysis_writes_symmetric_g2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("g2.toml"), &dir);
    assert_eq!(code(&photodyn(&["analyze", dir.to_str().unwrap()])), 0);
    let text = fs::read_to_string(dir.join("g2.csv")).unwrap();
    let lags: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(lags.len() % 2 == 1);
    for (a, b) in lags.iter().zip(lags.iter().rev()) {
        assert!((a + b).abs() < 1e-9, "{a} vs {b}");
    }
    assert!(dir.join("g2_fit.json").is_file());
}

#[test]
fn pump_probe_analysis_writes_t1_and_report_flattens_it() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    simulate(&config("pump_probe.toml"), &dir);
    assert_eq!(code(&photodyn(&["analyze", dir.to_str().unwrap(), "--stages", "pump_probe"])), 0);
    let t1: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("t1.json")).unwrap()).unwrap();
    assert!(t1["t1_s"].as_f64().unwrap() > 0.0);
    assert_eq!(code(&photodyn(&["report", dir.to_str().unwrap()])), 0);
    let fits = fs::read_to_string(dir.join("fits.csv")).unwrap();
    assert!(fits.lines().any(|l| l.starts_with("t1.json,recovery,")), "{fits}");
}

#[test]
fn closed_loop_reports_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = photodyn(&["closed-loop", "A9-qe", "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS A9"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("A9-qe/report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    for c in report["checks"].as_array().unwrap() {
        for key in ["criterion", "truth", "estimate", "tolerance", "pass"] {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
    assert_eq!(code(&photodyn(&["report", tmp.path().to_str().unwrap()])), 0);
    assert!(tmp.path().join("checks.csv").is_file());

    assert_eq!(code(&photodyn(&["closed-loop", "A99-nothing"])), 2);
}

#[test]
fn saturation_and_mixture_suites_pass() {
    for suite in ["A1-saturation", "A4-mixture"] {
        let out = photodyn(&["closed-loop", suite]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
        assert!(String::from_utf8_lossy(&out.stdout).contains(&format!("PASSED {suite}")));
    }
}
