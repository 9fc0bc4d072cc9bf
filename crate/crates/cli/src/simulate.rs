use std::path::Path;

use photodyn_core::sim::{
    run_protocol, simulate_trace, substream_seed, write_spectra_csv, Protocol, ProtocolRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{protocol_kind, RunConfig};
use crate::exit::{CliError, CliResult};
use crate::io::{create_dir, sha256_file, sha256_hex, write_json, write_with};

pub const TOOL: &str = "photodyn";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Copy of the config inside every run directory, read back by `analyze`.
pub const CONFIG_COPY: &str = "config.toml";
pub const MANIFEST: &str = "run.json";

/// Laser-off reference traces are capped at this length.
const REFERENCE_MAX_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub protocol: String,
    pub seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<OutputFile>,
}

/// Metadata the binary time-tag format does not carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimetagMeta {
    pub duration_ps: u64,
    pub channel: u32,
    pub events: usize,
}

/// Runs the protocol of `cfg` and writes raw outputs, the config copy and
/// the manifest into `dir`. Returns the manifest.
pub fn simulate(cfg: &RunConfig, config_text: &str, seed: u64, dir: &Path) -> CliResult<Manifest> {
    let record = run_protocol(&cfg.model, &cfg.detection, &cfg.protocol, seed).map_err(|e| match e.into() {
        CliError::Usage(m) => CliError::Usage(format!("invalid config: {m}")),
        other => other,
    })?;
    create_dir(dir)?;
    let mut files = vec![CONFIG_COPY.to_string()];
    std::fs::write(dir.join(CONFIG_COPY), config_text)?;
    let mut put = |name: &str| files.push(name.to_string());
    match &record {
        ProtocolRecord::Trace { trace, truth } => {
            write_with(dir, "trace.csv", |w| trace.write_csv(w))?;
            write_json(dir, "truth.json", truth)?;
            put("trace.csv");
            put("truth.json");
            if let Protocol::Trace { drive, duration_s, bin_s, .. } = &cfg.protocol {
                let reference = simulate_trace(
                    &cfg.model,
                    &cfg.detection,
                    &drive.dark(),
                    duration_s.min(REFERENCE_MAX_S),
                    *bin_s,
                    substream_seed(seed, u64::MAX, 0),
                )?;
                write_with(dir, "background.csv", |w| reference.write_csv(w))?;
                put("background.csv");
            }
        }
        ProtocolRecord::Timetags(stream) => {
            write_with(dir, "timetags.bin", |w| stream.write_binary(w))?;
            let meta = TimetagMeta {
                duration_ps: stream.duration(),
                channel: stream.channel(),
                events: stream.len(),
            };
            write_json(dir, "timetags.json", &meta)?;
            put("timetags.bin");
            put("timetags.json");
        }
        ProtocolRecord::Ple(r) => {
            write_with(dir, "ple.csv", |w| r.write_csv(w))?;
            write_json(dir, "ple.json", r)?;
            put("ple.csv");
            put("ple.json");
        }
        ProtocolRecord::Saturation(r) => {
            write_with(dir, "saturation.csv", |w| r.write_csv(w))?;
            write_json(dir, "saturation.json", r)?;
            put("saturation.csv");
            put("saturation.json");
        }
        ProtocolRecord::PumpProbe(r) => {
            write_with(dir, "pump_probe.csv", |w| r.write_csv(w))?;
            write_json(dir, "pump_probe.json", r)?;
            put("pump_probe.csv");
            put("pump_probe.json");
        }
        ProtocolRecord::Odmr(r) => {
            write_with(dir, "odmr.csv", |w| r.write_csv(w))?;
            write_json(dir, "odmr.json", r)?;
            put("odmr.csv");
            put("odmr.json");
        }
        ProtocolRecord::Angle(r) => {
            write_with(dir, "angle.csv", |w| r.write_csv(w))?;
            write_json(dir, "angle.json", r)?;
            put("angle.csv");
            put("angle.json");
        }
        ProtocolRecord::Spectra(frames) => {
            write_with(dir, "spectra.csv", |w| write_spectra_csv(frames, w))?;
            put("spectra.csv");
        }
        ProtocolRecord::Sequence(segments) => {
            for (k, t) in segments.iter().enumerate() {
                let name = format!("segment_{k}.csv");
                write_with(dir, &name, |w| t.write_csv(w))?;
                put(&name);
            }
        }
    }
    files.sort();
    let outputs = files
        .into_iter()
        .map(|file| {
            let sha256 = sha256_file(&dir.join(&file))?;
            Ok(OutputFile { file, sha256 })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        protocol: protocol_kind(&cfg.protocol).into(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        outputs,
    };
    write_json(dir, MANIFEST, &manifest)?;
    Ok(manifest)
}
