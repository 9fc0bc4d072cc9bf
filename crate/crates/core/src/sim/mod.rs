//! Stochastic simulation of the emitter and of the measurement protocols.

mod drive;
mod engine;
mod model;
mod photon;
mod protocols;
mod rates;
mod seed;
mod state;
mod steady;

pub use drive::{LaserDrive, MwTone, PulseSequence, SequenceSegment};
pub use engine::{initial_state, simulate_trace, simulate_trace_with_truth, TraceTruth, TwoTier};
pub use model::{
    Band, DetectionModel, EmitterModel, JumpComponent, MwResponse, PathwaySwitch, SdJump, Shelving,
    SpectralShape, FWHM_PER_SIGMA, K_B_MEV,
};
pub use photon::{background_tags, expected_events, merge_dedup, simulate_timetags, simulate_timetags_capped, DEFAULT_EVENT_CAP};
pub use protocols::{
    emission_profile, read_spectra_csv, run_protocol, write_spectra_csv, AngleRecord, AngleSweep, OdmrRecord, OdmrSweep, PleRecord,
    PleSweep, Protocol, ProtocolRecord, PumpProbe, PumpProbeRecord, SaturationRecord, SaturationSweep, SpectralSeries,
    run_angle, run_odmr, run_ple, run_pump_probe, run_saturation, run_sequence, run_spectral_series,
};
pub use rates::{
    emission_rate, jump_rate, peak_emission_rate, sample_detuning, saturation_parameter, slow_rates,
    step_slow_state, Transition,
};
pub use seed::{substream, substream_seed};
pub use state::{Electronic, EnvState, Pathway, Shelf};
pub use steady::{stationary_occupancy, stationary_rate};
