//! Hardware-free surface-drum pipeline.
//!
//! Wrist-band IMU samples become taps ([`detect`]), taps are discretized
//! ([`discretize`]) and shipped over a simulated BLE link ([`transport`]),
//! the server resolves where the hand is ([`localize`]), checks it against
//! the surface and the drum layout ([`instrument`]) and fires an
//! intensity-scaled, panned drum tone. [`pipeline`] ties the stages together
//! and accounts latency per tap; [`trace`] generates and replays JSONL
//! scenarios.

pub mod calibration;
pub mod composition;
pub mod detect;
pub mod discretize;
pub mod error;
pub mod instrument;
pub mod localize;
pub mod movement;
pub mod pipeline;
pub mod scenarios;
pub mod trace;
pub mod training;
pub mod transport;
pub mod types;

pub use calibration::{CalibrationProfile, Homography};
pub use detect::{DetectorConfig, TapDetector};
pub use discretize::Binning;
pub use error::{Error, Result};
pub use instrument::{DrumLayout, SoundTrigger};
pub use localize::{DropReason, Policy, SimulatedLocalizer};
pub use pipeline::{run, PipelineConfig, RunReport, Session, TapOutcome};
pub use transport::{LatencyModel, PayloadMode};
pub use types::*;
