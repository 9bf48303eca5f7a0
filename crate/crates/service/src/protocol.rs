//! Socket messages. One JSON object per WebSocket text frame, tagged by
//! `"type"`.

use mutable_core::composition::{Beat, CompositionCue};
use mutable_core::instrument::{DrumLayout, SoundTrigger};
use mutable_core::localize::DropReason;
use mutable_core::pipeline::LatencyStats;
use mutable_core::types::{DrumId, ImuSample, LatencyBreakdown, Micros, Pan};
use serde::{Deserialize, Serialize};

fn default_realtime() -> bool {
    true
}

/// Client → server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionMessage {
    /// A touch on the surface. `t` is client time in microseconds,
    /// `x`/`y` in surface metres, `pressure` in [0, 1].
    PointerTap { t: Micros, x: f64, y: f64, pressure: f64 },
    /// The hand moved without tapping.
    HandMove { t: Micros, x: f64, y: f64 },
    /// Recalibrate the tap threshold from recorded training taps.
    Calibrate {
        taps: Vec<Vec<ImuSample>>,
        #[serde(default)]
        safety: Option<f64>,
    },
    Hello {
        #[serde(default)]
        client: String,
    },
    /// Stream cues for a composition. With `realtime` false every cue is
    /// sent at once.
    StartComposition {
        beats: Vec<Beat>,
        #[serde(default)]
        lead_ms: Option<f64>,
        #[serde(default = "default_realtime")]
        realtime: bool,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub taps: usize,
    pub hits: usize,
    pub drops: usize,
    /// Over the most recent hits only.
    pub window: usize,
    pub latency: LatencyStats,
}

/// Server → client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    LayoutInfo { layout: DrumLayout },
    SoundFired {
        seq: u32,
        drum_id: DrumId,
        amplitude: f64,
        pan: Pan,
        level: u8,
        fundamental_hz: f64,
        latency: LatencyBreakdown,
        trigger: SoundTrigger,
    },
    Dropped {
        #[serde(default)]
        seq: Option<u32>,
        reason: DropReason,
        latency: LatencyBreakdown,
    },
    Metrics { metrics: SessionMetrics },
    CompositionCue { cue: CompositionCue },
    Calibrated { tap_threshold: f64, bin_edges: Vec<f64> },
    /// Malformed or rejected input. The connection stays open.
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into() }
    }
}
