//! Domain values shared by every stage, and the JSONL trace vocabulary.

use serde::{Deserialize, Serialize};

/// Timestamps are integer microseconds.
pub type Micros = u64;

/// Identifier of a drum disc in a [`crate::instrument::DrumLayout`].
pub type DrumId = u32;

/// Default accelerometer output rate of the wearable band.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 104.0;

/// Acceleration magnitudes at or above this are treated as a units error.
pub const MAX_PLAUSIBLE_ACCEL_G: f64 = 100.0;

/// One tri-axial accelerometer reading, in g, in the band frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: Micros,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl ImuSample {
    pub fn new(t: Micros, ax: f64, ay: f64, az: f64) -> Self {
        Self { t, ax, ay, az }
    }
}

/// Per-sample first difference of acceleration, in g per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JerkSample {
    pub t: Micros,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
}

impl JerkSample {
    /// Magnitude of the in-plane (X/Y) component.
    pub fn planar(&self) -> f64 {
        self.jx.hypot(self.jy)
    }
}

/// A detected tap as emitted by the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapEvent {
    pub t: Micros,
    /// Magnitude of the negative Z jerk at the trigger sample.
    pub intensity: f64,
    /// Discretized intensity, `1..=num_levels`.
    pub level: u8,
    /// Planar movement was observed since the previous tap.
    pub movement_flag: bool,
    pub seq: u32,
}

/// Hand position in surface coordinates plus depth from the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandObservation {
    pub t: Micros,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

/// Hand position resolved for one tap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Per-stage latency of one tap. `total_ms` is always the exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub comm_ms: f64,
    pub localization_ms: f64,
    pub total_ms: f64,
}

impl LatencyBreakdown {
    pub fn new(comm_ms: f64, localization_ms: f64) -> Self {
        Self { comm_ms, localization_ms, total_ms: comm_ms + localization_ms }
    }
}

/// Stereo gains, `left² + right² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pan {
    pub left: f64,
    pub right: f64,
}

/// A tap resolved against the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitEvent {
    pub tap: TapEvent,
    /// `None` means the tap fell outside every drum and produced no sound.
    pub drum_id: Option<DrumId>,
    pub position: (f64, f64),
    pub latency: LatencyBreakdown,
    pub amplitude: f64,
    pub pan: Pan,
}

/// Ground-truth annotation carried in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub t: Micros,
    #[serde(rename = "tap")]
    pub is_tap: bool,
    #[serde(rename = "soft")]
    pub is_soft: bool,
    #[serde(rename = "drum")]
    pub drum_id: Option<DrumId>,
}

/// One line of a JSONL trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TraceRecord {
    Imu(ImuSample),
    Hand(HandObservation),
    Label(Label),
}

impl TraceRecord {
    pub fn t(&self) -> Micros {
        match self {
            TraceRecord::Imu(s) => s.t,
            TraceRecord::Hand(h) => h.t,
            TraceRecord::Label(l) => l.t,
        }
    }
}

/// What was wrong with a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Record timestamp is earlier than the previous record's.
    OutOfOrder { prev_t: Micros },
    /// IMU or hand timestamp does not strictly increase within its stream.
    NonIncreasing { prev_t: Micros },
    NonFinite,
    /// Acceleration magnitude looks like m/s² rather than g.
    AccelOutOfRange,
    NonPositiveDepth,
    ConfidenceOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub t: Micros,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check ordering and unit sanity of a trace. At most one ordering
/// violation is reported per record.
pub fn validate_stream(records: &[TraceRecord]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut prev_any: Option<Micros> = None;
    let mut prev_imu: Option<Micros> = None;
    let mut prev_hand: Option<Micros> = None;
    let mut push = |index: usize, t: Micros, kind: ViolationKind| {
        report.violations.push(Violation { index, t, kind });
    };

    for (index, rec) in records.iter().enumerate() {
        let t = rec.t();
        let stream_prev = match rec {
            TraceRecord::Imu(_) => prev_imu,
            TraceRecord::Hand(_) => prev_hand,
            TraceRecord::Label(_) => None,
        };
        match (prev_any, stream_prev) {
            (Some(p), _) if t < p => push(index, t, ViolationKind::OutOfOrder { prev_t: p }),
            (_, Some(p)) if t <= p => push(index, t, ViolationKind::NonIncreasing { prev_t: p }),
            _ => {}
        }

        match rec {
            TraceRecord::Imu(s) => {
                let a = [s.ax, s.ay, s.az];
                if a.iter().any(|v| !v.is_finite()) {
                    push(index, t, ViolationKind::NonFinite);
                } else if a.iter().any(|v| v.abs() >= MAX_PLAUSIBLE_ACCEL_G) {
                    push(index, t, ViolationKind::AccelOutOfRange);
                }
                prev_imu = Some(t);
            }
            TraceRecord::Hand(h) => {
                if ![h.x, h.y, h.z, h.confidence].iter().all(|v| v.is_finite()) {
                    push(index, t, ViolationKind::NonFinite);
                } else {
                    if h.z <= 0.0 {
                        push(index, t, ViolationKind::NonPositiveDepth);
                    }
                    if !(0.0..=1.0).contains(&h.confidence) {
                        push(index, t, ViolationKind::ConfidenceOutOfRange);
                    }
                }
                prev_hand = Some(t);
            }
            TraceRecord::Label(_) => {}
        }
        prev_any = Some(prev_any.map_or(t, |p| p.max(t)));
    }
    report
}
