//! Z-axis jerk thresholding with a trigger-to-trigger debounce.
//!
//! A tap fires on the first sample whose Z jerk drops below the (negative)
//! threshold, provided at least `debounce_ms` of event time has elapsed
//! since the previous tap.

use serde::{Deserialize, Serialize};

use crate::discretize::{discretize, Binning};
use crate::error::{Error, Result};
use crate::movement::{MovementConfig, MovementTracker};
use crate::types::{ImuSample, JerkSample, Micros, TapEvent, DEFAULT_SAMPLE_RATE_HZ};

pub const DEFAULT_THRESHOLD_G: f64 = -0.5;
pub const DEFAULT_DEBOUNCE_MS: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Negative Z jerk threshold, g per sample.
    pub threshold: f64,
    pub debounce_ms: f64,
    pub sample_rate_hz: f64,
    pub movement: MovementConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD_G,
            debounce_ms: DEFAULT_DEBOUNCE_MS,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            movement: MovementConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold < 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!("threshold {} must be < 0", self.threshold)));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if !(self.debounce_ms > 1000.0 / self.sample_rate_hz) {
            return Err(Error::InvalidConfig(format!(
                "debounce {} ms must exceed one sample period",
                self.debounce_ms
            )));
        }
        Ok(())
    }

    pub fn debounce_us(&self) -> Micros {
        (self.debounce_ms * 1000.0).round() as Micros
    }
}

/// Streaming state of one band's detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub last_sample: Option<ImuSample>,
    pub last_tap_t: Option<Micros>,
    /// False while the debounce window after the last tap is open.
    pub armed: bool,
    pub next_seq: u32,
    pub movement: MovementTracker,
}

impl DetectorState {
    pub fn new(cfg: &DetectorConfig) -> Self {
        Self {
            last_sample: None,
            last_tap_t: None,
            armed: true,
            next_seq: 0,
            movement: MovementTracker::new(cfg.movement),
        }
    }
}

/// What one sample did to the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detection {
    Quiet,
    Tap(TapEvent),
    /// Crossed the threshold inside the debounce window.
    Debounced { intensity: f64 },
}

pub fn jerk(prev: &ImuSample, curr: &ImuSample) -> Result<JerkSample> {
    if curr.t <= prev.t {
        return Err(Error::InvalidInput(format!(
            "timestamps must increase: {} then {}",
            prev.t, curr.t
        )));
    }
    Ok(JerkSample {
        t: curr.t,
        jx: curr.ax - prev.ax,
        jy: curr.ay - prev.ay,
        jz: curr.az - prev.az,
    })
}

fn advance(
    state: &mut DetectorState,
    sample: &ImuSample,
    cfg: &DetectorConfig,
    binning: &Binning,
) -> Result<Detection> {
    let j = match &state.last_sample {
        Some(prev) => Some(jerk(prev, sample)?),
        None => None,
    };
    state.last_sample = Some(*sample);
    let debounce = cfg.debounce_us();
    let open = |last: Option<Micros>| last.is_none_or(|lt| sample.t - lt >= debounce);

    let Some(j) = j else {
        state.armed = open(state.last_tap_t);
        return Ok(Detection::Quiet);
    };
    state.movement.update(&j);
    state.armed = open(state.last_tap_t);

    if j.jz >= cfg.threshold {
        return Ok(Detection::Quiet);
    }
    let intensity = -j.jz;
    if !state.armed {
        return Ok(Detection::Debounced { intensity });
    }
    let tap = TapEvent {
        t: sample.t,
        intensity,
        level: discretize(intensity, binning),
        movement_flag: state.movement.moved(),
        seq: state.next_seq,
    };
    state.next_seq = state.next_seq.wrapping_add(1);
    state.last_tap_t = Some(sample.t);
    state.armed = false;
    state.movement.reset();
    Ok(Detection::Tap(tap))
}

/// One detector step in functional form.
pub fn step(
    state: &DetectorState,
    sample: &ImuSample,
    cfg: &DetectorConfig,
    binning: &Binning,
) -> Result<(DetectorState, Option<TapEvent>)> {
    let mut next = state.clone();
    let tap = match advance(&mut next, sample, cfg, binning)? {
        Detection::Tap(t) => Some(t),
        _ => None,
    };
    Ok((next, tap))
}

/// Owned detector for streaming use.
#[derive(Debug, Clone)]
pub struct TapDetector {
    cfg: DetectorConfig,
    binning: Binning,
    state: DetectorState,
}

impl TapDetector {
    pub fn new(cfg: DetectorConfig, binning: Binning) -> Result<Self> {
        cfg.validate()?;
        binning.validate()?;
        Ok(Self { state: DetectorState::new(&cfg), cfg, binning })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn push(&mut self, sample: &ImuSample) -> Result<Detection> {
        advance(&mut self.state, sample, &self.cfg, &self.binning)
    }
}

pub fn detect_all(
    stream: &[ImuSample],
    cfg: &DetectorConfig,
    binning: &Binning,
) -> Result<Vec<TapEvent>> {
    let mut det = TapDetector::new(*cfg, binning.clone())?;
    let mut out = Vec::new();
    for s in stream {
        if let Detection::Tap(t) = det.push(s)? {
            out.push(t);
        }
    }
    Ok(out)
}
