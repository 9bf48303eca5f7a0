//! Pre-designed compositions shown to the player as upcoming-pad cues.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::DrumLayout;
use crate::types::{DrumId, Micros};

pub const DEFAULT_CUE_LEAD_MS: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub time_s: f64,
    pub drum: DrumId,
}

/// A validated list of beats, ordered by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition {
    beats: Vec<Beat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionCue {
    /// When to show the cue, µs from composition start.
    pub t: Micros,
    pub drum_id: DrumId,
    pub beat_index: usize,
}

impl Composition {
    pub fn new(mut beats: Vec<Beat>, layout: &DrumLayout) -> Result<Self> {
        for (i, b) in beats.iter().enumerate() {
            if layout.drum(b.drum).is_none() {
                return Err(Error::InvalidInput(format!("beat {i}: unknown drum {}", b.drum)));
            }
            if !(b.time_s >= 0.0 && b.time_s.is_finite()) {
                return Err(Error::InvalidInput(format!("beat {i}: bad time {}", b.time_s)));
            }
        }
        beats.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        Ok(Self { beats })
    }

    pub fn from_json(text: &str, layout: &DrumLayout) -> Result<Self> {
        let beats: Vec<Beat> =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("composition: {e}")))?;
        Self::new(beats, layout)
    }

    pub fn load(path: &Path, layout: &DrumLayout) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, layout)
    }

    pub fn beats(&self) -> &[Beat] {
        &self.beats
    }

    /// Cues `lead_ms` ahead of each beat; cues that would fall before the
    /// start are shown at t = 0.
    pub fn cues(&self, lead_ms: f64) -> Vec<CompositionCue> {
        let lead_us = (lead_ms * 1000.0).round() as i64;
        self.beats
            .iter()
            .enumerate()
            .map(|(i, b)| CompositionCue {
                t: ((b.time_s * 1e6).round() as i64 - lead_us).max(0) as Micros,
                drum_id: b.drum,
                beat_index: i,
            })
            .collect()
    }
}
