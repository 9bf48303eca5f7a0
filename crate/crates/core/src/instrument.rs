//! Conga layout, hit-testing and damped-modal drum synthesis.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DrumId, Micros, Pan};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_DURATION_S: f64 = 0.5;

/// Circular-membrane mode ratios, decay rates (1/s) and mix weights.
const MODES: [(f64, f64, f64); 3] = [(1.0, 8.0, 0.6), (1.59, 12.0, 0.25), (2.14, 16.0, 0.15)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drum {
    pub id: DrumId,
    pub center: [f64; 2],
    pub radius: f64,
    pub fundamental_hz: f64,
}

impl Drum {
    /// Distance from a point to the disc (zero inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.center[0]).hypot(p[1] - self.center[1]) - self.radius).max(0.0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1]) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrumLayout {
    pub drums: Vec<Drum>,
    pub width: f64,
    pub height: f64,
}

impl Default for DrumLayout {
    /// Three discs spaced evenly across a 1.2 m × 0.8 m surface.
    fn default() -> Self {
        let (width, height) = (1.2, 0.8);
        let drums = [(0.3, 190.0), (0.6, 220.0), (0.9, 250.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, f))| Drum { id: i as DrumId + 1, center: [x, height / 2.0], radius: 0.14, fundamental_hz: f })
            .collect();
        Self { drums, width, height }
    }
}

impl DrumLayout {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let layout: DrumLayout =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("layout: {e}")))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidConfig("surface bounds must be positive".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for d in &self.drums {
            if !ids.insert(d.id) {
                return Err(Error::InvalidConfig(format!("duplicate drum id {}", d.id)));
            }
            if !(d.radius > 0.0 && d.fundamental_hz > 0.0) {
                return Err(Error::InvalidConfig(format!("drum {} needs positive radius and pitch", d.id)));
            }
            let [x, y] = d.center;
            if x - d.radius < 0.0 || y - d.radius < 0.0 || x + d.radius > self.width || y + d.radius > self.height {
                return Err(Error::InvalidConfig(format!("drum {} extends past the surface", d.id)));
            }
        }
        Ok(())
    }

    pub fn drum(&self, id: DrumId) -> Option<&Drum> {
        self.drums.iter().find(|d| d.id == id)
    }
}

/// Drum under a surface point, boundary inclusive. The first listed drum
/// wins if discs overlap.
pub fn hit_test(position: [f64; 2], layout: &DrumLayout) -> Option<DrumId> {
    layout.drums.iter().find(|d| d.contains(position)).map(|d| d.id)
}

pub fn amplitude_for(level: u8, num_levels: u8) -> f64 {
    let l = num_levels.max(1);
    f64::from(level.clamp(1, l)) / f64::from(l)
}

/// Equal-power pan law across the surface width.
pub fn pan_for(position_x: f64, surface_width: f64) -> Pan {
    let frac = (position_x / surface_width).clamp(0.0, 1.0);
    let theta = frac * FRAC_PI_2;
    Pan { left: theta.cos(), right: theta.sin() }
}

/// Parameters handed to a renderer (server- or client-side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundTrigger {
    pub drum_id: DrumId,
    pub amplitude: f64,
    pub pan: Pan,
    pub t_fire: Micros,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StereoBuffer {
    pub sample_rate: u32,
    pub left: Vec<f32>,
    pub right: Vec<f32>,
}

impl StereoBuffer {
    pub fn silent(sample_rate: u32, frames: usize) -> Self {
        Self { sample_rate, left: vec![0.0; frames], right: vec![0.0; frames] }
    }

    pub fn frames(&self) -> usize {
        self.left.len()
    }

    pub fn peak(&self) -> f32 {
        self.left.iter().chain(&self.right).fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Add `other` starting at `offset` frames, growing as needed.
    pub fn mix_at(&mut self, other: &StereoBuffer, offset: usize) {
        let end = offset + other.frames();
        if end > self.frames() {
            self.left.resize(end, 0.0);
            self.right.resize(end, 0.0);
        }
        for (i, (l, r)) in other.left.iter().zip(&other.right).enumerate() {
            self.left[offset + i] += l;
            self.right[offset + i] += r;
        }
    }

    /// 16-bit little-endian stereo PCM WAV; samples are clipped to [-1, 1].
    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let io = |e: hound::Error| Error::Io(e.to_string());
        let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
        let q = |v: f32| (v.clamp(-1.0, 1.0) * f32::from(i16::MAX)).round() as i16;
        for (l, r) in self.left.iter().zip(&self.right) {
            w.write_sample(q(*l)).map_err(io)?;
            w.write_sample(q(*r)).map_err(io)?;
        }
        w.finalize().map_err(io)
    }
}

/// Render the damped-modal tone of the triggered drum.
///
/// Unknown drum ids render silence.
pub fn synthesize(trigger: &SoundTrigger, layout: &DrumLayout, sample_rate: u32, duration_s: f64) -> StereoBuffer {
    let frames = (duration_s * f64::from(sample_rate)).round().max(0.0) as usize;
    let mut out = StereoBuffer::silent(sample_rate, frames);
    let Some(drum) = layout.drum(trigger.drum_id) else {
        return out;
    };
    let amp = trigger.amplitude.clamp(0.0, 1.0);
    let (gl, gr) = (amp * trigger.pan.left, amp * trigger.pan.right);
    let dt = 1.0 / f64::from(sample_rate);
    for n in 0..frames {
        let t = n as f64 * dt;
        let tone: f64 = MODES
            .iter()
            .map(|&(ratio, decay, weight)| weight * (-decay * t).exp() * (TAU * ratio * drum.fundamental_hz * t).sin())
            .sum();
        out.left[n] = (gl * tone) as f32;
        out.right[n] = (gr * tone) as f32;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trig(amplitude: f64, pan: Pan) -> SoundTrigger {
        SoundTrigger { drum_id: 2, amplitude, pan, t_fire: 0 }
    }

    #[test]
    fn default_layout_is_valid() {
        let l = DrumLayout::default();
        l.validate().unwrap();
        assert_eq!(l.drums.iter().map(|d| d.center[0]).collect::<Vec<_>>(), vec![0.3, 0.6, 0.9]);
    }

    #[test]
    fn hits() {
        let l = DrumLayout::default();
        assert_eq!(hit_test([0.6, 0.4], &l), Some(2));
        assert_eq!(hit_test([0.6 + 0.14, 0.4], &l), Some(2));
        assert_eq!(hit_test([0.45, 0.4], &l), None);
        assert_eq!(hit_test([0.05, 0.05], &l), None);
    }

    #[test]
    fn layout_validation() {
        let mut l = DrumLayout::default();
        l.drums[1].id = 1;
        assert!(l.validate().is_err());
        let mut l = DrumLayout::default();
        l.drums[0].center = [0.05, 0.4];
        assert!(l.validate().is_err());
        let mut l = DrumLayout::default();
        l.drums[0].radius = 0.0;
        assert!(l.validate().is_err());
    }

    #[test]
    fn amplitude_map() {
        assert_eq!(amplitude_for(4, 4), 1.0);
        assert_eq!(amplitude_for(1, 4), 0.25);
        assert_eq!(amplitude_for(3, 4), 0.75);
    }

    #[test]
    fn pan_points() {
        let c = pan_for(0.6, 1.2);
        assert!((c.left - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((c.right - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(pan_for(0.0, 1.2), Pan { left: 1.0, right: 0.0 });
        let q = pan_for(0.9, 1.2);
        let th = 3.0 * std::f64::consts::PI / 8.0;
        assert!((q.left - th.cos()).abs() < 1e-12 && (q.right - th.sin()).abs() < 1e-12);
        assert_eq!(pan_for(-1.0, 1.2), pan_for(0.0, 1.2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn equal_power(x in -0.5f64..2.0, w in 0.1f64..5.0) {
            let p = pan_for(x, w);
            prop_assert!((p.left * p.left + p.right * p.right - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn silent_and_hard_left() {
        let l = DrumLayout::default();
        let s = synthesize(&trig(0.0, pan_for(0.6, 1.2)), &l, DEFAULT_SAMPLE_RATE, DEFAULT_DURATION_S);
        assert_eq!(s.frames(), 22_050);
        assert!(s.left.iter().chain(&s.right).all(|v| *v == 0.0));
        let s = synthesize(&trig(1.0, Pan { left: 1.0, right: 0.0 }), &l, DEFAULT_SAMPLE_RATE, DEFAULT_DURATION_S);
        assert!(s.right.iter().all(|v| *v == 0.0));
        assert!(s.peak() > 0.3 && s.peak() <= 1.0);
    }

    #[test]
    fn linear_in_amplitude() {
        let l = DrumLayout::default();
        let p = pan_for(0.4, 1.2);
        let a = synthesize(&trig(0.3, p), &l, DEFAULT_SAMPLE_RATE, 0.2);
        let b = synthesize(&trig(0.6, p), &l, DEFAULT_SAMPLE_RATE, 0.2);
        for (x, y) in a.left.iter().zip(&b.left).chain(a.right.iter().zip(&b.right)) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn peak_bounded_and_monotone() {
        let l = DrumLayout::default();
        let p = pan_for(0.6, 1.2);
        let mut last = 0.0f32;
        for level in 1..=4 {
            let amp = amplitude_for(level, 4);
            let s = synthesize(&trig(amp, p), &l, DEFAULT_SAMPLE_RATE, DEFAULT_DURATION_S);
            assert!(f64::from(s.peak()) <= amp + 1e-7);
            assert!(s.peak() >= last);
            last = s.peak();
        }
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let l = DrumLayout::default();
        let s = synthesize(&trig(0.8, pan_for(0.3, 1.2)), &l, DEFAULT_SAMPLE_RATE, 0.1);
        s.write_wav(&path).unwrap();
        let r = hound::WavReader::open(&path).unwrap();
        let spec = r.spec();
        assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (2, 44_100, 16));
        assert_eq!(r.len() as usize, 2 * s.frames());
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(bytes.len(), 44 + 4 * s.frames());
    }
}
