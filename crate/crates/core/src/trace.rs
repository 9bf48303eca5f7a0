//! Synthetic scenario generation, JSONL trace I/O, and replay.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::{hit_test, synthesize, DrumLayout, StereoBuffer, DEFAULT_DURATION_S, DEFAULT_SAMPLE_RATE};
use crate::pipeline::{run, PipelineConfig, RunReport};
use crate::types::{DrumId, HandObservation, ImuSample, Label, Micros, TraceRecord, DEFAULT_SAMPLE_RATE_HZ};

const STANDARD_GRAVITY: f64 = 9.806_65;
/// Hard taps clear the default threshold by at least 2x.
pub const HARD_DIP_G: (f64, f64) = (1.0, 2.5);
/// Soft taps straddle the default -0.5 threshold.
pub const SOFT_DIP_G: (f64, f64) = (0.35, 0.7);
/// Post-impact ringing as multiples of the dip, applied to the next samples.
const RING: [f64; 2] = [1.4, -0.5];
/// Hand comes to rest this long before the tap.
const SETTLE_S: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityClass {
    Soft,
    Hard,
}

fn default_move_s() -> f64 {
    0.3
}

/// One scheduled tap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapSpec {
    pub t_s: f64,
    /// Target drum; its centre is the tap position unless `position` is set.
    #[serde(default)]
    pub drum: Option<DrumId>,
    pub class: IntensityClass,
    /// Exact Z dip in g; drawn from the class range when absent.
    #[serde(default)]
    pub dip_g: Option<f64>,
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    /// Hand height above the surface at the tap.
    #[serde(default)]
    pub height_m: f64,
    /// Duration of the planar move from the previous tap position.
    #[serde(default = "default_move_s")]
    pub move_s: f64,
}

impl TapSpec {
    pub fn on(drum: DrumId, t_s: f64, class: IntensityClass) -> Self {
        Self { t_s, drum: Some(drum), class, dip_g: None, position: None, height_m: 0.0, move_s: default_move_s() }
    }
}

fn default_noise() -> f64 {
    0.01
}
fn default_depth() -> f64 {
    1.5
}
fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}
fn default_camera() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration_s: f64,
    #[serde(default)]
    pub taps: Vec<TapSpec>,
    /// Gaussian noise on every accelerometer axis, g.
    #[serde(default = "default_noise")]
    pub noise_g: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub surface_depth_m: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_camera")]
    pub camera_hz: f64,
}

impl ScenarioSpec {
    pub fn new(duration_s: f64, taps: Vec<TapSpec>, seed: u64) -> Self {
        Self {
            duration_s,
            taps,
            noise_g: default_noise(),
            seed,
            surface_depth_m: default_depth(),
            sample_rate_hz: default_rate(),
            camera_hz: default_camera(),
        }
    }

    pub fn validate(&self, layout: &DrumLayout) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be positive".into());
        }
        if !(self.sample_rate_hz > 0.0 && self.camera_hz > 0.0 && self.surface_depth_m > 0.0 && self.noise_g >= 0.0) {
            return bad("rates, depth and noise must be positive".into());
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, tap) in self.taps.iter().enumerate() {
            if !(0.0..self.duration_s).contains(&tap.t_s) {
                return bad(format!("tap {i} at {} s is outside [0, {})", tap.t_s, self.duration_s));
            }
            if tap.t_s < prev {
                return bad(format!("tap {i} is out of order"));
            }
            prev = tap.t_s;
            match (tap.drum, tap.position) {
                (None, None) => return bad(format!("tap {i} needs a drum or a position")),
                (Some(d), _) if layout.drum(d).is_none() => return bad(format!("tap {i}: unknown drum {d}")),
                _ => {}
            }
            if let Some(d) = tap.dip_g {
                if !(d > 0.0 && d < 20.0) {
                    return bad(format!("tap {i}: dip {d} g out of range"));
                }
            }
            if !(tap.move_s > 0.0 && tap.height_m >= 0.0 && tap.height_m < self.surface_depth_m) {
                return bad(format!("tap {i}: bad move duration or height"));
            }
        }
        Ok(())
    }
}

/// Hand path: piecewise rest / smooth move segments in surface coordinates.
struct HandPath {
    /// (start_s, end_s, from, to) with from/to = [x, y, z]
    moves: Vec<(f64, f64, [f64; 3], [f64; 3])>,
    start: [f64; 3],
}

impl HandPath {
    /// Normalized displacement with zero velocity at both ends: `τ - sin(2πτ)/2π`.
    fn shape(tau: f64) -> f64 {
        tau - (TAU * tau).sin() / TAU
    }

    fn at(&self, t: f64) -> [f64; 3] {
        let mut p = self.start;
        for &(s, e, from, to) in &self.moves {
            if t < s {
                break;
            }
            let f = if t >= e { 1.0 } else { Self::shape((t - s) / (e - s)) };
            p = [0, 1, 2].map(|k| from[k] + f * (to[k] - from[k]));
        }
        p
    }

    /// Planar acceleration in g at time `t`.
    fn accel_g(&self, t: f64) -> [f64; 2] {
        for &(s, e, from, to) in &self.moves {
            if t > s && t < e {
                let dur = e - s;
                let tau = (t - s) / dur;
                let k = (TAU / (dur * dur)) * (TAU * tau).sin() / STANDARD_GRAVITY;
                return [k * (to[0] - from[0]), k * (to[1] - from[1])];
            }
        }
        [0.0, 0.0]
    }
}

/// Per-tap ground truth returned alongside the generated trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTap {
    pub t: Micros,
    pub dip_g: f64,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub records: Vec<TraceRecord>,
    pub taps: Vec<GeneratedTap>,
}

impl GeneratedTrace {
    pub fn imu(&self) -> Vec<ImuSample> {
        self.records.iter().filter_map(|r| if let TraceRecord::Imu(s) = r { Some(*s) } else { None }).collect()
    }
}

fn micros(s: f64) -> Micros {
    (s * 1e6).round() as Micros
}

/// Build a trace for `spec`. Pure in `(spec, layout)`; all randomness comes
/// from `spec.seed`.
pub fn generate(spec: &ScenarioSpec, layout: &DrumLayout) -> Result<GeneratedTrace> {
    spec.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let target = |tap: &TapSpec| -> [f64; 3] {
        let xy = tap.position.unwrap_or_else(|| layout.drum(tap.drum.expect("validated")).expect("validated").center);
        [xy[0], xy[1], spec.surface_depth_m - tap.height_m]
    };
    let mut path = HandPath {
        start: spec.taps.first().map(target).unwrap_or([layout.width / 2.0, layout.height / 2.0, spec.surface_depth_m]),
        moves: Vec::new(),
    };
    let mut prev_pos = path.start;
    let mut prev_t = f64::NEG_INFINITY;
    for tap in &spec.taps {
        let to = target(tap);
        if to != prev_pos {
            let end = tap.t_s - SETTLE_S;
            let start = (end - tap.move_s).max(prev_t + SETTLE_S);
            let (start, end) = if start < end { (start, end) } else { (tap.t_s - 1e-3, tap.t_s) };
            path.moves.push((start, end, prev_pos, to));
        }
        prev_pos = to;
        prev_t = tap.t_s;
    }

    let n = (spec.duration_s * spec.sample_rate_hz).ceil() as usize;
    let period_us = 1e6 / spec.sample_rate_hz;
    let times: Vec<Micros> = (0..n).map(|i| (i as f64 * period_us).round() as Micros).collect();
    let mut imu: Vec<ImuSample> = times
        .iter()
        .map(|&t| {
            let a = path.accel_g(t as f64 / 1e6);
            ImuSample::new(t, a[0], a[1], 1.0)
        })
        .collect();

    let mut gen_taps = Vec::with_capacity(spec.taps.len());
    for tap in &spec.taps {
        let dip = tap.dip_g.unwrap_or_else(|| {
            let (lo, hi) = match tap.class {
                IntensityClass::Hard => HARD_DIP_G,
                IntensityClass::Soft => SOFT_DIP_G,
            };
            rng.random_range(lo..=hi)
        });
        let t = micros(tap.t_s);
        let idx = times.partition_point(|&s| s < t);
        if idx >= imu.len() {
            return Err(Error::InvalidSpec(format!("tap at {} s has no sample", tap.t_s)));
        }
        imu[idx].az -= dip;
        let mut level = -dip;
        for (k, r) in RING.iter().enumerate() {
            if let Some(s) = imu.get_mut(idx + 1 + k) {
                // cumulative: sample value relative to baseline
                level += r * dip;
                s.az += level;
            }
        }
        gen_taps.push(GeneratedTap { t, dip_g: dip, sample_index: idx });
    }

    if spec.noise_g > 0.0 {
        let noise = Normal::new(0.0, spec.noise_g).expect("validated");
        for s in &mut imu {
            s.ax += noise.sample(&mut rng);
            s.ay += noise.sample(&mut rng);
            s.az += noise.sample(&mut rng);
        }
    }

    let frames = (spec.duration_s * spec.camera_hz).ceil() as usize;
    let hands = (0..frames).map(|i| {
        let ts = i as f64 / spec.camera_hz;
        let p = path.at(ts);
        HandObservation { t: micros(ts), x: p[0], y: p[1], z: p[2], confidence: 1.0 }
    });
    let labels = spec.taps.iter().map(|tap| {
        let drum = tap.drum.or_else(|| tap.position.and_then(|p| hit_test(p, layout)));
        Label { t: micros(tap.t_s), is_tap: true, is_soft: tap.class == IntensityClass::Soft, drum_id: drum }
    });

    let mut records: Vec<TraceRecord> = imu
        .into_iter()
        .map(TraceRecord::Imu)
        .chain(hands.map(TraceRecord::Hand))
        .chain(labels.map(TraceRecord::Label))
        .collect();
    let kind = |r: &TraceRecord| match r {
        TraceRecord::Imu(_) => 0,
        TraceRecord::Hand(_) => 1,
        TraceRecord::Label(_) => 2,
    };
    records.sort_by_key(|r| (r.t(), kind(r)));
    Ok(GeneratedTrace { records, taps: gen_taps })
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parse JSONL; blank lines are skipped, errors carry 1-based line numbers.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_trace(std::io::BufReader::new(f))
}

/// Mix every trigger into one timeline starting at t = 0.
pub fn render_timeline(report: &RunReport, layout: &DrumLayout) -> StereoBuffer {
    let rate = DEFAULT_SAMPLE_RATE;
    let mut out = StereoBuffer::silent(rate, 0);
    for trig in &report.triggers {
        let tone = synthesize(trig, layout, rate, DEFAULT_DURATION_S);
        let offset = (trig.t_fire as f64 * f64::from(rate) / 1e6).round() as usize;
        out.mix_at(&tone, offset);
    }
    out
}

/// Read, run, and optionally render a trace file.
pub fn replay(trace: &Path, cfg: &PipelineConfig, seed: u64, wav: Option<&Path>) -> Result<RunReport> {
    let records = read_trace_file(trace)?;
    let report = run(&records, cfg, seed)?;
    if let Some(path) = wav {
        render_timeline(&report, &cfg.layout).write_wav(path)?;
    }
    Ok(report)
}
