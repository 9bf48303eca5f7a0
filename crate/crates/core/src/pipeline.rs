//! End-to-end tap processing: band detector → transport → localization
//! gate → depth gate → hit test → sound trigger, plus evaluation against
//! trace labels.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationProfile;
use crate::detect::{detect_all, DetectorConfig};
use crate::discretize::Binning;
use crate::error::{Error, Result};
use crate::instrument::{amplitude_for, hit_test, pan_for, DrumLayout, SoundTrigger};
use crate::localize::{
    depth_gate, resolve_position, DropReason, Policy, PositionCache, PrecisionStats, SimulatedLocalizer,
    DEFAULT_DEPTH_TOL_M, DEFAULT_PRECISION_RADIUS_M,
};
use crate::transport::{encode_raw, encode_tap, Channel, LatencyModel, PayloadMode, RawAccelMessage, TapMessage};
use crate::types::{
    validate_stream, HandObservation, HitEvent, ImuSample, Label, LatencyBreakdown, Micros, TapEvent, TraceRecord,
};

pub const DEFAULT_MATCH_WINDOW_MS: f64 = 150.0;

/// Everything a run needs. The tap threshold and bin edges are taken from
/// `profile`; `detector.threshold` is overwritten with the profile value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub policy: Policy,
    pub payload: PayloadMode,
    pub detector: DetectorConfig,
    pub latency: LatencyModel,
    pub localizer: SimulatedLocalizer,
    pub layout: DrumLayout,
    pub profile: CalibrationProfile,
    pub depth_tol_m: f64,
    pub match_window_ms: f64,
    pub precision_radius_m: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Adaptive,
            payload: PayloadMode::Binary,
            detector: DetectorConfig::default(),
            latency: LatencyModel::default(),
            localizer: SimulatedLocalizer::default(),
            layout: DrumLayout::default(),
            profile: CalibrationProfile::default(),
            depth_tol_m: DEFAULT_DEPTH_TOL_M,
            match_window_ms: DEFAULT_MATCH_WINDOW_MS,
            precision_radius_m: DEFAULT_PRECISION_RADIUS_M,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig { threshold: self.profile.tap_threshold, ..self.detector }
    }

    pub fn binning(&self) -> Result<Binning> {
        self.profile.binning()
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.detector().validate()?;
        self.latency.validate()?;
        self.localizer.validate()?;
        self.layout.validate()?;
        if !(self.depth_tol_m >= 0.0 && self.match_window_ms >= 0.0 && self.precision_radius_m >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// A detected tap that produced no sound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub tap: TapEvent,
    pub reason: DropReason,
    pub latency: LatencyBreakdown,
    pub position: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TapOutcome {
    Hit { hit: HitEvent, trigger: SoundTrigger },
    Dropped(DropRecord),
}

const STREAM_COMM: u64 = 1;
const STREAM_LOCALIZE: u64 = 2;

/// Per-event RNG so that one tap's draws never depend on how many draws
/// earlier taps consumed.
fn event_rng(seed: u64, stage: u64, seq: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | u64::from(seq));
    rng
}

/// Server-side state for one band: channel, position cache, counters.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: PipelineConfig,
    num_levels: u8,
    channel: Channel,
    cache: PositionCache,
    seed: u64,
    precision: PrecisionStats,
}

impl Session {
    pub fn new(cfg: PipelineConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let num_levels = cfg.binning()?.num_levels();
        let channel = Channel::new(cfg.latency)?;
        Ok(Self { cfg, num_levels, channel, cache: PositionCache::default(), seed, precision: PrecisionStats::default() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &PositionCache {
        &self.cache
    }

    pub fn precision(&self) -> PrecisionStats {
        self.precision
    }

    fn payload(&self, tap: &TapEvent, trigger_sample: Option<&ImuSample>) -> Result<Vec<u8>> {
        Ok(match self.cfg.payload {
            PayloadMode::Binary => encode_tap(&TapMessage::from(tap)).to_vec(),
            PayloadMode::Raw => {
                let s = trigger_sample
                    .ok_or_else(|| Error::InvalidInput("raw payload needs the trigger sample".into()))?;
                encode_raw(&RawAccelMessage::from(s))?.to_vec()
            }
        })
    }

    /// Run one detected tap through the server side of the pipeline.
    pub fn process_tap(
        &mut self,
        tap: &TapEvent,
        trigger_sample: Option<&ImuSample>,
        truth: Option<&HandObservation>,
    ) -> Result<TapOutcome> {
        let payload = self.payload(tap, trigger_sample)?;
        let drop = |reason, latency, position| TapOutcome::Dropped(DropRecord { tap: *tap, reason, latency, position });

        let mut rng = event_rng(self.seed, STREAM_COMM, tap.seq);
        let Some(delivery) = self.channel.send(&payload, tap.t, &mut rng) else {
            return Ok(drop(DropReason::Lost, LatencyBreakdown::new(0.0, 0.0), None));
        };
        let comm_ms = delivery.comm_ms;

        let mut rng = event_rng(self.seed, STREAM_LOCALIZE, tap.seq);
        let resolved =
            match resolve_position(tap, &mut self.cache, &self.cfg.localizer, truth, self.cfg.policy, &mut rng) {
                Ok(r) => r,
                Err((reason, loc_ms)) => {
                    if truth.is_some() {
                        self.precision.attempts += 1;
                        self.precision.failures += 1;
                    }
                    return Ok(drop(reason, LatencyBreakdown::new(comm_ms, loc_ms), None));
                }
            };
        if let (Some(attempt), Some(t)) = (&resolved.attempt, truth) {
            self.precision.record(t, attempt, self.cfg.precision_radius_m);
        }
        let latency = LatencyBreakdown::new(comm_ms, resolved.localization_ms);
        let p = resolved.position;
        let xy = (p.x, p.y);

        if !depth_gate(p.z, self.cfg.profile.surface_depth_m, self.cfg.depth_tol_m) {
            return Ok(drop(DropReason::DepthGate, latency, Some(xy)));
        }
        let Some(drum_id) = hit_test([p.x, p.y], &self.cfg.layout) else {
            return Ok(drop(DropReason::OutOfBounds, latency, Some(xy)));
        };
        self.cache.last_drum = Some(drum_id);

        let amplitude = amplitude_for(tap.level, self.num_levels);
        let pan = pan_for(p.x, self.cfg.layout.width);
        let hit = HitEvent { tap: *tap, drum_id: Some(drum_id), position: xy, latency, amplitude, pan };
        let t_fire = tap.t + (latency.total_ms * 1000.0).round() as Micros;
        Ok(TapOutcome::Hit { hit, trigger: SoundTrigger { drum_id, amplitude, pan, t_fire } })
    }
}

/// Hand position at `t`, linearly interpolated between observations and
/// held constant outside them.
pub fn hand_at(hands: &[HandObservation], t: Micros) -> Option<HandObservation> {
    let first = hands.first()?;
    let idx = hands.partition_point(|h| h.t <= t);
    if idx == 0 {
        return Some(HandObservation { t, ..*first });
    }
    let a = &hands[idx - 1];
    let Some(b) = hands.get(idx) else {
        return Some(HandObservation { t, ..*a });
    };
    let f = (t - a.t) as f64 / (b.t - a.t) as f64;
    let lerp = |u: f64, v: f64| u + f * (v - u);
    Some(HandObservation {
        t,
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        z: lerp(a.z, b.z),
        confidence: lerp(a.confidence, b.confidence),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    /// Nearest-rank percentiles.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            p50: rank(0.50),
            p95: rank(0.95),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub comm: Summary,
    pub localization: Summary,
    pub total: Summary,
}

impl LatencyStats {
    pub fn of(hits: &[HitEvent]) -> Self {
        let col = |f: fn(&LatencyBreakdown) -> f64| Summary::of(&hits.iter().map(|h| f(&h.latency)).collect::<Vec<_>>());
        Self { comm: col(|l| l.comm_ms), localization: col(|l| l.localization_ms), total: col(|l| l.total_ms) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    #[serde(flatten)]
    pub stats: PrecisionStats,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: Policy,
    pub payload: PayloadMode,
    pub seed: u64,
    pub taps_detected: usize,
    pub hits: Vec<HitEvent>,
    pub drops: Vec<DropRecord>,
    pub triggers: Vec<SoundTrigger>,
    pub latency: LatencyStats,
    pub localization: LocalizationReport,
    /// Present when the trace carries labels.
    pub evaluation: Option<Metrics>,
}

impl RunReport {
    /// Every detected tap in detection order, with its latency.
    pub fn detections(&self) -> Vec<(TapEvent, LatencyBreakdown)> {
        let mut all: Vec<_> = self
            .hits
            .iter()
            .map(|h| (h.tap, h.latency))
            .chain(self.drops.iter().map(|d| (d.tap, d.latency)))
            .collect();
        all.sort_by_key(|(t, _)| (t.t, t.seq));
        all
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per detected tap.
    pub fn write_latency_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "seq,t_us,outcome,drum,comm_ms,localization_ms,total_ms")?;
        let mut rows: Vec<(TapEvent, String, String, LatencyBreakdown)> = self
            .hits
            .iter()
            .map(|h| (h.tap, "hit".into(), h.drum_id.map(|d| d.to_string()).unwrap_or_default(), h.latency))
            .chain(self.drops.iter().map(|d| (d.tap, d.reason.to_string(), String::new(), d.latency)))
            .collect();
        rows.sort_by_key(|r| (r.0.t, r.0.seq));
        for (tap, outcome, drum, l) in rows {
            writeln!(w, "{},{},{},{},{},{},{}", tap.seq, tap.t, outcome, drum, l.comm_ms, l.localization_ms, l.total_ms)?;
        }
        Ok(())
    }
}

struct SplitTrace {
    imu: Vec<ImuSample>,
    hands: Vec<HandObservation>,
    labels: Vec<Label>,
}

fn split(trace: &[TraceRecord]) -> SplitTrace {
    let mut out = SplitTrace { imu: Vec::new(), hands: Vec::new(), labels: Vec::new() };
    for r in trace {
        match r {
            TraceRecord::Imu(s) => out.imu.push(*s),
            TraceRecord::Hand(h) => out.hands.push(*h),
            TraceRecord::Label(l) => out.labels.push(*l),
        }
    }
    out
}

/// Replay a whole trace through the pipeline.
pub fn run(trace: &[TraceRecord], cfg: &PipelineConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let report = validate_stream(trace);
    if let Some(v) = report.violations.first() {
        return Err(Error::InvalidTrace(format!(
            "{} violation(s); first at record {} (t={}): {:?}",
            report.violations.len(),
            v.index,
            v.t,
            v.kind
        )));
    }
    let parts = split(trace);
    let taps = detect_all(&parts.imu, &cfg.detector(), &cfg.binning()?)?;
    let mut session = Session::new(cfg.clone(), seed)?;

    let mut hits = Vec::new();
    let mut drops = Vec::new();
    let mut triggers = Vec::new();
    for tap in &taps {
        let sample = parts.imu.binary_search_by_key(&tap.t, |s| s.t).ok().map(|i| &parts.imu[i]);
        let truth = hand_at(&parts.hands, tap.t);
        match session.process_tap(tap, sample, truth.as_ref())? {
            TapOutcome::Hit { hit, trigger } => {
                hits.push(hit);
                triggers.push(trigger);
            }
            TapOutcome::Dropped(d) => drops.push(d),
        }
    }

    let stats = session.precision();
    let mut report = RunReport {
        policy: cfg.policy,
        payload: cfg.payload,
        seed,
        taps_detected: taps.len(),
        latency: LatencyStats::of(&hits),
        hits,
        drops,
        triggers,
        localization: LocalizationReport { stats, precision: stats.precision() },
        evaluation: None,
    };
    if !parts.labels.is_empty() {
        report.evaluation =
            Some(evaluate(&report, &parts.labels, &cfg.layout, cfg.match_window_ms, cfg.precision_radius_m));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    /// Tap labels whose detection produced a sound.
    pub labels_hit: usize,
    /// Tap labels whose detection was rejected downstream.
    pub labels_dropped: usize,
    /// Hits matched to a drum label that landed within the radius of it.
    pub localization_correct: usize,
    pub localization_evaluated: usize,
    pub localization_precision: f64,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Greedy nearest-in-time one-to-one matching of `dets` to `labels`.
/// Returns `(det_index, label_index)` pairs.
fn greedy_match(dets: &[Micros], labels: &[Micros], window_us: u64) -> Vec<(usize, usize)> {
    let mut cand = Vec::new();
    for (i, &d) in dets.iter().enumerate() {
        for (j, &l) in labels.iter().enumerate() {
            let dt = d.abs_diff(l);
            if dt <= window_us {
                cand.push((dt, j, i));
            }
        }
    }
    cand.sort_unstable();
    let mut det_used = vec![false; dets.len()];
    let mut lab_used = vec![false; labels.len()];
    let mut out = Vec::new();
    for (_, j, i) in cand {
        if !det_used[i] && !lab_used[j] {
            det_used[i] = true;
            lab_used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Confusion matrix of detections against labels.
///
/// Every detected tap counts as a detection, including those later dropped
/// by the depth gate or bounds check; drops are tallied separately.
/// Labels with `tap: false` are negatives: unmatched ones are true negatives.
pub fn evaluate(report: &RunReport, labels: &[Label], layout: &DrumLayout, match_window_ms: f64, radius_m: f64) -> Metrics {
    let window_us = (match_window_ms * 1000.0).round() as u64;
    // (t, Some(hit index) | None for a drop)
    let mut dets: Vec<(Micros, Option<usize>)> = report
        .hits
        .iter()
        .enumerate()
        .map(|(i, h)| (h.tap.t, Some(i)))
        .chain(report.drops.iter().map(|d| (d.tap.t, None)))
        .collect();
    dets.sort_by_key(|d| d.0);
    let det_t: Vec<_> = dets.iter().map(|d| d.0).collect();

    let (pos, neg): (Vec<&Label>, Vec<&Label>) = labels.iter().partition(|l| l.is_tap);
    let pos_t: Vec<_> = pos.iter().map(|l| l.t).collect();
    let matched = greedy_match(&det_t, &pos_t, window_us);

    let mut m = Metrics { tp: matched.len(), fn_: pos.len() - matched.len(), ..Default::default() };
    let mut det_used = vec![false; dets.len()];
    for &(i, j) in &matched {
        det_used[i] = true;
        match dets[i].1 {
            Some(h) => {
                m.labels_hit += 1;
                if let Some(drum) = pos[j].drum_id.and_then(|d| layout.drum(d)) {
                    m.localization_evaluated += 1;
                    let (x, y) = report.hits[h].position;
                    if drum.distance_to([x, y]) <= radius_m {
                        m.localization_correct += 1;
                    }
                }
            }
            None => m.labels_dropped += 1,
        }
    }

    let rest: Vec<_> = (0..dets.len()).filter(|&i| !det_used[i]).collect();
    let rest_t: Vec<_> = rest.iter().map(|&i| det_t[i]).collect();
    let neg_t: Vec<_> = neg.iter().map(|l| l.t).collect();
    let neg_matched = greedy_match(&rest_t, &neg_t, window_us).len();
    m.fp = rest.len();
    m.tn = neg.len() - neg_matched;

    m.accuracy = ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn_);
    m.recall = ratio(m.tp, m.tp + m.fn_);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.localization_precision = ratio(m.localization_correct, m.localization_evaluated);
    m
}
