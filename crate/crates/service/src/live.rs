//! One play session: turns pointer events into a synthetic band stream and
//! runs it through the detector and pipeline.

use std::collections::VecDeque;

use mutable_core::calibration::{calibrate_threshold, DEFAULT_SAFETY};
use mutable_core::composition::{Composition, CompositionCue, DEFAULT_CUE_LEAD_MS};
use mutable_core::detect::{Detection, TapDetector};
use mutable_core::localize::DropReason;
use mutable_core::pipeline::{LatencyStats, PipelineConfig, Session, TapOutcome};
use mutable_core::types::{HandObservation, HitEvent, ImuSample, LatencyBreakdown, Micros};
use mutable_core::Result;

use crate::protocol::{ServerMessage, SessionMessage, SessionMetrics};

/// Hits kept for the rolling latency stats.
pub const METRICS_WINDOW: usize = 256;
/// Baseline samples written ahead of each dip; enough to fill the
/// movement window.
const LEAD_SAMPLES: u64 = 16;
/// Planar burst used to mark a hand move, g.
const MOVE_BURST_G: f64 = 0.6;
/// Position change that counts as a move, m.
const MOVE_EPS_M: f64 = 0.01;

/// Everything a socket needs to do in response to one message.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    /// Cues to schedule against wall time, relative to now.
    pub scheduled: Vec<CompositionCue>,
    /// Set when a PointerTap was answered.
    pub tap: Option<TapResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TapResult {
    Hit(LatencyBreakdown),
    Dropped(DropReason),
}

pub struct LiveSession {
    cfg: PipelineConfig,
    seed: u64,
    detector: TapDetector,
    session: Session,
    period_us: u64,
    last_t: Option<Micros>,
    hand: Option<[f64; 2]>,
    moved: bool,
    taps: usize,
    hits: usize,
    drops: usize,
    recent: VecDeque<HitEvent>,
}

impl LiveSession {
    pub fn new(cfg: PipelineConfig, seed: u64) -> Result<Self> {
        let detector = TapDetector::new(cfg.detector(), cfg.binning()?)?;
        let session = Session::new(cfg.clone(), seed)?;
        let period_us = (1e6 / cfg.detector.sample_rate_hz).round() as u64;
        Ok(Self {
            cfg,
            seed,
            detector,
            session,
            period_us,
            last_t: None,
            hand: None,
            moved: false,
            taps: 0,
            hits: 0,
            drops: 0,
            recent: VecDeque::with_capacity(METRICS_WINDOW),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout_info(&self) -> ServerMessage {
        ServerMessage::LayoutInfo { layout: self.cfg.layout.clone() }
    }

    pub fn metrics(&self) -> SessionMetrics {
        let recent: Vec<_> = self.recent.iter().copied().collect();
        SessionMetrics {
            taps: self.taps,
            hits: self.hits,
            drops: self.drops,
            window: recent.len(),
            latency: LatencyStats::of(&recent),
        }
    }

    pub fn handle(&mut self, msg: SessionMessage) -> Reply {
        match msg {
            SessionMessage::Hello { .. } => Reply { messages: vec![self.layout_info()], ..Default::default() },
            SessionMessage::HandMove { t, x, y } => match self.check_time(t, x, y) {
                Err(e) => error(e),
                Ok(()) => {
                    self.move_hand([x, y]);
                    Reply::default()
                }
            },
            SessionMessage::PointerTap { t, x, y, pressure } => {
                if !(0.0..=1.0).contains(&pressure) {
                    return error(format!("pressure {pressure} outside [0, 1]"));
                }
                if let Err(e) = self.check_time(t, x, y) {
                    return error(e);
                }
                match self.tap(t, x, y, pressure) {
                    Ok((msg, result)) => {
                        let metrics = ServerMessage::Metrics { metrics: self.metrics() };
                        Reply { messages: vec![msg, metrics], scheduled: Vec::new(), tap: Some(result) }
                    }
                    Err(e) => error(e.to_string()),
                }
            }
            SessionMessage::Calibrate { taps, safety } => match self.calibrate(&taps, safety.unwrap_or(DEFAULT_SAFETY)) {
                Ok(msg) => Reply { messages: vec![msg], ..Default::default() },
                Err(e) => error(e.to_string()),
            },
            SessionMessage::StartComposition { beats, lead_ms, realtime } => {
                let composition = match Composition::new(beats, &self.cfg.layout) {
                    Ok(c) => c,
                    Err(e) => return error(e.to_string()),
                };
                let lead = lead_ms.unwrap_or(DEFAULT_CUE_LEAD_MS);
                if !(lead.is_finite() && lead >= 0.0) {
                    return error("lead_ms must be non-negative");
                }
                let cues = composition.cues(lead);
                if realtime {
                    Reply { scheduled: cues, ..Default::default() }
                } else {
                    let messages = cues.into_iter().map(|cue| ServerMessage::CompositionCue { cue }).collect();
                    Reply { messages, ..Default::default() }
                }
            }
        }
    }

    fn check_time(&self, t: Micros, x: f64, y: f64) -> std::result::Result<(), String> {
        if !(x.is_finite() && y.is_finite()) {
            return Err("non-finite position".into());
        }
        match self.last_t {
            Some(last) if t < last => Err(format!("timestamp {t} precedes {last}")),
            _ => Ok(()),
        }
    }

    fn move_hand(&mut self, p: [f64; 2]) {
        if let Some(h) = self.hand {
            if (h[0] - p[0]).hypot(h[1] - p[1]) > MOVE_EPS_M {
                self.moved = true;
            }
        }
        self.hand = Some(p);
    }

    fn push(&mut self, s: ImuSample) -> Result<Detection> {
        self.last_t = Some(s.t);
        self.detector.push(&s)
    }

    /// Baseline samples, an optional planar burst, then one Z dip at `t`.
    fn tap(&mut self, t: Micros, x: f64, y: f64, pressure: f64) -> Result<(ServerMessage, TapResult)> {
        self.move_hand([x, y]);
        let dip_t = match self.last_t {
            Some(last) => t.max(last + 2),
            None => t.max(LEAD_SAMPLES * self.period_us + 1),
        };
        let floor = self.last_t.map_or(0, |l| l + 1);
        let mut lead: Vec<Micros> = (1..=LEAD_SAMPLES)
            .rev()
            .filter_map(|k| dip_t.checked_sub(k * self.period_us))
            .filter(|&s| s >= floor)
            .collect();
        if lead.is_empty() {
            lead.push(dip_t - 1);
        }
        for (i, &s) in lead.iter().enumerate() {
            let ax = if i == 0 && std::mem::take(&mut self.moved) { MOVE_BURST_G } else { 0.0 };
            self.push(ImuSample::new(s, ax, 0.0, 1.0))?;
        }

        let binning = self.detector.binning().clone();
        let intensity = binning.floor + pressure * (binning.ceiling - binning.floor);
        let sample = ImuSample::new(dip_t, 0.0, 0.0, 1.0 - intensity);
        self.taps += 1;
        let detection = self.push(sample)?;
        let none = LatencyBreakdown::new(0.0, 0.0);
        let ev = match detection {
            Detection::Tap(ev) => ev,
            Detection::Debounced { .. } => return Ok(self.dropped(None, DropReason::Debounce, none)),
            Detection::Quiet => return Ok(self.dropped(None, DropReason::BelowThreshold, none)),
        };
        let truth = HandObservation { t: dip_t, x, y, z: self.cfg.profile.surface_depth_m, confidence: 1.0 };
        Ok(match self.session.process_tap(&ev, Some(&sample), Some(&truth))? {
            TapOutcome::Hit { hit, trigger } => {
                self.hits += 1;
                if self.recent.len() == METRICS_WINDOW {
                    self.recent.pop_front();
                }
                self.recent.push_back(hit);
                let fundamental_hz = self.cfg.layout.drum(trigger.drum_id).map_or(0.0, |d| d.fundamental_hz);
                let msg = ServerMessage::SoundFired {
                    seq: ev.seq,
                    drum_id: trigger.drum_id,
                    amplitude: trigger.amplitude,
                    pan: trigger.pan,
                    level: ev.level,
                    fundamental_hz,
                    latency: hit.latency,
                    trigger,
                };
                (msg, TapResult::Hit(hit.latency))
            }
            TapOutcome::Dropped(d) => self.dropped(Some(ev.seq), d.reason, d.latency),
        })
    }

    fn dropped(&mut self, seq: Option<u32>, reason: DropReason, latency: LatencyBreakdown) -> (ServerMessage, TapResult) {
        self.drops += 1;
        (ServerMessage::Dropped { seq, reason, latency }, TapResult::Dropped(reason))
    }

    /// Replace the threshold and rebuild the band and server state.
    fn calibrate(&mut self, taps: &[Vec<ImuSample>], safety: f64) -> Result<ServerMessage> {
        let threshold = calibrate_threshold(taps, safety)?;
        let mut cfg = self.cfg.clone();
        cfg.profile.tap_threshold = threshold;
        cfg.profile.bin_edges = mutable_core::discretize::make_binning(
            threshold,
            mutable_core::discretize::DEFAULT_MAX_INTENSITY_G,
            mutable_core::discretize::DEFAULT_NUM_LEVELS,
        )?
        .edges;
        let fresh = LiveSession::new(cfg, self.seed)?;
        let (taps, hits, drops, recent) = (self.taps, self.hits, self.drops, std::mem::take(&mut self.recent));
        *self = LiveSession { taps, hits, drops, recent, ..fresh };
        Ok(ServerMessage::Calibrated {
            tap_threshold: threshold,
            bin_edges: self.cfg.profile.bin_edges.clone(),
        })
    }
}

fn error(message: impl Into<String>) -> Reply {
    Reply { messages: vec![ServerMessage::error(message)], ..Default::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> LiveSession {
        let mut cfg = PipelineConfig::default();
        cfg.localizer.failure_rate = 0.0;
        LiveSession::new(cfg, 1).unwrap()
    }

    fn tap(s: &mut LiveSession, t_ms: u64, x: f64, pressure: f64) -> ServerMessage {
        let r = s.handle(SessionMessage::PointerTap { t: t_ms * 1000, x, y: 0.4, pressure });
        assert_eq!(r.messages.len(), 2, "{:?}", r.messages);
        assert!(matches!(r.messages[1], ServerMessage::Metrics { .. }));
        r.messages[0].clone()
    }

    #[test]
    fn centre_tap_full_pressure() {
        let mut s = session();
        match tap(&mut s, 1000, 0.6, 1.0) {
            ServerMessage::SoundFired { drum_id, amplitude, level, fundamental_hz, latency, .. } => {
                assert_eq!(drum_id, 2);
                assert_eq!(amplitude, 1.0);
                assert_eq!(level, 4);
                assert_eq!(fundamental_hz, 220.0);
                assert_eq!(latency.total_ms, latency.comm_ms + latency.localization_ms);
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn pressure_maps_to_levels() {
        let mut s = session();
        let levels: Vec<_> = [0.1, 0.3, 0.6, 0.9]
            .iter()
            .enumerate()
            .map(|(i, &p)| match tap(&mut s, 1000 + 1000 * i as u64, 0.6, p) {
                ServerMessage::SoundFired { level, .. } => level,
                m => panic!("{m:?}"),
            })
            .collect();
        assert_eq!(levels, vec![1, 2, 3, 4]);
    }

    #[test]
    fn zero_pressure_is_below_threshold() {
        let mut s = session();
        let m = tap(&mut s, 1000, 0.6, 0.0);
        assert!(matches!(m, ServerMessage::Dropped { seq: None, reason: DropReason::BelowThreshold, .. }));
    }

    #[test]
    fn between_drums_out_of_bounds() {
        let mut s = session();
        let m = tap(&mut s, 1000, 0.45, 1.0);
        assert!(matches!(m, ServerMessage::Dropped { reason: DropReason::OutOfBounds, .. }), "{m:?}");
    }

    #[test]
    fn second_tap_inside_window_debounced() {
        let mut s = session();
        assert!(matches!(tap(&mut s, 1000, 0.6, 1.0), ServerMessage::SoundFired { .. }));
        assert!(matches!(tap(&mut s, 1100, 0.6, 1.0), ServerMessage::Dropped { reason: DropReason::Debounce, .. }));
        assert!(matches!(tap(&mut s, 1600, 0.6, 1.0), ServerMessage::SoundFired { .. }));
        let m = s.metrics();
        assert_eq!((m.taps, m.hits, m.drops), (3, 2, 1));
    }

    #[test]
    fn same_spot_skips_localization_and_move_relocalizes() {
        let mut s = session();
        let loc = |m: ServerMessage| match m {
            ServerMessage::SoundFired { latency, .. } => latency.localization_ms,
            m => panic!("{m:?}"),
        };
        assert!(loc(tap(&mut s, 1000, 0.6, 1.0)) > 0.0);
        assert_eq!(loc(tap(&mut s, 2000, 0.6, 1.0)), 0.0);
        assert!(loc(tap(&mut s, 3000, 0.3, 1.0)) > 0.0);
        s.handle(SessionMessage::HandMove { t: 3_500_000, x: 0.9, y: 0.4 });
        assert!(loc(tap(&mut s, 4000, 0.9, 1.0)) > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = session();
        let r = s.handle(SessionMessage::PointerTap { t: 0, x: 0.6, y: 0.4, pressure: 1.5 });
        assert!(matches!(r.messages[..], [ServerMessage::Error { .. }]) && r.tap.is_none());
        tap(&mut s, 2000, 0.6, 1.0);
        let r = s.handle(SessionMessage::PointerTap { t: 1000, x: 0.6, y: 0.4, pressure: 1.0 });
        assert!(matches!(r.messages[..], [ServerMessage::Error { .. }]));
        assert_eq!(s.metrics().taps, 1);
    }

    #[test]
    fn calibration_updates_threshold() {
        let mut s = session();
        let stream = |peak: f64| {
            let mut v: Vec<_> = (0..30).map(|i| ImuSample::new(i * 9_615, 0.0, 0.0, 1.0)).collect();
            v[10].az -= peak;
            v
        };
        let r = s.handle(SessionMessage::Calibrate { taps: vec![stream(2.0), stream(2.0), stream(2.0)], safety: None });
        match &r.messages[0] {
            ServerMessage::Calibrated { tap_threshold, bin_edges } => {
                assert!((tap_threshold + 1.2).abs() < 1e-12);
                assert_eq!(bin_edges.len(), 3);
            }
            m => panic!("{m:?}"),
        }
        // a 0.5 g tap no longer fires
        assert!(matches!(tap(&mut s, 1000, 0.6, 0.0), ServerMessage::Dropped { reason: DropReason::BelowThreshold, .. }));
        let r = s.handle(SessionMessage::Calibrate { taps: vec![], safety: None });
        assert!(matches!(r.messages[0], ServerMessage::Error { .. }));
    }

    #[test]
    fn composition_cues() {
        let mut s = session();
        let beats = [1, 2, 3, 1]
            .iter()
            .enumerate()
            .map(|(i, &drum)| mutable_core::composition::Beat { time_s: 1.0 + i as f64, drum })
            .collect();
        let r = s.handle(SessionMessage::StartComposition { beats, lead_ms: None, realtime: false });
        let cues: Vec<_> = r
            .messages
            .iter()
            .map(|m| match m {
                ServerMessage::CompositionCue { cue } => (cue.t, cue.drum_id, cue.beat_index),
                m => panic!("{m:?}"),
            })
            .collect();
        assert_eq!(cues, vec![(500_000, 1, 0), (1_500_000, 2, 1), (2_500_000, 3, 2), (3_500_000, 1, 3)]);
        let r = s.handle(SessionMessage::StartComposition { beats: vec![], lead_ms: None, realtime: true });
        assert!(r.messages.is_empty() && r.scheduled.is_empty());
        let bad = vec![mutable_core::composition::Beat { time_s: 1.0, drum: 9 }];
        let r = s.handle(SessionMessage::StartComposition { beats: bad, lead_ms: None, realtime: false });
        assert!(matches!(r.messages[..], [ServerMessage::Error { .. }]));
    }
}
