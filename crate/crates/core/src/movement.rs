//! Planar-movement flag derived from X/Y jerk on the band.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::types::JerkSample;

pub const DEFAULT_THETA_MOVE_G: f64 = 0.15;
/// About 77 ms at 104 Hz.
pub const DEFAULT_MOVEMENT_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovementConfig {
    /// RMS planar jerk (g per sample) above which the hand counts as moved.
    pub theta_move: f64,
    /// Sliding RMS window in samples.
    pub window: usize,
}

impl Default for MovementConfig {
    fn default() -> Self {
        Self { theta_move: DEFAULT_THETA_MOVE_G, window: DEFAULT_MOVEMENT_WINDOW }
    }
}

/// Latching movement detector. `moved` stays set until [`reset`](Self::reset)
/// is called on tap emission.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementTracker {
    cfg: MovementConfig,
    window: VecDeque<f64>,
    sum_sq: f64,
    moved: bool,
}

impl MovementTracker {
    pub fn new(cfg: MovementConfig) -> Self {
        Self { cfg, window: VecDeque::with_capacity(cfg.window), sum_sq: 0.0, moved: false }
    }

    pub fn moved(&self) -> bool {
        self.moved
    }

    /// RMS of planar jerk over the current window, zero-padded until full.
    pub fn accum(&self) -> f64 {
        (self.sum_sq / self.cfg.window.max(1) as f64).sqrt()
    }

    pub fn update(&mut self, jerk: &JerkSample) {
        let sq = jerk.jx * jerk.jx + jerk.jy * jerk.jy;
        self.window.push_back(sq);
        if self.window.len() > self.cfg.window.max(1) {
            self.window.pop_front();
        }
        // recompute rather than subtract to avoid drift
        self.sum_sq = self.window.iter().sum();
        if self.accum() > self.cfg.theta_move {
            self.moved = true;
        }
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.sum_sq = 0.0;
        self.moved = false;
    }
}

impl Default for MovementTracker {
    fn default() -> Self {
        Self::new(MovementConfig::default())
    }
}

/// Functional form of [`MovementTracker::update`].
pub fn update_movement(mut tracker: MovementTracker, jerk: &JerkSample) -> MovementTracker {
    tracker.update(jerk);
    tracker
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(jx: f64, jy: f64) -> JerkSample {
        JerkSample { t: 0, jx, jy, jz: 0.0 }
    }

    #[test]
    fn zero_jerk_never_moves() {
        let mut t = MovementTracker::default();
        for _ in 0..100 {
            t.update(&j(0.0, 0.0));
        }
        assert!(!t.moved());
    }

    #[test]
    fn single_planar_jerk_moves() {
        // offline RMS over an 8-sample window holding one 0.5 g jerk:
        // sqrt(0.25 / 8) = 0.1768 > 0.15
        let oracle = (0.5f64 * 0.5 / 8.0).sqrt();
        assert!(oracle > 0.15);
        let mut t = MovementTracker::default();
        for _ in 0..20 {
            t.update(&j(0.0, 0.0));
        }
        t.update(&j(0.3, 0.4));
        assert!((t.accum() - oracle).abs() < 1e-12);
        assert!(t.moved());
        for _ in 0..20 {
            t.update(&j(0.0, 0.0));
        }
        assert!(t.moved(), "flag latches until reset");
        t.reset();
        assert!(!t.moved());
    }

    #[test]
    fn small_noise_does_not_move() {
        let mut t = MovementTracker::default();
        for i in 0..1000 {
            let s = if i % 2 == 0 { 0.03 } else { -0.03 };
            t = update_movement(t, &j(s, -s));
        }
        assert!(!t.moved());
    }
}
