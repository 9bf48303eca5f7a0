//! Server-wide counters shared by all sessions.

use std::collections::{BTreeMap, VecDeque};

use mutable_core::pipeline::Summary;
use mutable_core::types::LatencyBreakdown;
use serde::{Deserialize, Serialize};

use crate::live::{TapResult, METRICS_WINDOW};

#[derive(Debug, Default)]
pub struct Collector {
    sessions_total: u64,
    sessions_active: u64,
    taps: u64,
    hits: u64,
    drops: BTreeMap<String, u64>,
    recent: VecDeque<LatencyBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub sessions_total: u64,
    pub sessions_active: u64,
    pub taps: u64,
    pub hits: u64,
    pub drops: BTreeMap<String, u64>,
    pub window: usize,
    pub comm: Summary,
    pub localization: Summary,
    pub total: Summary,
}

impl Collector {
    pub fn session_opened(&mut self) {
        self.sessions_total += 1;
        self.sessions_active += 1;
    }

    pub fn session_closed(&mut self) {
        self.sessions_active = self.sessions_active.saturating_sub(1);
    }

    pub fn record(&mut self, result: TapResult) {
        self.taps += 1;
        match result {
            TapResult::Hit(l) => {
                self.hits += 1;
                if self.recent.len() == METRICS_WINDOW {
                    self.recent.pop_front();
                }
                self.recent.push_back(l);
            }
            TapResult::Dropped(reason) => *self.drops.entry(reason.to_string()).or_default() += 1,
        }
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let col = |f: fn(&LatencyBreakdown) -> f64| Summary::of(&self.recent.iter().map(f).collect::<Vec<_>>());
        MetricsSnapshot {
            sessions_total: self.sessions_total,
            sessions_active: self.sessions_active,
            taps: self.taps,
            hits: self.hits,
            drops: self.drops.clone(),
            window: self.recent.len(),
            comm: col(|l| l.comm_ms),
            localization: col(|l| l.localization_ms),
            total: col(|l| l.total_ms),
        }
    }
}
