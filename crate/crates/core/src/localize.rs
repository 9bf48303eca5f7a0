//! Adaptive hand localization: reuse the cached hand position when the band
//! reports no planar movement, otherwise run the (simulated) localizer.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DrumId, HandObservation, Position, TapEvent};

pub const DEFAULT_LOCALIZATION_MEAN_MS: f64 = 24.0;
pub const DEFAULT_NOISE_SIGMA_M: f64 = 0.01;
pub const DEFAULT_FAILURE_RATE: f64 = 0.01;
pub const DEFAULT_DEPTH_TOL_M: f64 = 0.05;
pub const DEFAULT_PRECISION_RADIUS_M: f64 = 0.03;

/// z-score of the 95th percentile of a standard normal.
const Z95: f64 = 1.644_853_626_951_472_2;

/// Log-space sigma putting the 5th/95th percentiles near 15 ms and 40 ms.
pub fn default_localization_sigma() -> f64 {
    (40.0f64 / 15.0).ln() / (2.0 * Z95)
}

/// Log-normal latency described by its arithmetic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalLatency {
    pub mean_ms: f64,
    /// Standard deviation of `ln(latency)`.
    pub sigma: f64,
}

impl LogNormalLatency {
    pub fn new(mean_ms: f64, sigma: f64) -> Result<Self> {
        let l = Self { mean_ms, sigma };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_ms > 0.0 && self.mean_ms.is_finite() && self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "latency mean {} / sigma {} out of range",
                self.mean_ms, self.sigma
            )));
        }
        Ok(())
    }

    /// Location parameter so that `E[X] = mean_ms`.
    pub fn mu(&self) -> f64 {
        self.mean_ms.ln() - 0.5 * self.sigma * self.sigma
    }

    pub fn quantile(&self, z: f64) -> f64 {
        (self.mu() + z * self.sigma).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return self.mean_ms;
        }
        LogNormal::new(self.mu(), self.sigma).expect("validated").sample(rng)
    }
}

/// Stand-in for the palm/hand-landmark model: truth plus Gaussian noise,
/// a log-normal processing time, and an occasional miss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatedLocalizer {
    /// Per-axis noise on x, y and depth.
    pub noise_sigma_m: f64,
    pub latency: LogNormalLatency,
    pub failure_rate: f64,
}

impl Default for SimulatedLocalizer {
    fn default() -> Self {
        Self {
            noise_sigma_m: DEFAULT_NOISE_SIGMA_M,
            latency: LogNormalLatency { mean_ms: DEFAULT_LOCALIZATION_MEAN_MS, sigma: default_localization_sigma() },
            failure_rate: DEFAULT_FAILURE_RATE,
        }
    }
}

/// One localizer invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    /// `None` when no hand was detected.
    pub position: Option<Position>,
    pub latency_ms: f64,
}

impl SimulatedLocalizer {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_m >= 0.0 && self.noise_sigma_m.is_finite()) {
            return Err(Error::InvalidConfig("localizer noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(Error::InvalidConfig("failure rate must be in [0, 1]".into()));
        }
        self.latency.validate()
    }

    /// Draw order is fixed (latency, failure, noise x/y/z) so that results
    /// depend only on the RNG stream.
    pub fn localize<R: Rng + ?Sized>(&self, truth: &HandObservation, rng: &mut R) -> Localization {
        let latency_ms = self.latency.sample(rng);
        let failed = rng.random::<f64>() < self.failure_rate;
        let noise = Normal::new(0.0, self.noise_sigma_m).expect("validated");
        let (nx, ny, nz) = (noise.sample(rng), noise.sample(rng), noise.sample(rng));
        let position = (!failed).then(|| Position::new(truth.x + nx, truth.y + ny, truth.z + nz));
        Localization { position, latency_ms }
    }
}

/// Outcome counts from repeated localizations against known truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionStats {
    pub attempts: usize,
    pub within_radius: usize,
    pub failures: usize,
}

impl PrecisionStats {
    /// Correct localizations over attempts; misses count against precision.
    pub fn precision(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.within_radius as f64 / self.attempts as f64
        }
    }

    pub fn record(&mut self, truth: &HandObservation, loc: &Localization, radius_m: f64) {
        self.attempts += 1;
        match loc.position {
            None => self.failures += 1,
            Some(p) => {
                if p.distance(&Position::new(truth.x, truth.y, truth.z)) <= radius_m {
                    self.within_radius += 1;
                }
            }
        }
    }
}

/// Run the localizer `n` times against `truth`.
pub fn measure_precision<R: Rng + ?Sized>(
    localizer: &SimulatedLocalizer,
    truth: &HandObservation,
    n: usize,
    radius_m: f64,
    rng: &mut R,
) -> PrecisionStats {
    let mut stats = PrecisionStats::default();
    for _ in 0..n {
        let loc = localizer.localize(truth, rng);
        stats.record(truth, &loc, radius_m);
    }
    stats
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionCache {
    pub last_position: Option<Position>,
    pub last_drum: Option<DrumId>,
}

/// When to run the localizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Localize on every tap.
    Continuous,
    /// Localize only when the band reports planar movement or the cache is empty.
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub position: Position,
    pub localization_ms: f64,
    /// The localizer actually ran (as opposed to a cache hit).
    pub localized: bool,
    /// Raw localizer output, for precision accounting.
    pub attempt: Option<Localization>,
}

/// Why a tap did not produce a sound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    NoHand,
    DepthGate,
    OutOfBounds,
    Debounce,
    BelowThreshold,
    /// Lost in transport.
    Lost,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NoHand => "no-hand",
            DropReason::DepthGate => "depth-gate",
            DropReason::OutOfBounds => "out-of-bounds",
            DropReason::Debounce => "debounce",
            DropReason::BelowThreshold => "below-threshold",
            DropReason::Lost => "lost",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resolve where a tap happened.
///
/// `truth` is `None` when no hand is visible at all. On a localizer miss the
/// latency is still spent and is returned alongside the drop.
pub fn resolve_position<R: Rng + ?Sized>(
    tap: &TapEvent,
    cache: &mut PositionCache,
    localizer: &SimulatedLocalizer,
    truth: Option<&HandObservation>,
    policy: Policy,
    rng: &mut R,
) -> std::result::Result<Resolved, (DropReason, f64)> {
    let skip = policy == Policy::Adaptive && !tap.movement_flag;
    if let (true, Some(p)) = (skip, cache.last_position) {
        return Ok(Resolved { position: p, localization_ms: 0.0, localized: false, attempt: None });
    }
    let Some(truth) = truth else {
        return Err((DropReason::NoHand, 0.0));
    };
    let loc = localizer.localize(truth, rng);
    match loc.position {
        Some(p) => {
            cache.last_position = Some(p);
            Ok(Resolved { position: p, localization_ms: loc.latency_ms, localized: true, attempt: Some(loc) })
        }
        None => Err((DropReason::NoHand, loc.latency_ms)),
    }
}

/// Hand is close enough to the calibrated surface to count as a tap.
pub fn depth_gate(hand_z: f64, surface_depth: f64, tol_m: f64) -> bool {
    (hand_z - surface_depth).abs() <= tol_m
}
