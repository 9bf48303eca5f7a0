//! Range-based binning of tap intensity into a small number of levels.
//!
//! Level 1 starts at the detector's floor (`|threshold|`); the last level
//! is open-ended and absorbs anything above the top edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NUM_LEVELS: u8 = 4;
pub const DEFAULT_MAX_INTENSITY_G: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// Lowest intensity that can be binned (the detection floor).
    pub floor: f64,
    /// Upper end of the configured range; used only for bin midpoints.
    pub ceiling: f64,
    /// Interior edges, strictly ascending, `num_levels - 1` of them.
    pub edges: Vec<f64>,
}

impl Binning {
    /// Rebuild a binning from persisted edges, assuming equal widths.
    pub fn from_edges(floor: f64, edges: Vec<f64>) -> Result<Self> {
        let first = *edges
            .first()
            .ok_or_else(|| Error::InvalidConfig("binning needs at least one edge".into()))?;
        let ceiling = edges[edges.len() - 1] + (first - floor);
        let b = Binning { floor, ceiling, edges };
        b.validate()?;
        Ok(b)
    }

    pub fn num_levels(&self) -> u8 {
        (self.edges.len() + 1) as u8
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() || self.edges.len() > (u8::MAX - 1) as usize {
            return Err(Error::InvalidConfig("binning needs 2..=255 levels".into()));
        }
        if !self.edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("bin edges must be strictly ascending".into()));
        }
        if !(self.floor > 0.0 && self.floor < self.edges[0]) {
            return Err(Error::InvalidConfig("bin floor must be in (0, first edge)".into()));
        }
        if self.ceiling <= self.edges[self.edges.len() - 1] {
            return Err(Error::InvalidConfig("bin ceiling must exceed the top edge".into()));
        }
        Ok(())
    }

    /// Midpoint of a level's range.
    pub fn representative(&self, level: u8) -> f64 {
        let l = level.clamp(1, self.num_levels()) as usize;
        let lo = if l == 1 { self.floor } else { self.edges[l - 2] };
        let hi = if l == self.edges.len() + 1 { self.ceiling } else { self.edges[l - 1] };
        0.5 * (lo + hi)
    }
}

impl Default for Binning {
    fn default() -> Self {
        make_binning(-0.5, DEFAULT_MAX_INTENSITY_G, DEFAULT_NUM_LEVELS).expect("default binning")
    }
}

/// Equal-width levels between `|threshold|` and `max_intensity`.
pub fn make_binning(threshold: f64, max_intensity: f64, num_levels: u8) -> Result<Binning> {
    let floor = threshold.abs();
    if num_levels < 2 {
        return Err(Error::InvalidConfig(format!("num_levels {num_levels} < 2")));
    }
    if !(floor > 0.0 && floor < max_intensity && max_intensity.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "intensity range [{floor}, {max_intensity}] is empty or inverted"
        )));
    }
    let width = (max_intensity - floor) / f64::from(num_levels);
    let edges = (1..num_levels).map(|k| floor + f64::from(k) * width).collect();
    Ok(Binning { floor, ceiling: max_intensity, edges })
}

/// Level `1..=L` for a detected intensity.
pub fn discretize(intensity: f64, binning: &Binning) -> u8 {
    let above = binning.edges.iter().filter(|&&e| e <= intensity).count();
    (1 + above).clamp(1, usize::from(binning.num_levels())) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_edges() {
        let b = make_binning(-0.5, 2.5, 4).unwrap();
        assert_eq!(b.edges, vec![1.0, 1.5, 2.0]);
        assert_eq!(b.num_levels(), 4);
    }

    #[test]
    fn two_levels_single_midpoint() {
        let b = make_binning(-0.5, 2.5, 2).unwrap();
        assert_eq!(b.edges, vec![1.5]);
    }

    #[test]
    fn inverted_range_rejected() {
        assert!(matches!(make_binning(-0.5, 0.4, 4), Err(Error::InvalidConfig(_))));
        assert!(make_binning(-0.5, 2.5, 1).is_err());
    }

    #[test]
    fn levels() {
        let b = Binning::default();
        assert_eq!(discretize(0.5, &b), 1);
        assert_eq!(discretize(0.5000001, &b), 1);
        assert_eq!(discretize(1.6, &b), 3);
        assert_eq!(discretize(1.0, &b), 2);
        assert_eq!(discretize(9.0, &b), 4);
        assert_eq!(discretize(0.0, &b), 1);
    }

    #[test]
    fn from_edges_restores_default() {
        let b = Binning::default();
        assert_eq!(Binning::from_edges(0.5, b.edges.clone()).unwrap(), b);
        assert!(Binning::from_edges(0.5, vec![1.0, 1.0]).is_err());
        assert!(Binning::from_edges(0.5, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn monotone(a in 0.0f64..5.0, b in 0.0f64..5.0, levels in 2u8..10) {
            let bin = make_binning(-0.5, 2.5, levels).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(discretize(lo, &bin) <= discretize(hi, &bin));
        }

        #[test]
        fn representative_round_trips(levels in 2u8..12, thr in 0.1f64..1.0, span in 0.5f64..3.0) {
            let bin = make_binning(-thr, thr + span, levels).unwrap();
            for level in 1..=levels {
                prop_assert_eq!(discretize(bin.representative(level), &bin), level);
            }
        }
    }

    #[test]
    fn sweep_hits_every_level() {
        let b = make_binning(-0.5, 2.5, 6).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..=1000 {
            seen.insert(discretize(0.5 + 2.0 * f64::from(i) / 1000.0, &b));
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), (1..=6).collect::<Vec<u8>>());
    }
}
