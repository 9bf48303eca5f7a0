//! Canned scenarios used by the CLI, benches and acceptance tests.

use crate::instrument::DrumLayout;
use crate::trace::{IntensityClass, ScenarioSpec, TapSpec};
use crate::types::DrumId;

/// `n` hard taps on one drum, `spacing_s` apart, starting at 0.5 s.
pub fn same_spot(n: usize, drum: DrumId, spacing_s: f64, seed: u64) -> ScenarioSpec {
    let taps = (0..n).map(|i| TapSpec::on(drum, 0.5 + i as f64 * spacing_s, IntensityClass::Hard)).collect();
    ScenarioSpec::new(0.5 + n as f64 * spacing_s + 0.5, taps, seed)
}

/// `n` hard taps cycling over every drum in the layout.
pub fn moving(n: usize, layout: &DrumLayout, spacing_s: f64, seed: u64) -> ScenarioSpec {
    let ids: Vec<_> = layout.drums.iter().map(|d| d.id).collect();
    let taps = (0..n)
        .map(|i| TapSpec::on(ids[i % ids.len()], 0.5 + i as f64 * spacing_s, IntensityClass::Hard))
        .collect();
    ScenarioSpec::new(0.5 + n as f64 * spacing_s + 0.5, taps, seed)
}

/// Soft taps with explicit dips: `detectable` clear the -0.5 g threshold,
/// `weak` fall short of it. The weak ones are spread through the session.
pub fn soft_taps(detectable: usize, weak: usize, seed: u64) -> ScenarioSpec {
    let n = detectable + weak;
    let stride = n.checked_div(weak).unwrap_or(usize::MAX);
    let mut taps = Vec::with_capacity(n);
    let mut weak_left = weak;
    for i in 0..n {
        let is_weak = weak_left > 0 && (i % stride == stride / 2 || n - i == weak_left);
        let frac = (i % 7) as f64 / 6.0;
        let dip = if is_weak {
            weak_left -= 1;
            0.36 + 0.09 * frac
        } else {
            0.56 + 0.14 * frac
        };
        let drum = 1 + (i % 3) as DrumId;
        taps.push(TapSpec { dip_g: Some(dip), ..TapSpec::on(drum, 0.5 + i as f64 * 1.2, IntensityClass::Soft) });
    }
    ScenarioSpec::new(0.5 + n as f64 * 1.2 + 0.5, taps, seed)
}
