//! Session-start calibration: tap threshold from training taps, surface
//! depth from a depth point cloud, and the camera-to-surface homography.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::detect::jerk;
use crate::discretize::Binning;
use crate::error::{Error, Result};
use crate::types::ImuSample;

pub const DEFAULT_SAFETY: f64 = 0.6;
pub const DEFAULT_DEPTH_BIN_M: f64 = 0.01;
pub const DEFAULT_MIN_MARKERS: u32 = 3;
pub const MIN_TRAINING_TAPS: usize = 3;

/// Learned per-session parameters, persisted as `profile.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub tap_threshold: f64,
    pub surface_depth_m: f64,
    /// Row-major pixel → surface-meters map.
    pub homography: [f64; 9],
    pub marker_confidence: u32,
    pub bin_edges: Vec<f64>,
}

impl Default for CalibrationProfile {
    fn default() -> Self {
        Self {
            tap_threshold: crate::detect::DEFAULT_THRESHOLD_G,
            surface_depth_m: 1.5,
            homography: Homography::identity().to_row_major(),
            marker_confidence: DEFAULT_MIN_MARKERS,
            bin_edges: Binning::default().edges,
        }
    }
}

impl CalibrationProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.tap_threshold < 0.0) {
            return Err(Error::InvalidConfig("tap_threshold must be negative".into()));
        }
        if !(self.surface_depth_m > 0.0) {
            return Err(Error::InvalidConfig("surface_depth_m must be positive".into()));
        }
        self.homography()?;
        self.binning()?;
        Ok(())
    }

    pub fn homography(&self) -> Result<Homography> {
        let h = Homography::from_row_major(self.homography);
        h.inverse()
            .ok_or_else(|| Error::SingularCalibration("profile homography is not invertible".into()))?;
        Ok(h)
    }

    pub fn binning(&self) -> Result<Binning> {
        Binning::from_edges(self.tap_threshold.abs(), self.bin_edges.clone())
    }
}

/// Largest magnitude of negative Z jerk in a stream, if any.
fn peak_negative_jerk(stream: &[ImuSample]) -> Result<Option<f64>> {
    let mut peak: Option<f64> = None;
    for w in stream.windows(2) {
        let jz = jerk(&w[0], &w[1])?.jz;
        if jz < 0.0 {
            peak = Some(peak.map_or(-jz, |p: f64| p.max(-jz)));
        }
    }
    Ok(peak)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Threshold = `-safety * median(peak |negative jerk| per training tap)`.
pub fn calibrate_threshold(training_taps: &[Vec<ImuSample>], safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidConfig(format!("safety factor {safety} not in (0, 1]")));
    }
    if training_taps.len() < MIN_TRAINING_TAPS {
        return Err(Error::InsufficientCalibration(format!(
            "{} training taps, need at least {MIN_TRAINING_TAPS}",
            training_taps.len()
        )));
    }
    let mut peaks = Vec::with_capacity(training_taps.len());
    for (i, stream) in training_taps.iter().enumerate() {
        peaks.push(peak_negative_jerk(stream)?.ok_or(Error::DegenerateTraining(i))?);
    }
    Ok(-safety * median(&mut peaks))
}

/// Depths of a point cloud, all strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthPointCloud {
    depths: Vec<f64>,
}

impl DepthPointCloud {
    pub fn new(depths: Vec<f64>) -> Result<Self> {
        if let Some(d) = depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::InvalidInput(format!("depth {d} must be positive")));
        }
        Ok(Self { depths })
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }
}

/// Mode of the depth histogram. Bins are centred on multiples of
/// `bin_width_m`; ties go to the farther bin.
pub fn calibrate_surface_depth(cloud: &DepthPointCloud, bin_width_m: f64) -> Result<f64> {
    if !(bin_width_m > 0.0) {
        return Err(Error::InvalidConfig("bin width must be positive".into()));
    }
    if cloud.depths.is_empty() {
        return Err(Error::InsufficientCalibration("empty depth point cloud".into()));
    }
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    for d in &cloud.depths {
        *hist.entry((d / bin_width_m).round() as i64).or_default() += 1;
    }
    // BTreeMap iterates ascending, so `>=` keeps the farthest of equal bins.
    let mut best = (i64::MIN, 0usize);
    for (&bin, &count) in &hist {
        if count >= best.1 {
            best = (bin, count);
        }
    }
    Ok(best.0 as f64 * bin_width_m)
}

/// Projective map between two planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn from_row_major(m: [f64; 9]) -> Self {
        Homography(Matrix3::from_row_slice(&m))
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        [v.x / v.z, v.y / v.z]
    }

    pub fn inverse(&self) -> Option<Homography> {
        let det = self.0.determinant();
        if !det.is_finite() || det.abs() < 1e-12 * self.0.norm().powi(3) {
            return None;
        }
        let mut inv = self.0.try_inverse()?;
        if inv[(2, 2)].abs() > f64::EPSILON {
            inv /= inv[(2, 2)];
        }
        Some(Homography(inv))
    }
}

/// One fiducial correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pixel: [f64; 2],
    pub surface: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionCalibration {
    Ready { homography: Homography, marker_confidence: u32 },
    /// Too few markers were seen; the instrument must not be projected.
    NotReady { detected: u32, required: u32 },
}

/// Similarity transform moving points to zero mean and mean distance √2.
fn normalizer(pts: &[[f64; 2]]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0] / n, a.1 + p[1] / n));
    let mean_dist = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalized direct linear transform over `n >= 4` correspondences.
pub fn estimate_homography(corr: &[Correspondence]) -> Result<Homography> {
    if corr.len() < 4 {
        return Err(Error::InsufficientCalibration(format!(
            "{} correspondences, need at least 4",
            corr.len()
        )));
    }
    let src: Vec<_> = corr.iter().map(|c| c.pixel).collect();
    let dst: Vec<_> = corr.iter().map(|c| c.surface).collect();
    if src.iter().chain(&dst).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite correspondence".into()));
    }
    let ts = normalizer(&src);
    let td = normalizer(&dst);
    let norm = |t: &Matrix3<f64>, p: [f64; 2]| {
        let v = t * Vector3::new(p[0], p[1], 1.0);
        (v.x, v.y)
    };

    // pad to at least 9 rows so the SVD exposes the full right null space
    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in corr.iter().enumerate() {
        let (u, v) = norm(&ts, c.pixel);
        let (x, y) = norm(&td, c.surface);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-u, -v, -1.0, 0.0, 0.0, 0.0, x * u, x * v, x]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -u, -v, -1.0, y * u, y * v, y]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::SingularCalibration("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    // rank 8 is required for a unique homography
    if sv[order[7]] <= 1e-9 * sv[order[0]] {
        return Err(Error::SingularCalibration("correspondences are degenerate".into()));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| Error::SingularCalibration("degenerate surface points".into()))?;
    let mut m = td_inv * hn * ts;
    if m[(2, 2)].abs() < 1e-12 * m.norm() {
        return Err(Error::SingularCalibration("homography has zero scale entry".into()));
    }
    m /= m[(2, 2)];
    let out = Homography(m);
    if out.inverse().is_none() {
        return Err(Error::SingularCalibration("homography is not invertible".into()));
    }
    Ok(out)
}

/// Gate on marker count, then fit the homography.
pub fn calibrate_projection(
    correspondences: &[Correspondence],
    detected_markers: u32,
    min_markers: u32,
) -> Result<ProjectionCalibration> {
    if detected_markers < min_markers {
        return Ok(ProjectionCalibration::NotReady { detected: detected_markers, required: min_markers });
    }
    let homography = estimate_homography(correspondences)?;
    Ok(ProjectionCalibration::Ready { homography, marker_confidence: detected_markers })
}
