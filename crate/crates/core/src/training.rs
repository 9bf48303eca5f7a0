//! On-disk training sets for session calibration.
//!
//! A training directory holds one `*.jsonl` trace per training tap, plus
//! optional `depth.json` (array of depths in metres) and `projection.json`
//! (fiducial correspondences and the detected marker count).

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_projection, calibrate_surface_depth, calibrate_threshold, CalibrationProfile, Correspondence,
    DepthPointCloud, Homography, ProjectionCalibration, DEFAULT_DEPTH_BIN_M, DEFAULT_MIN_MARKERS,
};
use crate::discretize::{make_binning, DEFAULT_MAX_INTENSITY_G, DEFAULT_NUM_LEVELS};
use crate::error::{Error, Result};
use crate::instrument::DrumLayout;
use crate::trace::{generate, read_trace_file, write_trace, IntensityClass, ScenarioSpec, TapSpec};
use crate::types::{ImuSample, TraceRecord};

fn default_min_markers() -> u32 {
    DEFAULT_MIN_MARKERS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInput {
    pub correspondences: Vec<Correspondence>,
    pub detected_markers: u32,
    #[serde(default = "default_min_markers")]
    pub min_markers: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub streams: Vec<Vec<ImuSample>>,
    pub depths: Option<DepthPointCloud>,
    pub projection: Option<ProjectionInput>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_training_dir(dir: &Path) -> Result<TrainingSet> {
    let mut traces: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    traces.sort();
    let streams = traces
        .iter()
        .map(|p| {
            Ok(read_trace_file(p)?
                .into_iter()
                .filter_map(|r| match r {
                    TraceRecord::Imu(s) => Some(s),
                    _ => None,
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<ImuSample>>>>()?;

    let depth_path = dir.join("depth.json");
    let depths = if depth_path.exists() { Some(DepthPointCloud::new(read_json(&depth_path)?)?) } else { None };
    let proj_path = dir.join("projection.json");
    let projection = if proj_path.exists() { Some(read_json(&proj_path)?) } else { None };
    Ok(TrainingSet { streams, depths, projection })
}

/// Build a profile. Fields without training data keep their defaults.
pub fn calibrate_profile(set: &TrainingSet, safety: f64) -> Result<CalibrationProfile> {
    let mut profile = CalibrationProfile::default();
    profile.tap_threshold = calibrate_threshold(&set.streams, safety)?;
    profile.bin_edges = make_binning(profile.tap_threshold, DEFAULT_MAX_INTENSITY_G, DEFAULT_NUM_LEVELS)?.edges;
    if let Some(cloud) = &set.depths {
        profile.surface_depth_m = calibrate_surface_depth(cloud, DEFAULT_DEPTH_BIN_M)?;
    }
    if let Some(p) = &set.projection {
        match calibrate_projection(&p.correspondences, p.detected_markers, p.min_markers)? {
            ProjectionCalibration::Ready { homography, marker_confidence } => {
                profile.homography = homography.to_row_major();
                profile.marker_confidence = marker_confidence;
            }
            ProjectionCalibration::NotReady { detected, required } => {
                return Err(Error::InsufficientCalibration(format!(
                    "{detected} fiducial markers detected, need {required}"
                )));
            }
        }
    }
    profile.validate()?;
    Ok(profile)
}

/// Write a synthetic training directory: `taps` one-tap traces with the
/// given dip, a 70/30 depth cloud around `surface_depth_m`, and four
/// corner correspondences from a fixed camera.
pub fn write_synthetic_training(dir: &Path, taps: usize, dip_g: f64, surface_depth_m: f64, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let layout = DrumLayout::default();
    for i in 0..taps {
        let tap = TapSpec { dip_g: Some(dip_g), ..TapSpec::on(2, 0.5, IntensityClass::Hard) };
        let spec = ScenarioSpec { surface_depth_m, ..ScenarioSpec::new(1.0, vec![tap], seed.wrapping_add(i as u64)) };
        let trace = generate(&spec, &layout)?;
        let imu: Vec<_> = trace.records.into_iter().filter(|r| matches!(r, TraceRecord::Imu(_))).collect();
        write_trace(&imu, fs::File::create(dir.join(format!("tap_{i:02}.jsonl")))?)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.002).expect("valid sigma");
    let depths: Vec<f64> = (0..1000)
        .map(|_| {
            // 30% of points land on objects nearer the camera
            let base = if rng.random::<f64>() < 0.7 { surface_depth_m } else { surface_depth_m - 0.3 };
            base + noise.sample(&mut rng)
        })
        .collect();
    fs::write(dir.join("depth.json"), serde_json::to_string(&depths).expect("depths serialize"))?;

    let camera = Homography::from_row_major([640.0, 12.0, 80.0, -8.0, 620.0, 60.0, 1e-4, -5e-5, 1.0]);
    let correspondences = [[0.0, 0.0], [layout.width, 0.0], [layout.width, layout.height], [0.0, layout.height]]
        .iter()
        .map(|&s| Correspondence { pixel: camera.apply(s), surface: s })
        .collect();
    let projection = ProjectionInput { correspondences, detected_markers: 4, min_markers: DEFAULT_MIN_MARKERS };
    fs::write(dir.join("projection.json"), serde_json::to_string_pretty(&projection).expect("projection serializes"))?;
    Ok(())
}
