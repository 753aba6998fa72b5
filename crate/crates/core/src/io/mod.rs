//! Files on disk: Gaussian PLYs with a metadata sidecar, dataset directories,
//! synthetic scenes and reports.

pub mod dataset;
pub mod ply;
pub mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use dataset::{load_dataset, save_dataset, write_gray_png, CameraRecord, CamerasFile};
pub use synth::{synth_scene, GroundTruth, SceneKind, SynthParams};

/// Sidecar written next to a trained asset pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub seed: u64,
    pub config_digest: String,
    pub iterations: usize,
    pub surface_gaussians: usize,
    pub infill_gaussians: usize,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
