//! Training configuration, loadable from TOML.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// D-SSIM weight in the photometric loss.
    pub ssim_lambda: f64,
    pub alpha_loss_weight: f64,
    /// Use the alpha-consistency loss at all.
    pub alpha_loss: bool,
    /// Once the infill is frozen, supervise the surface's own coverage
    /// (rendered alpha minus the infill weight) instead of the total alpha.
    pub guided_surface_alpha: bool,
    /// Run the noise infill stages.
    pub noise: bool,
    pub noise_start_iteration: usize,
    pub noise_finetune_iterations: usize,
    /// Voxels per axis along the longest hull extent, one entry per level, ascending.
    pub voxel_levels: Vec<u32>,
    pub erosion_iterations: usize,
    pub noise_initial_opacity: f64,
    pub noise_prune_opacity_threshold: f64,
    /// Depth slack for carving, in world units. Defaults to one finest-level voxel.
    pub prune_margin: Option<f64>,
    pub depth_crossing: f64,
    pub densify: DensifyConfig,
    pub lr: LearningRates,
    pub init: InitConfig,
    pub seed: u64,
    pub background: [f64; 3],
    pub ablation: Ablation,
    /// Log a probe-view SOS every this many iterations (0 disables).
    pub probe_interval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub enabled: bool,
    pub start: usize,
    /// Densification stops here; `None` means at the noise start iteration.
    pub stop: Option<usize>,
    pub interval: usize,
    /// Threshold on the average image-space mean gradient norm.
    pub grad_threshold: f64,
    /// Clone below, split above this fraction of the scene extent.
    pub percent_dense: f64,
    pub split_scale_divisor: f64,
    pub min_opacity: f64,
    pub max_gaussians: usize,
    /// Periodic opacity reset (off by default).
    pub opacity_reset_interval: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Initial mean learning rate, multiplied by the scene extent.
    pub means: f64,
    pub means_final: f64,
    /// Iterations over which the mean rate decays from `means` to `means_final`.
    pub means_decay_iterations: usize,
    pub scales: f64,
    pub rotations: f64,
    pub opacities: f64,
    pub colors: f64,
    /// Opacity learning rate used while fine-tuning noise.
    pub noise_opacities: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub num_points: usize,
    pub opacity: f64,
    /// Initial isotropic scale as a fraction of the scene extent.
    pub scale: f64,
}

/// Mechanism switches. `true` keeps the mechanism on (the default).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub erosion: bool,
    pub pruning: bool,
    pub foreground_loss: bool,
    pub lr_reset: bool,
    pub color_reset: bool,
    /// Random background per iteration (off by default).
    pub random_background: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            erosion: true,
            pruning: true,
            foreground_loss: true,
            lr_reset: true,
            color_reset: true,
            random_background: false,
        }
    }
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            enabled: true,
            start: 500,
            stop: None,
            interval: 100,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            split_scale_divisor: 1.6,
            min_opacity: 0.005,
            max_gaussians: 1_000_000,
            opacity_reset_interval: None,
        }
    }
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            means: 1.6e-4,
            means_final: 1.6e-6,
            means_decay_iterations: 30_000,
            scales: 5e-3,
            rotations: 1e-3,
            opacities: 5e-2,
            colors: 2.5e-3,
            noise_opacities: 5e-2,
        }
    }
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { num_points: 10_000, opacity: 0.1, scale: 0.01 }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            ssim_lambda: 0.2,
            alpha_loss_weight: 1.0,
            alpha_loss: true,
            guided_surface_alpha: true,
            noise: true,
            noise_start_iteration: 6_000,
            noise_finetune_iterations: 1_000,
            voxel_levels: vec![16, 32, 64],
            erosion_iterations: 1,
            noise_initial_opacity: 0.95,
            noise_prune_opacity_threshold: 0.1,
            prune_margin: None,
            depth_crossing: 0.5,
            densify: DensifyConfig { stop: Some(15_000), ..Default::default() },
            lr: LearningRates::default(),
            init: InitConfig::default(),
            seed: 0,
            background: [0.0; 3],
            ablation: Ablation::default(),
            probe_interval: 0,
        }
    }
}

impl TrainConfig {
    /// Schedule for 64x64 synthetic scenes: the full schedule scaled down by five.
    pub fn desk() -> Self {
        TrainConfig {
            iterations: 6_000,
            noise_start_iteration: 1_200,
            noise_finetune_iterations: 200,
            voxel_levels: vec![16, 32],
            densify: DensifyConfig { start: 300, interval: 100, max_gaussians: 6_000, ..Default::default() },
            lr: LearningRates { means_decay_iterations: 6_000, ..Default::default() },
            init: InitConfig { num_points: 1_500, opacity: 0.1, scale: 0.02 },
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Iteration at which noise finetuning ends and guided surface training begins.
    pub fn guided_start(&self) -> usize {
        self.noise_start_iteration + self.noise_finetune_iterations
    }

    /// Densification ends at `densify.stop` if set, else at the noise start iteration
    /// (also for runs without noise, so that on/off runs share one schedule).
    pub fn densify_stop(&self) -> usize {
        let stop = self.densify.stop.unwrap_or(self.noise_start_iteration);
        if self.noise {
            stop.min(self.noise_start_iteration)
        } else {
            stop.min(self.iterations)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.ssim_lambda) {
            return fail(format!("ssim_lambda {} outside [0, 1]", self.ssim_lambda));
        }
        if self.noise && self.noise_start_iteration + self.noise_finetune_iterations >= self.iterations {
            return fail(format!(
                "noise_start_iteration + noise_finetune_iterations ({}) must be below iterations ({})",
                self.noise_start_iteration + self.noise_finetune_iterations,
                self.iterations
            ));
        }
        if self.voxel_levels.is_empty() && self.noise {
            return fail("voxel_levels must not be empty".into());
        }
        if self.voxel_levels.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("voxel_levels {:?} must be strictly increasing", self.voxel_levels));
        }
        if self.voxel_levels.iter().any(|&r| r < 2) {
            return fail("voxel resolutions must be at least 2".into());
        }
        if !(self.noise_initial_opacity > 0.0 && self.noise_initial_opacity < 1.0) {
            return fail("noise_initial_opacity must lie in (0, 1)".into());
        }
        if !(self.depth_crossing > 0.0 && self.depth_crossing < 1.0) {
            return fail("depth_crossing must lie in (0, 1)".into());
        }
        if self.densify.interval == 0 {
            return fail("densify.interval must be positive".into());
        }
        if self.lr.means_decay_iterations == 0 {
            return fail("lr.means_decay_iterations must be positive".into());
        }
        Ok(())
    }

    /// Short stable hash of the serialized config, for sidecar metadata.
    pub fn digest(&self) -> String {
        let text = self.to_toml();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
