//! Opacity-only optimization of injected noise against a frozen surface.

use crate::dataset::View;
use crate::error::{Error, Result};
use crate::gaussian::{FreezeFlags, GaussianSet};
use crate::losses::{alpha_consistency_loss, photometric_loss};
use crate::ngs::fill::randomize_colors;
use crate::raster::{render, render_backward, RenderOptions};
use crate::train::optim::{Adam, GroupRates};
use crate::train::schedule::ViewSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub iterations: usize,
    pub prune_threshold: f64,
    pub opacity_lr: f64,
    pub ssim_lambda: f64,
    pub alpha_loss_weight: f64,
    pub alpha_loss: bool,
    pub foreground_loss: bool,
    pub background: [f64; 3],
    pub seed: u64,
    /// Iteration number of the first step, for the color and view streams.
    pub first_iteration: usize,
}

impl FinetuneConfig {
    pub fn from_train(cfg: &crate::config::TrainConfig) -> Self {
        FinetuneConfig {
            iterations: cfg.noise_finetune_iterations,
            prune_threshold: cfg.noise_prune_opacity_threshold,
            opacity_lr: cfg.lr.noise_opacities,
            ssim_lambda: cfg.ssim_lambda,
            alpha_loss_weight: cfg.alpha_loss_weight,
            alpha_loss: cfg.alpha_loss,
            foreground_loss: cfg.ablation.foreground_loss,
            background: cfg.background,
            seed: cfg.seed,
            first_iteration: cfg.noise_start_iteration,
        }
    }
}

/// Trains noise opacity logits only, recoloring the noise every step, then
/// removes noise whose opacity fell below the threshold. Returns the keep mask
/// over the input set along with the frozen result.
pub fn finetune_noise(
    noise: &GaussianSet,
    surface: &GaussianSet,
    views: &[&View],
    cfg: &FinetuneConfig,
) -> Result<(GaussianSet, Vec<bool>)> {
    if !surface.freeze.all_frozen() {
        return Err(Error::InvalidParameter("surface must be fully frozen while fine-tuning noise".into()));
    }
    if views.is_empty() && cfg.iterations > 0 {
        return Err(Error::InvalidParameter("noise fine-tuning needs at least one view".into()));
    }
    let mut noise = noise.clone();
    noise.freeze = FreezeFlags::OPACITY_ONLY;
    let mut adam = Adam::new(noise.len());
    let rates = GroupRates { opacities: cfg.opacity_lr, ..Default::default() };
    let mut schedule = ViewSchedule::new(cfg.seed, (0..views.len().max(1)).collect());

    for k in 0..cfg.iterations {
        if noise.is_empty() {
            break;
        }
        let it = cfg.first_iteration + k;
        randomize_colors(&mut noise, cfg.seed, it as u64);
        let view = views[schedule.view_at(it)];
        let out = render(surface, Some(&noise), &view.camera, &RenderOptions::default().with_background(cfg.background).with_record());
        let photo = photometric_loss(&out.color, &view.image, cfg.ssim_lambda)?;
        let d_alpha = if cfg.alpha_loss {
            let mut a = alpha_consistency_loss(&out.alpha, &view.mask, cfg.foreground_loss)?.grad;
            a.data.iter_mut().for_each(|g| *g *= cfg.alpha_loss_weight);
            Some(a)
        } else {
            None
        };
        let grads = render_backward(&out, surface, Some(&noise), &photo.grad, d_alpha.as_ref())?;
        adam.step(&mut noise, &grads.noise, &rates);
    }

    let keep: Vec<bool> = noise.gaussians.iter().map(|g| g.opacity() >= cfg.prune_threshold).collect();
    noise.retain_by(&keep);
    noise.freeze = FreezeFlags::ALL;
    Ok((noise, keep))
}
