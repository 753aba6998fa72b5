//! Staged optimization: surface warm-up with densification, noise infill and
//! opacity fine-tuning, then surface training against the frozen infill.

pub mod densify;
pub mod optim;
pub mod schedule;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmark::{sos_view, transmittance_map, MaskFallback};
use crate::config::TrainConfig;
use crate::dataset::{Dataset, View};
use crate::error::{Error, Result};
use crate::gaussian::{FreezeFlags, Gaussian3D, GaussianSet, Role};
use crate::image::{ColorImage, ScalarMap};
use crate::losses::{alpha_consistency_loss, photometric_loss};
use crate::ngs::{depth_views, finetune_noise, multiscale_fill, randomize_colors, FillConfig, FinetuneConfig};
use crate::raster::{render, render_backward_with, AlphaChannel, RenderOptions};

pub use densify::{densify, DensifyOutcome, DensifyStats};
pub use optim::{Adam, GroupRates};
pub use schedule::{ExpDecay, ViewSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Surface,
    Noise,
    Guided,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub view: usize,
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    pub alpha_loss: Option<f64>,
    pub surface: usize,
    pub noise: usize,
    pub mean_lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_sos: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub surface: GaussianSet,
    pub infill: GaussianSet,
    pub log: Vec<LogRecord>,
    pub extent: f64,
}

impl TrainResult {
    /// The log as newline-delimited JSON.
    pub fn log_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.log {
            s.push_str(&serde_json::to_string(r).expect("log records serialize"));
            s.push('\n');
        }
        s
    }
}

/// Read-only view of the parameter stores handed to a step observer.
pub struct StepState<'a> {
    pub iteration: usize,
    pub phase: Phase,
    pub surface: &'a GaussianSet,
    pub noise: &'a GaussianSet,
}

/// Point closest to all optical axes, and a radius that the views can see around it.
pub fn scene_bounds(views: &[&View]) -> Result<(Vector3<f64>, f64)> {
    if views.is_empty() {
        return Err(Error::Dataset("no training views".into()));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    let mut centroid = Vector3::zeros();
    for v in views {
        let o = v.camera.center();
        let d = v.camera.rotation.row(2).transpose();
        let p = Matrix3::identity() - d * d.transpose();
        a += p;
        b += p * o;
        centroid += o;
    }
    centroid /= views.len() as f64;
    let center = match a.try_inverse() {
        Some(inv) if a.determinant().abs() > 1e-9 => inv * b,
        _ => centroid,
    };
    let radius = views
        .iter()
        .map(|v| {
            let c = &v.camera;
            let half = (c.width as f64 / (2.0 * c.intrinsics.fx)).min(c.height as f64 / (2.0 * c.intrinsics.fy));
            (c.center() - center).norm() * half.atan().sin()
        })
        .fold(f64::INFINITY, f64::min);
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Degenerate("cameras do not surround a common region".into()));
    }
    Ok((center, radius))
}

/// Random points inside the visual hull of the training masks, colored by the
/// mean of the pixels they project to.
pub fn initialize(views: &[&View], cfg: &TrainConfig) -> Result<(GaussianSet, f64)> {
    if views.iter().all(|v| v.mask_pixels() == 0) {
        return Err(Error::Dataset("every training mask is empty; nothing to reconstruct".into()));
    }
    let (center, radius) = scene_bounds(views)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x1417);
    let mut gs = Vec::with_capacity(cfg.init.num_points);
    let max_draws = cfg.init.num_points.max(1) * 500;
    let mut draws = 0;
    while gs.len() < cfg.init.num_points && draws < max_draws {
        draws += 1;
        let p = center + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * radius;
        let mut color = [0.0; 3];
        let mut seen = 0usize;
        let inside = views.iter().all(|v| match v.camera.pixel_of(&p) {
            Some((x, y, _)) => {
                let (x, y) = (x as usize, y as usize);
                if v.mask.get(x, y) < 0.5 {
                    return false;
                }
                let c = v.image.get(x, y);
                (0..3).for_each(|k| color[k] += c[k]);
                seen += 1;
                true
            }
            None => true,
        });
        if !inside || seen == 0 {
            continue;
        }
        color.iter_mut().for_each(|c| *c = (*c / seen as f64).clamp(0.02, 0.98));
        gs.push(Gaussian3D::isotropic(p, cfg.init.scale * radius, cfg.init.opacity, color));
    }
    if gs.is_empty() {
        return Err(Error::Dataset("no initial point fell inside the visual hull of the masks".into()));
    }
    if gs.len() < cfg.init.num_points {
        log::warn!("visual hull sampling produced {} of {} initial points", gs.len(), cfg.init.num_points);
    }
    Ok((GaussianSet::from_gaussians(Role::Surface, gs), radius))
}

struct Step {
    loss: f64,
    l1: f64,
    ssim: f64,
    alpha: Option<f64>,
}

fn composite_target(view: &View, bg: [f64; 3]) -> ColorImage {
    let mut t = view.image.clone();
    for (i, m) in view.mask.data.iter().enumerate() {
        let w = 1.0 - m.clamp(0.0, 1.0);
        for k in 0..3 {
            t.data[3 * i + k] += w * bg[k];
        }
    }
    t
}

fn loss_grads(
    out: &crate::raster::RenderOutput,
    view: &View,
    target: &ColorImage,
    cfg: &TrainConfig,
    channel: AlphaChannel,
) -> Result<(Step, ColorImage, Option<ScalarMap>)> {
    let photo = photometric_loss(&out.color, target, cfg.ssim_lambda)?;
    let mut step = Step { loss: photo.value, l1: photo.l1, ssim: photo.ssim, alpha: None };
    let d_alpha = if cfg.alpha_loss {
        let alpha = match (channel, &out.noise_weight) {
            (AlphaChannel::Surface, Some(nw)) => ScalarMap {
                width: out.alpha.width,
                height: out.alpha.height,
                data: out.alpha.data.iter().zip(&nw.data).map(|(a, n)| (a - n).clamp(0.0, 1.0)).collect(),
            },
            _ => out.alpha.clone(),
        };
        let a = alpha_consistency_loss(&alpha, &view.mask, cfg.ablation.foreground_loss)?;
        step.loss += cfg.alpha_loss_weight * a.value;
        step.alpha = Some(a.value);
        let mut g = a.grad;
        g.data.iter_mut().for_each(|v| *v *= cfg.alpha_loss_weight);
        Some(g)
    } else {
        None
    };
    Ok((step, photo.grad, d_alpha))
}

fn background_for(cfg: &TrainConfig, iteration: usize) -> [f64; 3] {
    if cfg.ablation.random_background {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb6_b6);
        rng.set_stream(iteration as u64);
        [rng.random(), rng.random(), rng.random()]
    } else {
        cfg.background
    }
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    train_with(dataset, cfg, |_| {})
}

/// Runs the full schedule, calling `observe` after every optimizer step.
pub fn train_with(dataset: &Dataset, cfg: &TrainConfig, mut observe: impl FnMut(&StepState)) -> Result<TrainResult> {
    cfg.validate()?;
    let train_idx = dataset.train_indices();
    if train_idx.len() < 4 {
        return Err(Error::Dataset(format!("training needs at least 4 training views, found {}", train_idx.len())));
    }
    let views: Vec<&View> = train_idx.iter().map(|&i| &dataset.views[i]).collect();
    let (mut surface, extent) = initialize(&views, cfg)?;
    log::info!("initialized {} surface Gaussians, scene extent {extent:.4}", surface.len());

    let mut noise = GaussianSet::new(Role::Noise).with_freeze(FreezeFlags::ALL);
    let mut adam = Adam::new(surface.len());
    let mut stats = DensifyStats::new(surface.len());
    let mut schedule = ViewSchedule::new(cfg.seed, (0..views.len()).collect());
    let mut mean_lr = ExpDecay {
        initial: cfg.lr.means * extent,
        final_: cfg.lr.means_final * extent,
        steps: cfg.lr.means_decay_iterations,
        start: 0,
    };
    let mut densify_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    densify_rng.set_stream(0xd3_45);
    let mut log_records = Vec::with_capacity(cfg.iterations);
    let noise_start = if cfg.noise { cfg.noise_start_iteration } else { cfg.iterations };
    let densify_stop = cfg.densify_stop();
    let probe = dataset.test_indices().first().copied().unwrap_or(train_idx[0]);

    let mut it = 0;
    while it < cfg.iterations {
        if it == noise_start {
            noise = noise_phase(&surface, &views, cfg)?;
            log_records.push(LogRecord {
                iteration: it,
                phase: Phase::Noise,
                view: 0,
                loss: 0.0,
                l1: 0.0,
                ssim: 0.0,
                alpha_loss: None,
                surface: surface.len(),
                noise: noise.len(),
                mean_lr: 0.0,
                probe_sos: None,
            });
            it = cfg.guided_start();
            if cfg.ablation.lr_reset {
                mean_lr.reset(it);
            }
            continue;
        }
        let phase = if it < noise_start { Phase::Surface } else { Phase::Guided };
        if phase == Phase::Guided && cfg.ablation.color_reset {
            randomize_colors(&mut noise, cfg.seed, it as u64);
        }
        let vi = schedule.view_at(it);
        let view = views[vi];
        let bg = background_for(cfg, it);
        let target = composite_target(view, bg);
        let noise_ref = (!noise.is_empty()).then_some(&noise);
        let channel = if noise_ref.is_some() && cfg.guided_surface_alpha { AlphaChannel::Surface } else { AlphaChannel::All };
        let mut opts = RenderOptions::default().with_background(bg).with_record();
        if channel == AlphaChannel::Surface {
            opts = opts.with_noise_channel();
        }
        let out = render(&surface, noise_ref, &view.camera, &opts);
        let (step, d_color, d_alpha) = loss_grads(&out, view, &target, cfg, channel)?;
        let grads = render_backward_with(&out, &surface, noise_ref, &d_color, d_alpha.as_ref(), channel)?;
        let lr = mean_lr.at(it);
        let rates = GroupRates {
            means: lr,
            scales: cfg.lr.scales,
            rotations: cfg.lr.rotations,
            opacities: cfg.lr.opacities,
            colors: cfg.lr.colors,
        };
        adam.step(&mut surface, &grads.surface, &rates);

        if cfg.densify.enabled && it < densify_stop {
            stats.add(&grads, &view.camera);
            let due = it >= cfg.densify.start && (it + 1 - cfg.densify.start) % cfg.densify.interval == 0;
            if due && it + 1 < densify_stop {
                let o = densify(&mut surface, &stats, &cfg.densify, extent, &mut densify_rng);
                adam.remap(&o.origin);
                stats = DensifyStats::new(surface.len());
                log::debug!("iter {it}: cloned {} split {} pruned {} -> {}", o.cloned, o.split, o.pruned, surface.len());
            }
            if let Some(every) = cfg.densify.opacity_reset_interval {
                if every > 0 && (it + 1) % every == 0 {
                    surface.gaussians.iter_mut().for_each(|g| g.set_opacity(g.opacity().min(0.01)));
                }
            }
        }

        let probe_sos = if cfg.probe_interval > 0 && (it + 1) % cfg.probe_interval == 0 && !noise.is_empty() {
            let pv = &dataset.views[probe];
            let tm = transmittance_map(&surface, &noise, &pv.camera, Some(&pv.mask), MaskFallback::default())?;
            sos_view(&tm.t, &tm.m)?
        } else {
            None
        };
        log_records.push(LogRecord {
            iteration: it,
            phase,
            view: train_idx[vi],
            loss: step.loss,
            l1: step.l1,
            ssim: step.ssim,
            alpha_loss: step.alpha,
            surface: surface.len(),
            noise: noise.len(),
            mean_lr: lr,
            probe_sos,
        });
        observe(&StepState { iteration: it, phase, surface: &surface, noise: &noise });
        it += 1;
    }
    noise.freeze = FreezeFlags::ALL;
    surface.freeze = FreezeFlags::NONE;
    Ok(TrainResult { surface, infill: noise, log: log_records, extent })
}

/// Builds and fine-tunes the infill against the current surface, held frozen.
pub fn noise_phase(surface: &GaussianSet, views: &[&View], cfg: &TrainConfig) -> Result<GaussianSet> {
    let frozen = surface.clone().with_freeze(FreezeFlags::ALL);
    let dviews = depth_views(&frozen, views.iter().copied(), cfg.depth_crossing)?;
    let infill = multiscale_fill(&frozen, &dviews, &FillConfig::from_train(cfg), cfg.seed)?;
    log::info!("injected {} noise Gaussians", infill.noise.len());
    let (noise, _) = finetune_noise(&infill.noise, &frozen, views, &FinetuneConfig::from_train(cfg))?;
    log::info!("{} noise Gaussians survive fine-tuning", noise.len());
    Ok(noise)
}
