//! Simplified adaptive density control: clone small, split large, prune faint.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::camera::Camera;
use crate::config::DensifyConfig;
use crate::gaussian::{Gaussian3D, GaussianSet};
use crate::raster::SceneGradients;

/// Running average of the view-space mean gradient norm, in normalized device units.
#[derive(Clone, Debug, Default)]
pub struct DensifyStats {
    accum: Vec<f64>,
    count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats { accum: vec![0.0; n], count: vec![0; n] }
    }

    /// Statistics as if each Gaussian had been seen once with the given value.
    pub fn from_averages(avgs: &[f64]) -> Self {
        DensifyStats { accum: avgs.to_vec(), count: vec![1; avgs.len()] }
    }

    pub fn len(&self) -> usize {
        self.accum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accum.is_empty()
    }

    pub fn add(&mut self, grads: &SceneGradients, cam: &Camera) {
        let ndc = 0.25 * (cam.width + cam.height) as f64;
        for (i, (&g, &vis)) in grads.surface_screen_grad.iter().zip(&grads.surface_visible).enumerate() {
            if vis {
                self.accum[i] += g * ndc;
                self.count[i] += 1;
            }
        }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.accum[i] / self.count[i] as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DensifyOutcome {
    /// For each Gaussian of the new set, its index in the old set if it was kept as is.
    pub origin: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

fn split_child(g: &Gaussian3D, divisor: f64, rng: &mut ChaCha8Rng) -> Gaussian3D {
    let s = g.scale();
    let z = Vector3::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
    let r = g.rotation_matrix().unwrap_or_else(|_| nalgebra::Matrix3::identity());
    let mut c = g.clone();
    let m = g.mean() + r * s.component_mul(&z);
    let ls = (s / divisor).map(f64::ln);
    for k in 0..3 {
        c.mean[k] = m[k] as f32;
        c.log_scale[k] = ls[k] as f32;
    }
    c
}

/// Applies one densification round. Candidates are Gaussians whose average
/// gradient reaches the threshold; new Gaussians are appended in index order
/// until the cap is met.
pub fn densify(
    surface: &mut GaussianSet,
    stats: &DensifyStats,
    cfg: &DensifyConfig,
    extent: f64,
    rng: &mut ChaCha8Rng,
) -> DensifyOutcome {
    assert_eq!(stats.len(), surface.len(), "densify statistics out of sync");
    let n = surface.len();
    let dense = cfg.percent_dense * extent;
    let mut split_mask = vec![false; n];
    let mut clones = Vec::new();
    let mut children = Vec::new();
    let mut out = DensifyOutcome::default();
    let mut budget = cfg.max_gaussians.saturating_sub(n);
    for (i, g) in surface.gaussians.iter().enumerate() {
        if stats.average(i) < cfg.grad_threshold || g.opacity() < cfg.min_opacity {
            continue;
        }
        if g.scale().max() <= dense {
            if budget == 0 {
                continue;
            }
            budget -= 1;
            clones.push(g.clone());
            out.cloned += 1;
        } else {
            if budget == 0 {
                continue;
            }
            budget -= 1;
            split_mask[i] = true;
            children.push(split_child(g, cfg.split_scale_divisor, rng));
            children.push(split_child(g, cfg.split_scale_divisor, rng));
            out.split += 1;
        }
    }
    let mut next = Vec::with_capacity(n + clones.len() + children.len());
    for (i, g) in surface.gaussians.iter().enumerate() {
        if split_mask[i] {
            continue;
        }
        if g.opacity() < cfg.min_opacity {
            out.pruned += 1;
            continue;
        }
        next.push(g.clone());
        out.origin.push(Some(i));
    }
    for g in clones.into_iter().chain(children) {
        if g.opacity() >= cfg.min_opacity {
            next.push(g);
            out.origin.push(None);
        }
    }
    surface.gaussians = next;
    surface.voxel_refs.clear();
    out
}
