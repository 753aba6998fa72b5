//! Analytic gradients of the compositing renderer.
//!
//! The pass walks each pixel's blend list back to front, carrying the
//! normalized color behind the current splat and the product of the remaining
//! `(1 - alpha)` factors, so no division by `1 - alpha` is ever needed. Per-splat
//! image-space gradients are reduced tile by tile in a fixed order and then
//! chained through the EWA projection to the 3D parameters.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianSet, Role, SH_C0};
use crate::image::{ColorImage, ScalarMap};
use crate::raster::forward::{bin_tiles, RenderOutput, TILE};
use crate::raster::project::{falloff, falloff_slope, projection_terms, Splat2D};

/// Gradient with respect to the raw (stored) parameters of one Gaussian.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianGrad {
    pub mean: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub sh_dc: [f64; 3],
}

impl GaussianGrad {
    pub fn is_zero(&self) -> bool {
        *self == GaussianGrad::default()
    }
}

#[derive(Clone, Debug, Default)]
pub struct SceneGradients {
    pub surface: Vec<GaussianGrad>,
    pub noise: Vec<GaussianGrad>,
    /// Norm of the image-space mean gradient per surface Gaussian (0 when not visible).
    pub surface_screen_grad: Vec<f64>,
    pub surface_visible: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default)]
struct SplatGrad {
    mean2d: [f64; 2],
    /// Gradient w.r.t. the full 2x2 conic, stored as (00, 01 = 10, 11).
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.mean2d[0] += o.mean2d[0];
        self.mean2d[1] += o.mean2d[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// Which coverage the alpha gradient refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlphaChannel {
    /// Accumulated opacity of every splat.
    #[default]
    All,
    /// Accumulated weight of surface splats only (alpha minus the noise weight).
    Surface,
}

/// Back-propagates `dL/dcolor` and `dL/dalpha` through a recorded render.
pub fn render_backward(
    output: &RenderOutput,
    surface: &GaussianSet,
    noise: Option<&GaussianSet>,
    d_color: &ColorImage,
    d_alpha: Option<&ScalarMap>,
) -> Result<SceneGradients> {
    render_backward_with(output, surface, noise, d_color, d_alpha, AlphaChannel::All)
}

/// As [`render_backward`], with `d_alpha` taken with respect to the chosen coverage.
pub fn render_backward_with(
    output: &RenderOutput,
    surface: &GaussianSet,
    noise: Option<&GaussianSet>,
    d_color: &ColorImage,
    d_alpha: Option<&ScalarMap>,
    channel: AlphaChannel,
) -> Result<SceneGradients> {
    let record = output
        .record
        .as_ref()
        .ok_or_else(|| Error::RecordMismatch("render was produced without a blend record".into()))?;
    if record.surface_fingerprint != surface.fingerprint()
        || record.noise_fingerprint != noise.map(GaussianSet::fingerprint)
    {
        return Err(Error::RecordMismatch("Gaussian parameters changed since the forward pass".into()));
    }
    d_color.check_same_size(&output.color)?;
    if let Some(da) = d_alpha {
        da.check_same_size(&output.alpha)?;
    }

    let cam = &record.camera;
    let (w, h) = (cam.width, cam.height);
    let (tx, _ty, tiles) = bin_tiles(&record.splats, w, h);

    let partials: Vec<Vec<(u32, SplatGrad)>> = tiles
        .par_iter()
        .enumerate()
        .map(|(t, list)| backward_tile(t as u32, tx, list, output, d_color, d_alpha, channel))
        .collect();

    let mut per_splat = vec![SplatGrad::default(); record.splats.len()];
    for tile in &partials {
        for (si, g) in tile {
            per_splat[*si as usize].add(g);
        }
    }

    let mut grads = SceneGradients {
        surface: vec![GaussianGrad::default(); surface.len()],
        noise: vec![GaussianGrad::default(); noise.map_or(0, GaussianSet::len)],
        surface_screen_grad: vec![0.0; surface.len()],
        surface_visible: vec![false; surface.len()],
    };
    for (splat, g2) in record.splats.iter().zip(&per_splat) {
        let (set, out) = match splat.source.role {
            Role::Surface => (surface, &mut grads.surface),
            Role::Noise => (noise.expect("noise splat without noise set"), &mut grads.noise),
        };
        let idx = splat.source.index;
        let g3 = chain_to_3d(&set.gaussians[idx], cam, splat, g2);
        out[idx] = apply_freeze(g3, set);
        if splat.source.role == Role::Surface {
            grads.surface_visible[idx] = true;
            grads.surface_screen_grad[idx] = Vector2::new(g2.mean2d[0], g2.mean2d[1]).norm();
        }
    }
    Ok(grads)
}

fn apply_freeze(mut g: GaussianGrad, set: &GaussianSet) -> GaussianGrad {
    let f = set.freeze;
    if f.means {
        g.mean = [0.0; 3];
    }
    if f.scales {
        g.log_scale = [0.0; 3];
    }
    if f.rotations {
        g.rotation = [0.0; 4];
    }
    if f.opacities {
        g.opacity_logit = 0.0;
    }
    if f.colors {
        g.sh_dc = [0.0; 3];
    }
    g
}

fn backward_tile(
    t: u32,
    tx: u32,
    list: &[u32],
    output: &RenderOutput,
    d_color: &ColorImage,
    d_alpha: Option<&ScalarMap>,
    channel: AlphaChannel,
) -> Vec<(u32, SplatGrad)> {
    let record = output.record.as_ref().expect("checked by caller");
    let (w, h) = (record.camera.width, record.camera.height);
    let (bx, by) = (t % tx, t / tx);
    let mut local = vec![SplatGrad::default(); list.len()];
    let bg = record.background;

    for y in by * TILE..((by + 1) * TILE).min(h) {
        for x in bx * TILE..((bx + 1) * TILE).min(w) {
            let (xu, yu) = (x as usize, y as usize);
            let gc = d_color.get(xu, yu);
            let ga = d_alpha.map_or(0.0, |m| m.get(xu, yu));
            if gc == [0.0; 3] && ga == 0.0 {
                continue;
            }
            let entries = record.pixel_entries(xu, yu);
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            // Normalized color and coverage behind the current splat.
            let mut behind = bg;
            let mut cover = 0.0;
            for e in entries.iter().rev() {
                let s = &record.splats[e.splat as usize];
                let li = list.binary_search(&e.splat).expect("splat binned in its tile");
                let acc = &mut local[li];
                let wgt = e.alpha * e.transmittance;
                let value = match channel {
                    AlphaChannel::All => 1.0,
                    AlphaChannel::Surface if s.source.role == Role::Surface => 1.0,
                    AlphaChannel::Surface => 0.0,
                };
                let mut d_a = ga * (value - cover);
                for k in 0..3 {
                    acc.color[k] += gc[k] * wgt;
                    d_a += gc[k] * (s.color[k] - behind[k]);
                }
                d_a *= e.transmittance;
                for k in 0..3 {
                    behind[k] = e.alpha * s.color[k] + (1.0 - e.alpha) * behind[k];
                }
                cover = e.alpha * value + (1.0 - e.alpha) * cover;

                let dx = px - s.pixel_mean.x;
                let dy = py - s.pixel_mean.y;
                let power = s.power_at(px, py);
                acc.opacity += d_a * falloff(power);
                let d_power = d_a * s.base_opacity * falloff_slope(power);
                // power = -0.5 d^T Q d, d = p - mean
                let qd = s.conic * Vector2::new(dx, dy);
                acc.mean2d[0] += d_power * qd.x;
                acc.mean2d[1] += d_power * qd.y;
                acc.conic[0] += d_power * (-0.5 * dx * dx);
                acc.conic[1] += d_power * (-0.5 * dx * dy);
                acc.conic[2] += d_power * (-0.5 * dy * dy);
            }
        }
    }
    list.iter().copied().zip(local).filter(|(_, g)| g.opacity != 0.0 || g.color != [0.0; 3]).collect()
}

/// d R / d q for a unit quaternion `(w, x, y, z)`, contracted with `g_r`.
fn quat_grad(g_r: &Matrix3<f64>, [w, x, y, z]: [f64; 4]) -> [f64; 4] {
    let g = |i: usize, j: usize| g_r[(i, j)];
    let gw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
        + w * g(2, 1)
        - 2.0 * x * g(2, 2));
    let gy = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
        + z * g(2, 1)
        - 2.0 * y * g(2, 2));
    let gz = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
        + y * g(1, 2)
        + x * g(2, 0)
        + y * g(2, 1));
    [gw, gx, gy, gz]
}

fn chain_to_3d(
    g: &crate::gaussian::Gaussian3D,
    cam: &crate::camera::Camera,
    splat: &Splat2D,
    g2: &SplatGrad,
) -> GaussianGrad {
    let terms = projection_terms(g, cam).expect("visible splat has a valid projection");
    let k = &cam.intrinsics;
    let t = terms.t;
    let (iz, iz2, iz3) = (1.0 / t.z, 1.0 / (t.z * t.z), 1.0 / (t.z * t.z * t.z));

    let mut out = GaussianGrad::default();
    for c in 0..3 {
        out.sh_dc[c] = SH_C0 * g2.color[c];
    }
    let o = splat.base_opacity;
    out.opacity_logit = g2.opacity * o * (1.0 - o);

    // conic = cov2d^-1  =>  dL/dcov2d = -Q dL/dQ Q
    let g_q = Matrix2::new(g2.conic[0], g2.conic[1], g2.conic[1], g2.conic[2]);
    let q = &splat.conic;
    let g_cov2d = -(q * g_q * q);
    // cov2d = J Sc J^T
    let j: &Matrix2x3<f64> = &terms.jacobian;
    let g_cov_cam = j.transpose() * g_cov2d * j;
    let g_j = 2.0 * g_cov2d * j * terms.cov_cam;

    let mut g_t = Vector3::new(
        g2.mean2d[0] * k.fx * iz,
        g2.mean2d[1] * k.fy * iz,
        -g2.mean2d[0] * k.fx * t.x * iz2 - g2.mean2d[1] * k.fy * t.y * iz2,
    );
    g_t.x += g_j[(0, 2)] * (-k.fx * iz2);
    g_t.y += g_j[(1, 2)] * (-k.fy * iz2);
    g_t.z += g_j[(0, 0)] * (-k.fx * iz2)
        + g_j[(0, 2)] * (2.0 * k.fx * t.x * iz3)
        + g_j[(1, 1)] * (-k.fy * iz2)
        + g_j[(1, 2)] * (2.0 * k.fy * t.y * iz3);
    let g_mean = cam.rotation.transpose() * g_t;
    out.mean = [g_mean.x, g_mean.y, g_mean.z];

    // Sigma = M M^T with M = R S
    let g_sigma = cam.rotation.transpose() * g_cov_cam * cam.rotation;
    let m = terms.rot * Matrix3::from_diagonal(&terms.scale);
    let g_m = 2.0 * g_sigma * m;
    let mut g_r = Matrix3::zeros();
    for c in 0..3 {
        let mut gs = 0.0;
        for r in 0..3 {
            gs += g_m[(r, c)] * terms.rot[(r, c)];
            g_r[(r, c)] = g_m[(r, c)] * terms.scale[c];
        }
        out.log_scale[c] = gs * terms.scale[c];
    }
    let g_unit = quat_grad(&g_r, terms.quat_unit);
    let qu = terms.quat_unit;
    let dot: f64 = (0..4).map(|i| qu[i] * g_unit[i]).sum();
    for i in 0..4 {
        out.rotation[i] = (g_unit[i] - qu[i] * dot) / terms.quat_norm;
    }
    out
}
