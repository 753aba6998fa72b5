#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use noisesplat_core::camera::{Camera, Intrinsics};
use noisesplat_core::gaussian::{Gaussian3D, GaussianSet, Role};
use noisesplat_core::image::{ColorImage, ScalarMap};
use noisesplat_core::raster::{render, render_backward_with, AlphaChannel, RenderOptions, SceneGradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identity-pose camera looking down +z with the principal point at the image center.
pub fn axis_camera(size: u32, f: f64) -> Camera {
    Camera::new(
        Intrinsics { fx: f, fy: f, cx: size as f64 / 2.0, cy: size as f64 / 2.0 },
        size,
        size,
        Matrix3::identity(),
        Vector3::zeros(),
    )
    .unwrap()
}

pub fn orbit_camera(size: u32, azimuth: f64, elevation: f64, distance: f64) -> Camera {
    let eye = Vector3::new(
        distance * elevation.cos() * azimuth.cos(),
        distance * elevation.cos() * azimuth.sin(),
        distance * elevation.sin(),
    );
    Camera::look_at(eye, Vector3::zeros(), Vector3::z(), 0.8, size, size).unwrap()
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, spread: f64) -> Gaussian3D {
    let mean = Vector3::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
    );
    let scale = Vector3::new(
        rng.random_range(-2.0f64..-0.9).exp(),
        rng.random_range(-2.0f64..-0.9).exp(),
        rng.random_range(-2.0f64..-0.9).exp(),
    );
    let q = [
        rng.random_range(0.3..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let color = [rng.random(), rng.random(), rng.random()];
    Gaussian3D::new(mean, scale, q, rng.random_range(0.1..0.7), color)
}

pub fn random_set(rng: &mut ChaCha8Rng, role: Role, n: usize, spread: f64) -> GaussianSet {
    GaussianSet::from_gaussians(role, (0..n).map(|_| random_gaussian(rng, spread)).collect())
}

/// Random linear functional over color and alpha, used as a scalar loss.
pub struct LinearLoss {
    pub d_color: ColorImage,
    pub d_alpha: ScalarMap,
    pub channel: AlphaChannel,
}

impl LinearLoss {
    pub fn random(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Self {
        LinearLoss {
            d_color: ColorImage { width: w, height: h, data: (0..w * h * 3).map(|_| rng.random_range(-1.0..1.0)).collect() },
            d_alpha: ScalarMap { width: w, height: h, data: (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect() },
            channel: AlphaChannel::All,
        }
    }

    pub fn eval(&self, surface: &GaussianSet, noise: Option<&GaussianSet>, cam: &Camera, bg: [f64; 3]) -> f64 {
        let out = render(surface, noise, cam, &RenderOptions::default().with_background(bg).with_noise_channel());
        let c: f64 = out.color.data.iter().zip(&self.d_color.data).map(|(a, b)| a * b).sum();
        let a: f64 = out.alpha.data.iter().zip(&self.d_alpha.data).map(|(a, b)| a * b).sum();
        let behind = match (self.channel, &out.noise_weight) {
            (AlphaChannel::Surface, Some(nw)) => nw.data.iter().zip(&self.d_alpha.data).map(|(a, b)| a * b).sum(),
            _ => 0.0,
        };
        c + a - behind
    }

    pub fn grads(&self, surface: &GaussianSet, noise: Option<&GaussianSet>, cam: &Camera, bg: [f64; 3]) -> SceneGradients {
        let out = render(surface, noise, cam, &RenderOptions::default().with_background(bg).with_record());
        render_backward_with(&out, surface, noise, &self.d_color, Some(&self.d_alpha), self.channel).unwrap()
    }
}

/// Mutable access to the `k`-th raw scalar of a Gaussian (14 per Gaussian).
pub fn param_mut(g: &mut Gaussian3D, k: usize) -> &mut f32 {
    match k {
        0..=2 => &mut g.mean[k],
        3..=5 => &mut g.log_scale[k - 3],
        6..=9 => &mut g.rotation[k - 6],
        10 => &mut g.opacity_logit,
        _ => &mut g.sh_dc[k - 11],
    }
}

pub fn param_grad(g: &noisesplat_core::raster::GaussianGrad, k: usize) -> f64 {
    match k {
        0..=2 => g.mean[k],
        3..=5 => g.log_scale[k - 3],
        6..=9 => g.rotation[k - 6],
        10 => g.opacity_logit,
        _ => g.sh_dc[k - 11],
    }
}

pub const PARAMS_PER_GAUSSIAN: usize = 14;

#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

/// Central differences (step `h` on the stored value) against the analytic gradient
/// for every scalar parameter of every Gaussian in both sets.
pub fn check_gradients(
    surface: &GaussianSet,
    noise: Option<&GaussianSet>,
    cam: &Camera,
    loss: &LinearLoss,
    h: f32,
    bg: [f64; 3],
) -> GradCheck {
    let analytic = loss.grads(surface, noise, cam, bg);
    let mut report = GradCheck::default();
    let mut visit = |role: Role, idx: usize, k: usize| {
        let (mut s, mut n) = (surface.clone(), noise.cloned());
        let base = match role {
            Role::Surface => *param_mut(&mut s.gaussians[idx], k),
            Role::Noise => *param_mut(&mut n.as_mut().unwrap().gaussians[idx], k),
        };
        let (plus, minus) = (base + h, base - h);
        let set_val = |s: &mut GaussianSet, n: &mut Option<GaussianSet>, v: f32| match role {
            Role::Surface => *param_mut(&mut s.gaussians[idx], k) = v,
            Role::Noise => *param_mut(&mut n.as_mut().unwrap().gaussians[idx], k) = v,
        };
        set_val(&mut s, &mut n, plus);
        let lp = loss.eval(&s, n.as_ref(), cam, bg);
        set_val(&mut s, &mut n, minus);
        let lm = loss.eval(&s, n.as_ref(), cam, bg);
        let fd = (lp - lm) / (plus as f64 - minus as f64);
        let an = match role {
            Role::Surface => param_grad(&analytic.surface[idx], k),
            Role::Noise => param_grad(&analytic.noise[idx], k),
        };
        let frozen = match role {
            Role::Surface => false,
            Role::Noise => noise.map_or(false, |n| is_frozen(n, k)),
        };
        let rel = if frozen {
            an.abs()
        } else {
            (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6)
        };
        report.checked += 1;
        report.worst_rel = report.worst_rel.max(rel);
        if rel >= 1e-3 {
            report.failures.push(format!("{role:?}[{idx}] param {k}: fd {fd:.9e} analytic {an:.9e}"));
        }
    };
    for i in 0..surface.len() {
        for k in 0..PARAMS_PER_GAUSSIAN {
            visit(Role::Surface, i, k);
        }
    }
    if let Some(n) = noise {
        for i in 0..n.len() {
            for k in 0..PARAMS_PER_GAUSSIAN {
                visit(Role::Noise, i, k);
            }
        }
    }
    report
}

fn is_frozen(set: &GaussianSet, k: usize) -> bool {
    let f = set.freeze;
    match k {
        0..=2 => f.means,
        3..=5 => f.scales,
        6..=9 => f.rotations,
        10 => f.opacities,
        _ => f.colors,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Quaternion (w, x, y, z) rotating +z onto the unit vector `n`.
pub fn quat_z_to(n: &Vector3<f64>) -> [f64; 4] {
    let z = Vector3::z();
    let c = z.dot(n);
    if c < -1.0 + 1e-12 {
        return [0.0, 1.0, 0.0, 0.0];
    }
    let axis = z.cross(n);
    let w = 1.0 + c;
    let norm = (w * w + axis.norm_squared()).sqrt();
    [w / norm, axis.x / norm, axis.y / norm, axis.z / norm]
}

/// Fibonacci-sphere points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            Vector3::new(r * t.cos(), y, r * t.sin())
        })
        .collect()
}

/// Tangent discs covering a sphere; `keep` filters unit directions (e.g. to cut a hole).
pub fn sphere_surface(
    center: Vector3<f64>,
    radius: f64,
    n: usize,
    opacity: f64,
    keep: impl Fn(&Vector3<f64>) -> bool,
) -> GaussianSet {
    let spacing = radius * (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let gs = fibonacci_sphere(n)
        .into_iter()
        .filter(|d| keep(d))
        .map(|d| {
            let color = [0.5 + 0.4 * d.x, 0.5 + 0.4 * d.y, 0.5 + 0.4 * d.z];
            Gaussian3D::new(
                center + d * radius,
                Vector3::new(0.8 * spacing, 0.8 * spacing, 0.01 * radius),
                quat_z_to(&d),
                opacity,
                color,
            )
        })
        .collect();
    GaussianSet::from_gaussians(Role::Surface, gs)
}

/// 16 azimuths at two elevations around the origin.
pub fn ring_cameras(size: u32, distance: f64) -> Vec<Camera> {
    let mut cams = Vec::new();
    for el in [-0.35, 0.35] {
        for k in 0..16 {
            cams.push(orbit_camera(size, k as f64 * std::f64::consts::TAU / 16.0, el, distance));
        }
    }
    cams
}

/// First intersection distance along a unit ray with a sphere, if any.
pub fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = d.dot(&oc);
    let disc = b * b - (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Views whose images and masks are rendered from `surface` itself.
pub fn views_of(surface: &GaussianSet, cams: &[Camera]) -> Vec<noisesplat_core::View> {
    cams.iter()
        .enumerate()
        .map(|(i, cam)| {
            let out = render(surface, None, cam, &RenderOptions::default());
            let mask = ScalarMap {
                width: out.width,
                height: out.height,
                data: out.alpha.data.iter().map(|&a| if a > 0.5 { 1.0 } else { 0.0 }).collect(),
            };
            noisesplat_core::View {
                name: format!("view_{i:03}"),
                camera: cam.clone(),
                image: out.color_clamped(),
                mask,
                split: noisesplat_core::Split::Train,
            }
        })
        .collect()
}

/// Mask of pixels whose center ray hits the analytic sphere.
pub fn sphere_mask(cam: &Camera, c: &Vector3<f64>, r: f64) -> ScalarMap {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut m = ScalarMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (o, d) = cam.pixel_ray(x as u32, y as u32);
            m.set(x, y, if ray_sphere(&o, &d, c, r).is_some() { 1.0 } else { 0.0 });
        }
    }
    m
}

/// Per-view removal predicted from the analytic sphere, or `None` when the point
/// sits within `band` of a decision boundary.
pub fn oracle_removes(cam: &Camera, p: &Vector3<f64>, margin: f64, band: f64) -> Option<bool> {
    let Some((x, y, z)) = cam.pixel_of(p) else { return Some(false) };
    let (o, d) = cam.pixel_ray(x, y);
    // Closest approach of the pixel ray to the sphere center decides the silhouette.
    let closest = (o - d * d.dot(&o)).norm();
    if (closest - 1.0).abs() < band {
        return None;
    }
    let Some(t) = ray_sphere(&o, &d, &Vector3::zeros(), 1.0) else { return Some(true) };
    let hit_depth = cam.to_camera(&(o + d * t)).z;
    if (z - (hit_depth + margin)).abs() < band {
        return None;
    }
    Some(z < hit_depth + margin)
}
