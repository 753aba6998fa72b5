//! Analytic test scenes: ray-traced flat-shaded shapes with procedural texture
//! seen from a ring of cameras.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::dataset::{split_for_index, Dataset, View};
use crate::error::{Error, Result};
use crate::image::{ColorImage, ScalarMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    OpaqueSphere,
    AmbiguityShells,
    HoledSphere,
    ThinPlane,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] =
        [SceneKind::OpaqueSphere, SceneKind::AmbiguityShells, SceneKind::HoledSphere, SceneKind::ThinPlane];

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::OpaqueSphere => "opaque_sphere",
            SceneKind::AmbiguityShells => "ambiguity_shells",
            SceneKind::HoledSphere => "holed_sphere",
            SceneKind::ThinPlane => "thin_plane",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown scene kind `{s}` (expected one of opaque_sphere, ambiguity_shells, holed_sphere, thin_plane)"
                ))
            })
    }
}

/// One sinusoid per channel term: `amp * sin(freq * (dir . axis) + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub axis: [f64; 3],
    pub freq: f64,
    pub phase: f64,
    pub amp: f64,
}

/// Smooth color field over unit directions (or points).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub base: [f64; 3],
    pub waves: [Vec<Wave>; 3],
}

impl Texture {
    pub fn random(rng: &mut ChaCha8Rng, freqs: &[(f64, f64)]) -> Self {
        let unit = |rng: &mut ChaCha8Rng| loop {
            let v: Vector3<f64> = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                let u = v / n;
                break [u.x, u.y, u.z];
            }
        };
        let base = [rng.random_range(0.35..0.65), rng.random_range(0.35..0.65), rng.random_range(0.35..0.65)];
        let waves = std::array::from_fn(|_| {
            freqs
                .iter()
                .map(|&(freq, amp)| Wave { axis: unit(rng), freq, phase: rng.random_range(0.0..std::f64::consts::TAU), amp })
                .collect()
        });
        Texture { base, waves }
    }

    pub fn eval(&self, p: &Vector3<f64>) -> [f64; 3] {
        std::array::from_fn(|c| {
            let v = self.waves[c]
                .iter()
                .map(|w| w.amp * (w.freq * p.dot(&Vector3::from(w.axis)) + w.phase).sin())
                .sum::<f64>();
            (self.base[c] + v).clamp(0.0, 1.0)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub center: [f64; 3],
    pub radius: f64,
    pub opacity: f64,
}

/// Spherical cap removed around `axis`: points with `dir . axis > cos_half_angle`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub axis: [f64; 3],
    pub cos_half_angle: f64,
}

/// Square double-sided plate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plate {
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub half_size: f64,
}

/// Analytic description of a synthetic scene, enough to re-trace any ray.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: SceneKind,
    pub shells: Vec<Shell>,
    pub hole: Option<Hole>,
    pub plate: Option<Plate>,
    pub texture: Texture,
    /// Brightness factor applied to the inside of a shell seen through a hole.
    pub interior_shade: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub views: usize,
    pub width: u32,
    pub height: u32,
    pub camera_distance: f64,
    pub fov_y: f64,
    pub elevation: f64,
    /// Opacity of the outer shell in `ambiguity_shells`.
    pub outer_opacity: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            views: 32,
            width: 64,
            height: 64,
            camera_distance: 4.0,
            fov_y: 0.8,
            elevation: 0.35,
            outer_opacity: 0.8,
        }
    }
}

struct Hit {
    t: f64,
    color: [f64; 3],
    alpha: f64,
}

fn sphere_hits(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<(f64, f64)> {
    let oc = o - c;
    let b = d.dot(&oc);
    let disc = b * b - (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

impl GroundTruth {
    /// Color (over black) and coverage of a ray.
    pub fn trace(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> ([f64; 3], bool) {
        let mut hits = Vec::new();
        for sh in &self.shells {
            let c = Vector3::from(sh.center);
            if let Some((t0, t1)) = sphere_hits(o, d, &c, sh.radius) {
                for (t, inside) in [(t0, false), (t1, true)] {
                    if t <= 0.0 {
                        continue;
                    }
                    let dir = (o + d * t - c) / sh.radius;
                    if let Some(h) = &self.hole {
                        if dir.dot(&Vector3::from(h.axis)) > h.cos_half_angle {
                            continue;
                        }
                    }
                    let mut color = self.texture.eval(&dir);
                    if inside && self.hole.is_some() {
                        color.iter_mut().for_each(|v| *v *= self.interior_shade);
                    }
                    hits.push(Hit { t, color, alpha: sh.opacity });
                }
            }
        }
        if let Some(p) = &self.plate {
            let n = Vector3::from(p.normal);
            let c = Vector3::from(p.center);
            let denom = d.dot(&n);
            if denom.abs() > 1e-12 {
                let t = (c - o).dot(&n) / denom;
                let x = o + d * t - c;
                let u = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let e1 = n.cross(&u).normalize();
                let e2 = n.cross(&e1);
                if t > 0.0 && x.dot(&e1).abs() <= p.half_size && x.dot(&e2).abs() <= p.half_size {
                    hits.push(Hit { t, color: self.texture.eval(&(x / p.half_size)), alpha: 1.0 });
                }
            }
        }
        let covered = !hits.is_empty();
        hits.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut out = [0.0; 3];
        let mut trans = 1.0;
        for h in hits {
            for k in 0..3 {
                out[k] += trans * h.alpha * h.color[k];
            }
            trans *= 1.0 - h.alpha;
            if trans <= 0.0 {
                break;
            }
        }
        (out, covered)
    }
}

/// Ring of cameras looking at the origin with alternating elevations.
pub fn ring_cameras(p: &SynthParams) -> Result<Vec<Camera>> {
    (0..p.views)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / p.views as f64;
            let el = if i % 2 == 0 { p.elevation } else { -p.elevation };
            let eye = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * p.camera_distance;
            Camera::look_at(eye, Vector3::zeros(), Vector3::z(), p.fov_y, p.width, p.height)
        })
        .collect()
}

fn quantize16(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0
}

pub fn ground_truth(kind: SceneKind, params: &SynthParams, seed: u64) -> GroundTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = match kind {
        SceneKind::AmbiguityShells => Texture::random(&mut rng, &[(1.0, 0.18)]),
        _ => Texture::random(&mut rng, &[(1.5, 0.18), (4.0, 0.08)]),
    };
    let shell = |r: f64, o: f64| Shell { center: [0.0; 3], radius: r, opacity: o };
    let (shells, hole, plate) = match kind {
        SceneKind::OpaqueSphere => (vec![shell(1.0, 1.0)], None, None),
        SceneKind::AmbiguityShells => (vec![shell(1.0, params.outer_opacity), shell(0.6, 1.0)], None, None),
        SceneKind::HoledSphere => (
            vec![shell(1.0, 1.0)],
            Some(Hole { axis: [1.0, 0.0, 0.0], cos_half_angle: 0.8 }),
            None,
        ),
        SceneKind::ThinPlane => (vec![], None, Some(Plate { center: [0.0; 3], normal: [1.0, 0.0, 0.0], half_size: 0.9 })),
    };
    GroundTruth { kind, shells, hole, plate, texture, interior_shade: 0.6 }
}

/// Renders a dataset of the requested scene. Pixel values are quantized to 16 bits
/// so that saving and reloading is lossless.
pub fn synth_scene(kind: SceneKind, params: &SynthParams, seed: u64) -> Result<(Dataset, GroundTruth)> {
    if params.views == 0 || params.width == 0 || params.height == 0 {
        return Err(Error::InvalidParameter("views and resolution must be positive".into()));
    }
    if !(params.outer_opacity > 0.0 && params.outer_opacity <= 1.0) {
        return Err(Error::InvalidParameter("outer_opacity must lie in (0, 1]".into()));
    }
    let gt = ground_truth(kind, params, seed);
    let cams = ring_cameras(params)?;
    let views = cams
        .into_iter()
        .enumerate()
        .map(|(i, camera)| {
            let (w, h) = (params.width as usize, params.height as usize);
            let mut image = ColorImage::new(w, h);
            let mut mask = ScalarMap::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    let (o, d) = camera.pixel_ray(x as u32, y as u32);
                    let (c, hit) = gt.trace(&o, &d);
                    image.set(x, y, c.map(quantize16));
                    mask.set(x, y, if hit { 1.0 } else { 0.0 });
                }
            }
            View { name: format!("view_{i:03}"), camera, image, mask, split: split_for_index(i) }
        })
        .collect();
    Ok((Dataset::new(views)?, gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse() {
        for k in SceneKind::ALL {
            assert_eq!(k.name().parse::<SceneKind>().unwrap(), k);
        }
        assert!("cube".parse::<SceneKind>().is_err());
    }

    #[test]
    fn opaque_sphere_mask_is_the_analytic_silhouette() {
        let p = SynthParams { views: 4, width: 24, height: 24, ..Default::default() };
        let (ds, _) = synth_scene(SceneKind::OpaqueSphere, &p, 1).unwrap();
        for v in &ds.views {
            for y in 0..24 {
                for x in 0..24 {
                    let (o, d) = v.camera.pixel_ray(x, y);
                    let b = d.dot(&o);
                    let hit = b * b - (o.norm_squared() - 1.0) >= 0.0 && -b > 0.0;
                    assert_eq!(v.mask.get(x as usize, y as usize) == 1.0, hit);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        let p = SynthParams { views: 3, width: 16, height: 16, ..Default::default() };
        let (a, ga) = synth_scene(SceneKind::HoledSphere, &p, 9).unwrap();
        let (b, gb) = synth_scene(SceneKind::HoledSphere, &p, 9).unwrap();
        assert_eq!(ga, gb);
        for (x, y) in a.views.iter().zip(&b.views) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
        let (c, _) = synth_scene(SceneKind::HoledSphere, &p, 10).unwrap();
        assert_ne!(a.views[0].image, c.views[0].image);
    }

    #[test]
    fn eight_views_split_seven_to_one() {
        let p = SynthParams { views: 8, width: 8, height: 8, ..Default::default() };
        let (ds, _) = synth_scene(SceneKind::ThinPlane, &p, 0).unwrap();
        assert_eq!(ds.train_indices().len(), 7);
        assert_eq!(ds.test_indices(), vec![7]);
    }

    #[test]
    fn shells_blend_front_to_back() {
        let p = SynthParams::default();
        let gt = ground_truth(SceneKind::AmbiguityShells, &p, 2);
        let o = Vector3::new(0.0, 0.0, 4.0);
        let d = -Vector3::z();
        let (c, hit) = gt.trace(&o, &d);
        assert!(hit);
        let front = gt.texture.eval(&Vector3::z());
        for k in 0..3 {
            let expect = 0.5 * front[k] + 0.5 * front[k];
            assert!((c[k] - expect).abs() < 1e-12);
        }
    }
}
