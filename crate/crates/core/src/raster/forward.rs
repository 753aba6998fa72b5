//! Front-to-back alpha compositing of depth-sorted splats.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianSet, Role};
use crate::image::{ColorImage, ScalarMap};
use crate::raster::project::{falloff, project_with_source, Splat2D, SplatSource};

/// Blending stops once transmittance falls below this value.
pub const TRANSMITTANCE_CUTOFF: f64 = 1e-4;
pub const TILE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthMode {
    /// Blend-weighted depth normalized by alpha (`+inf` where alpha is zero).
    Blended,
    /// Depth of the first splat at which accumulated opacity reaches the threshold.
    Crossing(f64),
}

#[derive(Clone, Debug)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Keep the per-pixel blend lists (needed for backward and decomposition).
    pub keep_record: bool,
    /// Accumulate the blend weight contributed by noise splats.
    pub noise_channel: bool,
    pub depth: Option<DepthMode>,
    pub early_stop: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { background: [0.0; 3], keep_record: false, noise_channel: false, depth: None, early_stop: true }
    }
}

impl RenderOptions {
    pub fn with_record(mut self) -> Self {
        self.keep_record = true;
        self
    }

    pub fn with_background(mut self, background: [f64; 3]) -> Self {
        self.background = background;
        self
    }

    pub fn with_noise_channel(mut self) -> Self {
        self.noise_channel = true;
        self
    }
}

/// One blended splat at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendEntry {
    /// Index into [`BlendRecord::splats`].
    pub splat: u32,
    /// Effective opacity after the 2D falloff.
    pub alpha: f64,
    /// Transmittance accumulated before this splat.
    pub transmittance: f64,
}

#[derive(Clone, Debug)]
pub struct BlendRecord {
    /// Visible splats in blending order.
    pub splats: Vec<Splat2D>,
    pub offsets: Vec<usize>,
    pub entries: Vec<BlendEntry>,
    pub background: [f64; 3],
    pub camera: Camera,
    pub surface_fingerprint: u64,
    pub noise_fingerprint: Option<u64>,
}

impl BlendRecord {
    pub fn pixel_entries(&self, x: usize, y: usize) -> &[BlendEntry] {
        let p = y * self.camera.width as usize + x;
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Blend terms at a pixel with colors resolved.
    pub fn pixel_terms(&self, x: usize, y: usize) -> PixelTerms {
        let entries = self.pixel_entries(x, y);
        let terms: Vec<BlendTerm> = entries
            .iter()
            .map(|e| {
                let s = &self.splats[e.splat as usize];
                BlendTerm { alpha: e.alpha, transmittance: e.transmittance, color: s.color, depth: s.depth, source: s.source }
            })
            .collect();
        let final_transmittance = terms.last().map_or(1.0, |t| t.transmittance * (1.0 - t.alpha));
        PixelTerms { terms, final_transmittance, background: self.background }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendTerm {
    pub alpha: f64,
    pub transmittance: f64,
    pub color: [f64; 3],
    pub depth: f64,
    pub source: SplatSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelTerms {
    pub terms: Vec<BlendTerm>,
    pub final_transmittance: f64,
    pub background: [f64; 3],
}

impl PixelTerms {
    /// Direct evaluation of the compositing sum from the stored terms.
    pub fn composite(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for t in &self.terms {
            for k in 0..3 {
                c[k] += t.alpha * t.color[k] * t.transmittance;
            }
        }
        for k in 0..3 {
            c[k] += self.final_transmittance * self.background[k];
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Composited color, unclamped.
    pub color: ColorImage,
    /// `1 - final transmittance`.
    pub alpha: ScalarMap,
    pub depth: Option<ScalarMap>,
    /// Sum of blend weights of noise splats.
    pub noise_weight: Option<ScalarMap>,
    pub record: Option<BlendRecord>,
}

impl RenderOutput {
    pub fn color_clamped(&self) -> ColorImage {
        self.color.clamped()
    }
}

/// Projects and depth-sorts every Gaussian of both sets. Ties in depth fall
/// back to the source order (surface before noise, then index).
pub fn project_scene(surface: &GaussianSet, noise: Option<&GaussianSet>, cam: &Camera) -> Vec<Splat2D> {
    let sets = std::iter::once(surface).chain(noise);
    let mut splats: Vec<Splat2D> = sets
        .flat_map(|set| {
            let role = set.role;
            set.gaussians
                .iter()
                .enumerate()
                .filter_map(move |(index, g)| project_with_source(g, cam, SplatSource { role, index }))
        })
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(role_rank(a.source.role).cmp(&role_rank(b.source.role)))
            .then(a.source.index.cmp(&b.source.index))
    });
    splats
}

fn role_rank(role: Role) -> u8 {
    match role {
        Role::Surface => 0,
        Role::Noise => 1,
    }
}

/// Per-tile lists of splat indices, in blending order.
pub(crate) fn bin_tiles(splats: &[Splat2D], width: u32, height: u32) -> (u32, u32, Vec<Vec<u32>>) {
    let tx = width.div_ceil(TILE);
    let ty = height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); (tx * ty) as usize];
    for (i, s) in splats.iter().enumerate() {
        let [x0, x1, y0, y1] = s.bbox;
        for by in y0 / TILE..=(y1 - 1) / TILE {
            for bx in x0 / TILE..=(x1 - 1) / TILE {
                tiles[(by * tx + bx) as usize].push(i as u32);
            }
        }
    }
    (tx, ty, tiles)
}

struct TileResult {
    color: Vec<[f64; 3]>,
    trans: Vec<f64>,
    depth: Vec<f64>,
    noise: Vec<f64>,
    counts: Vec<usize>,
    entries: Vec<BlendEntry>,
}

/// Composites a surface set and an optional noise set from one camera.
pub fn render(surface: &GaussianSet, noise: Option<&GaussianSet>, cam: &Camera, opts: &RenderOptions) -> RenderOutput {
    let splats = project_scene(surface, noise, cam);
    let (w, h) = (cam.width, cam.height);
    let (tx, _ty, tiles) = bin_tiles(&splats, w, h);

    let results: Vec<TileResult> = tiles
        .par_iter()
        .enumerate()
        .map(|(t, list)| render_tile(t as u32, tx, w, h, list, &splats, opts))
        .collect();

    let (wu, hu) = (w as usize, h as usize);
    let mut color = ColorImage::new(wu, hu);
    let mut alpha = ScalarMap::new(wu, hu);
    let mut depth = opts.depth.map(|_| ScalarMap::new(wu, hu));
    let mut noise_weight = opts.noise_channel.then(|| ScalarMap::new(wu, hu));
    let mut counts = vec![0usize; if opts.keep_record { wu * hu } else { 0 }];
    let mut tile_entries = Vec::with_capacity(results.len());

    for (t, r) in results.into_iter().enumerate() {
        let (bx, by) = (t as u32 % tx, t as u32 / tx);
        let mut k = 0;
        for y in by * TILE..((by + 1) * TILE).min(h) {
            for x in bx * TILE..((bx + 1) * TILE).min(w) {
                let (xu, yu) = (x as usize, y as usize);
                color.set(xu, yu, r.color[k]);
                alpha.set(xu, yu, 1.0 - r.trans[k]);
                if let Some(d) = depth.as_mut() {
                    d.set(xu, yu, r.depth[k]);
                }
                if let Some(n) = noise_weight.as_mut() {
                    n.set(xu, yu, r.noise[k]);
                }
                if opts.keep_record {
                    counts[yu * wu + xu] = r.counts[k];
                }
                k += 1;
            }
        }
        tile_entries.push((r.counts, r.entries));
    }

    let record = opts.keep_record.then(|| {
        // Flatten to pixel-major order.
        let mut offsets = vec![0usize; wu * hu + 1];
        for p in 0..wu * hu {
            offsets[p + 1] = offsets[p] + counts[p];
        }
        let mut entries = vec![BlendEntry { splat: 0, alpha: 0.0, transmittance: 0.0 }; offsets[wu * hu]];
        for (t, (tile_counts, list)) in tile_entries.iter().enumerate() {
            let (bx, by) = (t as u32 % tx, t as u32 / tx);
            let (mut k, mut src) = (0, 0);
            for y in by * TILE..((by + 1) * TILE).min(h) {
                for x in bx * TILE..((bx + 1) * TILE).min(w) {
                    let p = y as usize * wu + x as usize;
                    let n = tile_counts[k];
                    entries[offsets[p]..offsets[p] + n].copy_from_slice(&list[src..src + n]);
                    src += n;
                    k += 1;
                }
            }
        }
        BlendRecord {
            splats,
            offsets,
            entries,
            background: opts.background,
            camera: cam.clone(),
            surface_fingerprint: surface.fingerprint(),
            noise_fingerprint: noise.map(GaussianSet::fingerprint),
        }
    });

    RenderOutput { width: wu, height: hu, color, alpha, depth, noise_weight, record }
}

fn render_tile(
    t: u32,
    tx: u32,
    w: u32,
    h: u32,
    list: &[u32],
    splats: &[Splat2D],
    opts: &RenderOptions,
) -> TileResult {
    let (bx, by) = (t % tx, t / tx);
    let (x0, x1) = (bx * TILE, ((bx + 1) * TILE).min(w));
    let (y0, y1) = (by * TILE, ((by + 1) * TILE).min(h));
    let n = ((x1 - x0) * (y1 - y0)) as usize;
    let mut out = TileResult {
        color: Vec::with_capacity(n),
        trans: Vec::with_capacity(n),
        depth: Vec::with_capacity(if opts.depth.is_some() { n } else { 0 }),
        noise: Vec::with_capacity(if opts.noise_channel { n } else { 0 }),
        counts: Vec::with_capacity(if opts.keep_record { n } else { 0 }),
        entries: Vec::new(),
    };
    let bg = opts.background;
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut trans = 1.0;
            let mut c = [0.0; 3];
            let mut noise_w = 0.0;
            let mut depth_acc = 0.0;
            let mut crossing = f64::INFINITY;
            let mut count = 0;
            for &si in list {
                let s = &splats[si as usize];
                let [sx0, sx1, sy0, sy1] = s.bbox;
                if x < sx0 || x >= sx1 || y < sy0 || y >= sy1 {
                    continue;
                }
                let alpha = s.base_opacity * falloff(s.power_at(px, py));
                if alpha <= 0.0 {
                    continue;
                }
                let weight = alpha * trans;
                for k in 0..3 {
                    c[k] += weight * s.color[k];
                }
                if opts.noise_channel && s.source.role == Role::Noise {
                    noise_w += weight;
                }
                match opts.depth {
                    Some(DepthMode::Blended) => depth_acc += weight * s.depth,
                    Some(DepthMode::Crossing(tau)) => {
                        if crossing.is_infinite() && 1.0 - trans * (1.0 - alpha) >= tau {
                            crossing = s.depth;
                        }
                    }
                    None => {}
                }
                if opts.keep_record {
                    out.entries.push(BlendEntry { splat: si, alpha, transmittance: trans });
                    count += 1;
                }
                trans *= 1.0 - alpha;
                if opts.early_stop && trans < TRANSMITTANCE_CUTOFF {
                    break;
                }
            }
            for k in 0..3 {
                c[k] += trans * bg[k];
            }
            out.color.push(c);
            out.trans.push(trans);
            match opts.depth {
                Some(DepthMode::Blended) => {
                    let a = 1.0 - trans;
                    out.depth.push(if a > 0.0 { depth_acc / a } else { f64::INFINITY });
                }
                Some(DepthMode::Crossing(_)) => out.depth.push(crossing),
                None => {}
            }
            if opts.noise_channel {
                out.noise.push(noise_w);
            }
            if opts.keep_record {
                out.counts.push(count);
            }
        }
    }
    out
}

/// Per-pixel depth at which the surface set's accumulated opacity first reaches
/// `tau`; `+inf` where it never does.
pub fn surface_depth_map(surface: &GaussianSet, cam: &Camera, tau: f64) -> Result<ScalarMap> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("crossing threshold {tau} outside (0, 1)")));
    }
    let opts = RenderOptions { depth: Some(DepthMode::Crossing(tau)), ..Default::default() };
    Ok(render(surface, None, cam, &opts).depth.expect("depth requested"))
}

/// Split of a pixel's color at the first surface splat `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    /// Contribution of the splats in front of `s`.
    pub earlier: [f64; 3],
    /// `alpha_s c_s` times the transmittance in front of `s`.
    pub front: [f64; 3],
    /// Everything behind `s`, background included.
    pub leakage: [f64; 3],
}

pub fn decompose_pixel(pixel: &PixelTerms, s: usize) -> Result<Decomposition> {
    if pixel.terms.is_empty() {
        return Err(Error::InvalidParameter("cannot decompose an empty blend record".into()));
    }
    if s >= pixel.terms.len() {
        return Err(Error::InvalidParameter(format!(
            "surface index {s} outside record of length {}",
            pixel.terms.len()
        )));
    }
    let mut d = Decomposition { earlier: [0.0; 3], front: [0.0; 3], leakage: [0.0; 3] };
    for (i, t) in pixel.terms.iter().enumerate() {
        let target = match i.cmp(&s) {
            std::cmp::Ordering::Less => &mut d.earlier,
            std::cmp::Ordering::Equal => &mut d.front,
            std::cmp::Ordering::Greater => &mut d.leakage,
        };
        for k in 0..3 {
            target[k] += t.alpha * t.color[k] * t.transmittance;
        }
    }
    for k in 0..3 {
        d.leakage[k] += pixel.final_transmittance * pixel.background[k];
    }
    Ok(d)
}
