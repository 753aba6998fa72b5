//! Infill-based transparency audit: transmittance maps, SOS, and image metrics
//! with and without the infill present.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::dataset::View;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianSet, Role};
use crate::image::{ColorImage, ScalarMap};
use crate::losses::ssim;
use crate::ngs::hull::bounds;
use crate::raster::{render, RenderOptions};

pub const SOS_EPSILON: f64 = 1e-10;
pub const PSNR_CAP: f64 = 100.0;
pub const RED: [f64; 3] = [1.0, 0.0, 0.0];
pub const GREEN: [f64; 3] = [0.0, 1.0, 0.0];

pub fn recolor(set: &GaussianSet, rgb: [f64; 3]) -> GaussianSet {
    let mut out = set.clone();
    for g in &mut out.gaussians {
        g.set_color(rgb);
    }
    out
}

/// A surface asset with an inserted infill, roles kept apart.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub surface: GaussianSet,
    pub infill: GaussianSet,
}

impl Scene {
    pub fn render(&self, cam: &Camera, opts: &RenderOptions) -> crate::raster::RenderOutput {
        render(&self.surface, Some(&self.infill), cam, opts)
    }
}

/// Union of an asset trained elsewhere with an infill; parameters are untouched.
pub fn insert_infill(asset: &GaussianSet, infill: &GaussianSet) -> Scene {
    let mut surface = asset.clone();
    surface.role = Role::Surface;
    let mut noise = infill.clone();
    noise.role = Role::Noise;
    Scene { surface, infill: noise }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    Provided,
    RenderedAlpha,
    SurfaceCoverage,
}

/// Used when a view has no segmentation mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MaskFallback {
    #[default]
    RenderedAlpha,
    SurfaceCoverage,
}

#[derive(Clone, Debug)]
pub struct TransmittanceMap {
    pub t: ScalarMap,
    pub m: ScalarMap,
    pub source: MaskSource,
}

/// Renders the surface in solid red and the infill in solid green over black;
/// the green channel is the transmittance map. The green channel is read from
/// the renderer's per-pixel infill weight, which equals it exactly.
pub fn transmittance_map(
    surface: &GaussianSet,
    infill: &GaussianSet,
    cam: &Camera,
    mask: Option<&ScalarMap>,
    fallback: MaskFallback,
) -> Result<TransmittanceMap> {
    if !surface.is_empty() && !infill.is_empty() {
        let (slo, shi) = bounds(&surface.means());
        let (ilo, ihi) = bounds(&infill.means());
        if (0..3).any(|k| shi[k] < ilo[k] || ihi[k] < slo[k]) {
            log::warn!("surface and infill bounding boxes are disjoint; the assets may not share a frame");
        }
    }
    let out = render(surface, Some(infill), cam, &RenderOptions::default().with_noise_channel());
    let t = out.noise_weight.expect("noise channel requested");
    let (m, source) = match (mask, fallback) {
        (Some(m), _) => {
            if m.width != t.width || m.height != t.height {
                return Err(Error::DimensionMismatch(format!(
                    "mask {}x{} vs render {}x{}",
                    m.width, m.height, t.width, t.height
                )));
            }
            (m.clone(), MaskSource::Provided)
        }
        (None, MaskFallback::RenderedAlpha) => {
            (render(surface, None, cam, &RenderOptions::default()).alpha, MaskSource::RenderedAlpha)
        }
        (None, MaskFallback::SurfaceCoverage) => {
            let red = ScalarMap {
                width: t.width,
                height: t.height,
                data: out.alpha.data.iter().zip(&t.data).map(|(a, n)| a - n).collect(),
            };
            (red, MaskSource::SurfaceCoverage)
        }
    };
    log::debug!("transmittance mask source: {source:?}");
    Ok(TransmittanceMap { t, m, source })
}

/// `log(ratio + eps) / log(eps)` without clamping.
pub fn sos_raw(ratio: f64) -> f64 {
    (ratio + SOS_EPSILON).ln() / SOS_EPSILON.ln()
}

pub fn sos_from_ratio(ratio: f64) -> f64 {
    sos_raw(ratio).clamp(0.0, 1.0)
}

/// SOS of one view; `None` when the mask is empty.
pub fn sos_view(t: &ScalarMap, m: &ScalarMap) -> Result<Option<f64>> {
    if t.width != m.width || t.height != m.height {
        return Err(Error::DimensionMismatch("transmittance and mask maps differ in size".into()));
    }
    let sm = m.sum();
    if !(sm > 0.0) {
        return Ok(None);
    }
    let st: f64 = t.data.iter().zip(&m.data).map(|(t, m)| t * m).sum();
    Ok(Some(sos_from_ratio(st / sm)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosSummary {
    pub per_view: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

pub fn sos(maps: &[(ScalarMap, ScalarMap)]) -> Result<SosSummary> {
    let mut per_view = Vec::with_capacity(maps.len());
    for (i, (t, m)) in maps.iter().enumerate() {
        let s = sos_view(t, m)?;
        if s.is_none() {
            log::warn!("view {i} has an empty mask; skipped in SOS");
        }
        per_view.push(s);
    }
    let valid: Vec<f64> = per_view.iter().flatten().copied().collect();
    let mean = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok(SosSummary { per_view, mean })
}

/// PSNR over all channels of images in [0, 1], capped for identical inputs.
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.check_same_size(b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_star: f64,
    pub ssim_star: f64,
    pub sos: Option<f64>,
    pub mask_source: Option<MaskSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub views: Vec<ViewMetrics>,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_star: f64,
    pub ssim_star: f64,
    pub sos: Option<f64>,
    pub surface_gaussians: usize,
    pub infill_gaussians: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub background: [f64; 3],
    pub mask_fallback: MaskFallback,
    /// Ignore dataset masks and always use the fallback.
    pub ignore_masks: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Image metrics on the given views, plus starred metrics and SOS when an infill is present.
pub fn evaluate(
    surface: &GaussianSet,
    infill: Option<&GaussianSet>,
    views: &[&View],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if views.is_empty() {
        return Err(Error::Dataset("evaluation needs at least one view".into()));
    }
    let green = infill.map(|i| recolor(i, GREEN));
    let rows: Vec<ViewMetrics> = views
        .par_iter()
        .map(|v| -> Result<ViewMetrics> {
            let ro = RenderOptions::default().with_background(opts.background);
            let plain = render(surface, None, &v.camera, &ro).color_clamped();
            let psnr_v = psnr(&plain, &v.image)?;
            let ssim_v = ssim(&plain, &v.image)?;
            let (psnr_star, ssim_star, sos_v, src) = match (&green, infill) {
                (Some(g), Some(raw)) => {
                    let starred = render(surface, Some(g), &v.camera, &ro).color_clamped();
                    let mask = (!opts.ignore_masks).then_some(&v.mask);
                    let tm = transmittance_map(surface, raw, &v.camera, mask, opts.mask_fallback)?;
                    (psnr(&starred, &v.image)?, ssim(&starred, &v.image)?, sos_view(&tm.t, &tm.m)?, Some(tm.source))
                }
                _ => (psnr_v, ssim_v, None, None),
            };
            Ok(ViewMetrics {
                name: v.name.clone(),
                psnr: psnr_v,
                ssim: ssim_v,
                psnr_star,
                ssim_star,
                sos: sos_v,
                mask_source: src,
            })
        })
        .collect::<Result<_>>()?;
    let sos_vals: Vec<f64> = rows.iter().filter_map(|r| r.sos).collect();
    Ok(MetricsReport {
        psnr: mean(rows.iter().map(|r| r.psnr)),
        ssim: mean(rows.iter().map(|r| r.ssim)),
        psnr_star: mean(rows.iter().map(|r| r.psnr_star)),
        ssim_star: mean(rows.iter().map(|r| r.ssim_star)),
        sos: (!sos_vals.is_empty()).then(|| mean(sos_vals.iter().copied())),
        surface_gaussians: surface.len(),
        infill_gaussians: infill.map_or(0, GaussianSet::len),
        views: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sos_endpoints() {
        assert!((sos_from_ratio(0.0) - 1.0).abs() < 1e-12);
        assert_eq!(sos_from_ratio(1.0), 0.0);
        assert!(sos_raw(1.0).abs() < 1e-9);
        assert!((sos_from_ratio(0.01) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn sos_strictly_decreases() {
        let ratios: Vec<f64> = (0..200).map(|i| 10f64.powf(-12.0 + i as f64 * 0.06)).collect();
        for w in ratios.windows(2) {
            if w[1] < 1.0 {
                assert!(sos_raw(w[1]) < sos_raw(w[0]));
            }
        }
    }

    #[test]
    fn psnr_examples() {
        let a = ColorImage::filled(8, 8, [0.3, 0.4, 0.5]);
        let b = ColorImage::filled(8, 8, [0.4, 0.5, 0.6]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_views_are_skipped() {
        let t = ScalarMap::filled(4, 4, 0.5);
        let s = sos(&[(t.clone(), ScalarMap::new(4, 4)), (t.clone(), ScalarMap::filled(4, 4, 1.0))]).unwrap();
        assert_eq!(s.per_view[0], None);
        assert!((s.mean.unwrap() - sos_from_ratio(0.5)).abs() < 1e-15);
    }
}
