//! Removal of noise candidates that a view would see in front of, or outside, the surface.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::dataset::View;
use crate::error::{Error, Result};
use crate::gaussian::GaussianSet;
use crate::image::ScalarMap;
use crate::raster::surface_depth_map;

/// A camera, its foreground mask and the surface depth map seen through it.
#[derive(Clone, Debug)]
pub struct DepthView {
    pub camera: Camera,
    pub mask: ScalarMap,
    /// Depth at which surface opacity first reaches the crossing threshold (`+inf` if never).
    pub depth: ScalarMap,
}

impl DepthView {
    pub fn new(surface: &GaussianSet, camera: &Camera, mask: &ScalarMap, tau: f64) -> Result<Self> {
        if mask.width != camera.width as usize || mask.height != camera.height as usize {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs camera {}x{}",
                mask.width, mask.height, camera.width, camera.height
            )));
        }
        Ok(DepthView { camera: camera.clone(), mask: mask.clone(), depth: surface_depth_map(surface, camera, tau)? })
    }

    /// Whether this view removes a point at `p`. Points that do not project
    /// onto the image are left alone.
    pub fn removes(&self, p: &Vector3<f64>, margin: f64) -> bool {
        match self.camera.pixel_of(p) {
            None => false,
            Some((x, y, z)) => {
                let (x, y) = (x as usize, y as usize);
                self.mask.get(x, y) < 0.5 || z < self.depth.get(x, y) + margin
            }
        }
    }
}

pub fn depth_views<'a>(
    surface: &GaussianSet,
    views: impl IntoIterator<Item = &'a View>,
    tau: f64,
) -> Result<Vec<DepthView>> {
    let views: Vec<&View> = views.into_iter().collect();
    views.par_iter().map(|v| DepthView::new(surface, &v.camera, &v.mask, tau)).collect()
}

/// `true` for points that survive every view.
pub fn keep_mask(points: &[Vector3<f64>], views: &[DepthView], margin: f64) -> Result<Vec<bool>> {
    if views.is_empty() {
        return Err(Error::InvalidParameter("depth pruning needs at least one view".into()));
    }
    let removed = views
        .par_iter()
        .map(|v| points.iter().map(|p| v.removes(p, margin)).collect::<Vec<bool>>())
        .reduce(|| vec![false; points.len()], |a, b| a.iter().zip(&b).map(|(x, y)| *x || *y).collect());
    Ok(removed.into_iter().map(|r| !r).collect())
}

/// Drops noise Gaussians whose means are removed by any view.
pub fn depth_prune(noise: &GaussianSet, views: &[DepthView], margin: f64) -> Result<GaussianSet> {
    let keep = keep_mask(&noise.means(), views, margin)?;
    let mut out = noise.clone();
    out.retain_by(&keep);
    Ok(out)
}
