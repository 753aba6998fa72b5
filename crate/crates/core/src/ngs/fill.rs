//! Coarse-to-fine noise injection into the carved hull volume.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::{FreezeFlags, Gaussian3D, GaussianSet, Role, VoxelRef};
use crate::ngs::grid::OccupancyGrid;
use crate::ngs::hull::ConvexHull;
use crate::ngs::prune::{keep_mask, DepthView};

pub const RGBCMY: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
];

/// Stream reserved for colors drawn at injection time.
const INJECT_STREAM: u64 = u64::MAX;

fn color_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Recolors every noise Gaussian with a uniform RGBCMY draw determined by `(seed, iteration)`.
pub fn randomize_colors(noise: &mut GaussianSet, seed: u64, iteration: u64) {
    let mut rng = color_rng(seed, iteration);
    for g in &mut noise.gaussians {
        g.set_color(RGBCMY[rng.random_range(0..6)]);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FillConfig {
    /// Voxels along the longest hull extent, ascending.
    pub levels: Vec<u32>,
    pub erosion_iterations: usize,
    pub initial_opacity: f64,
    /// Depth slack for carving; `None` uses the finest voxel size.
    pub margin: Option<f64>,
    pub carve: bool,
}

impl Default for FillConfig {
    fn default() -> Self {
        FillConfig { levels: vec![16, 32, 64], erosion_iterations: 1, initial_opacity: 0.95, margin: None, carve: true }
    }
}

impl FillConfig {
    pub fn from_train(cfg: &crate::config::TrainConfig) -> Self {
        FillConfig {
            levels: cfg.voxel_levels.clone(),
            erosion_iterations: if cfg.ablation.erosion { cfg.erosion_iterations } else { 0 },
            initial_opacity: cfg.noise_initial_opacity,
            margin: cfg.prune_margin,
            carve: cfg.ablation.pruning,
        }
    }
}

/// Noise Gaussians with the per-level grids they were injected into.
#[derive(Clone, Debug)]
pub struct Infill {
    pub noise: GaussianSet,
    pub grids: Vec<OccupancyGrid>,
    pub hull: ConvexHull,
}

impl Infill {
    /// Rebuilds every grid's `point_index` from the noise set's voxel references.
    pub fn resync(&mut self) {
        for g in &mut self.grids {
            g.clear_points();
        }
        for (i, r) in self.noise.voxel_refs.iter().enumerate() {
            let grid = &mut self.grids[r.level as usize];
            let idx = grid.index(r.voxel.map(|c| c as usize));
            grid.point_index[idx] = Some(i as u32);
        }
    }

    pub fn retain_by(&mut self, keep: &[bool]) {
        self.noise.retain_by(keep);
        self.resync();
    }
}

fn covered(center: &Vector3<f64>, coarser: &[OccupancyGrid]) -> bool {
    coarser.iter().any(|g| g.voxel_of(center).is_some_and(|v| g.point_index[g.index(v)].is_some()))
}

/// One isotropic noise Gaussian per occupied voxel whose center is not inside a
/// coarser voxel that already holds noise. `point_index` of `grid` is set to
/// indices within the returned set.
pub fn inject_noise(
    grid: &mut OccupancyGrid,
    coarser: &[OccupancyGrid],
    level: u32,
    initial_opacity: f64,
    rng: &mut ChaCha8Rng,
) -> GaussianSet {
    let mut set = GaussianSet::new(Role::Noise);
    let voxels: Vec<[usize; 3]> = grid.occupied_voxels().collect();
    for v in voxels {
        let c = grid.center(v);
        if covered(&c, coarser) {
            continue;
        }
        let color = RGBCMY[rng.random_range(0..6)];
        let idx = grid.index(v);
        grid.point_index[idx] = Some(set.len() as u32);
        set.gaussians.push(Gaussian3D::isotropic(c, grid.voxel_size / 2.0, initial_opacity, color));
        set.voxel_refs.push(VoxelRef { level, voxel: v.map(|c| c as u32) });
    }
    set
}

/// Hull, then per level: voxelize, carve by the depth test, erode, inject into uncovered voxels.
pub fn multiscale_fill(surface: &GaussianSet, views: &[DepthView], cfg: &FillConfig, seed: u64) -> Result<Infill> {
    if surface.len() < 4 {
        return Err(Error::Degenerate(format!("noise infill needs at least 4 surface Gaussians, got {}", surface.len())));
    }
    if cfg.levels.is_empty() || cfg.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("voxel levels {:?} must be non-empty and increasing", cfg.levels)));
    }
    let hull = ConvexHull::new(&surface.means())?;
    let (lo, hi) = hull.aabb();
    let finest = (hi - lo).max() / *cfg.levels.last().expect("non-empty") as f64;
    let margin = cfg.margin.unwrap_or(finest);
    let mut rng = color_rng(seed, INJECT_STREAM);

    let mut infill = Infill { noise: GaussianSet::new(Role::Noise), grids: Vec::new(), hull };
    for (li, &res) in cfg.levels.iter().enumerate() {
        let mut grid = OccupancyGrid::from_hull(&infill.hull, res)?;
        if cfg.carve {
            let voxels: Vec<usize> = grid.occupied.iter_ones().collect();
            let centers: Vec<Vector3<f64>> = voxels.iter().map(|&i| grid.center(grid.coords(i))).collect();
            let keep = keep_mask(&centers, views, margin)?;
            for (i, k) in voxels.into_iter().zip(keep) {
                if !k {
                    grid.occupied.set(i, false);
                }
            }
        }
        let mut grid = grid.erode(cfg.erosion_iterations);
        let mut added = inject_noise(&mut grid, &infill.grids, li as u32, cfg.initial_opacity, &mut rng);
        log::debug!("noise level {res}: {} occupied, {} injected", grid.occupied_count(), added.len());
        infill.grids.push(grid);
        infill.noise.gaussians.append(&mut added.gaussians);
        infill.noise.voxel_refs.append(&mut added.voxel_refs);
        infill.resync();
    }
    infill.noise.freeze = FreezeFlags::ALL;
    Ok(infill)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_are_rgbcmy_and_reproducible() {
        let mut a = GaussianSet::from_gaussians(
            Role::Noise,
            (0..50).map(|i| Gaussian3D::isotropic(Vector3::new(i as f64, 0.0, 0.0), 0.1, 0.9, [0.5; 3])).collect(),
        );
        let mut b = a.clone();
        randomize_colors(&mut a, 4, 17);
        randomize_colors(&mut b, 4, 17);
        assert_eq!(a.gaussians, b.gaussians);
        for g in &a.gaussians {
            let c = g.color();
            assert!(RGBCMY.iter().any(|r| (0..3).all(|k| (r[k] - c[k]).abs() < 1e-6)));
        }
        let mut c = a.clone();
        randomize_colors(&mut c, 4, 18);
        assert_ne!(a.gaussians, c.gaussians);
    }

    #[test]
    fn color_frequencies_are_uniform() {
        let mut set = GaussianSet::from_gaussians(
            Role::Noise,
            (0..600).map(|_| Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.9, [0.5; 3])).collect(),
        );
        let mut counts = [0usize; 6];
        for it in 0..100 {
            randomize_colors(&mut set, 11, it);
            for g in &set.gaussians {
                let c = g.color();
                let k = RGBCMY.iter().position(|r| (0..3).all(|j| (r[j] - c[j]).abs() < 1e-6)).unwrap();
                counts[k] += 1;
            }
        }
        let n: f64 = 60_000.0;
        let p = 1.0 / 6.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - n * p).powi(2) / (n * p)).sum();
        for &c in &counts {
            assert!((c as f64 - n * p).abs() < 3.0 * sigma, "{counts:?}");
        }
        // 5 degrees of freedom, p = 0.001
        assert!(chi2 < 20.52, "{chi2}");
    }

    fn solid_grid() -> OccupancyGrid {
        let mut g = OccupancyGrid::empty(Vector3::zeros(), 0.25, [4, 4, 4]).unwrap();
        g.occupied.fill(true);
        g
    }

    #[test]
    fn injection_counts() {
        let mut rng = color_rng(0, 0);
        let mut empty = OccupancyGrid::empty(Vector3::zeros(), 1.0, [3, 3, 3]).unwrap();
        assert!(inject_noise(&mut empty, &[], 0, 0.95, &mut rng).is_empty());

        let mut g = solid_grid();
        let set = inject_noise(&mut g, &[], 0, 0.95, &mut rng);
        assert_eq!(set.len(), 64);
        assert!(set.gaussians.iter().all(|x| (x.opacity() - 0.95).abs() < 1e-6));
        assert!(set.gaussians.iter().all(|x| (x.scale() - Vector3::repeat(0.125)).norm() < 1e-6));
        assert_eq!(g.point_index.iter().flatten().count(), 64);

        let mut fine = OccupancyGrid::empty(Vector3::zeros(), 0.125, [8, 8, 8]).unwrap();
        fine.occupied.fill(true);
        assert!(inject_noise(&mut fine, &[g], 1, 0.95, &mut rng).is_empty());
    }
}
