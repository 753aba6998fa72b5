//! Voxel occupancy over a padded hull bounding box.

use bitvec::prelude::*;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::ngs::hull::ConvexHull;

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    /// Minimum corner of voxel (0, 0, 0).
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub occupied: BitVec,
    /// Index into the owning noise set of the point injected in each voxel.
    pub point_index: Vec<Option<u32>>,
}

impl OccupancyGrid {
    pub fn empty(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("voxel size {voxel_size} must be positive")));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(OccupancyGrid { origin, voxel_size, dims, occupied: bitvec![0; n], point_index: vec![None; n] })
    }

    /// Grid over the hull's bounding box padded by one voxel per side, with
    /// `resolution` voxels along the longest extent. A voxel is occupied iff
    /// its center lies inside the hull.
    pub fn from_hull(hull: &ConvexHull, resolution: u32) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!("voxel resolution {resolution} must be at least 2")));
        }
        let (lo, hi) = hull.aabb();
        let extent = hi - lo;
        Self::from_hull_with_voxel_size(hull, extent.max() / resolution as f64)
    }

    pub fn from_hull_with_voxel_size(hull: &ConvexHull, voxel_size: f64) -> Result<Self> {
        let (lo, hi) = hull.aabb();
        let extent = hi - lo;
        let cells = |e: f64| ((e / voxel_size) * (1.0 - 1e-12)).ceil().max(1.0) as usize + 2;
        let dims = [cells(extent.x), cells(extent.y), cells(extent.z)];
        let mut grid = Self::empty(lo - Vector3::repeat(voxel_size), voxel_size, dims)?;
        for i in 0..grid.len() {
            let c = grid.center(grid.coords(i));
            if hull.contains(&c) {
                grid.occupied.set(i, true);
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.count_ones()
    }

    pub fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        [x, y, i / (self.dims[0] * self.dims[1])]
    }

    pub fn center(&self, [x, y, z]: [usize; 3]) -> Vector3<f64> {
        self.origin + Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let q = (p - self.origin) / self.voxel_size;
        let mut out = [0; 3];
        for k in 0..3 {
            if !(q[k] >= 0.0) || q[k] >= self.dims[k] as f64 {
                return None;
            }
            out[k] = q[k] as usize;
        }
        Some(out)
    }

    pub fn is_occupied(&self, v: [usize; 3]) -> bool {
        self.occupied[self.index(v)]
    }

    pub fn occupied_voxels(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.occupied.iter_ones().map(|i| self.coords(i))
    }

    /// Binary erosion with the 6-connected structuring element, repeated.
    /// Voxels beyond the grid count as empty.
    pub fn erode(&self, iterations: usize) -> OccupancyGrid {
        let mut cur = self.occupied.clone();
        let [nx, ny, nz] = self.dims;
        for _ in 0..iterations {
            let mut next = bitvec![0; cur.len()];
            for i in cur.iter_ones() {
                let [x, y, z] = self.coords(i);
                let inside = x > 0 && y > 0 && z > 0 && x + 1 < nx && y + 1 < ny && z + 1 < nz;
                if inside
                    && cur[i - 1]
                    && cur[i + 1]
                    && cur[i - nx]
                    && cur[i + nx]
                    && cur[i - nx * ny]
                    && cur[i + nx * ny]
                {
                    next.set(i, true);
                }
            }
            cur = next;
        }
        let mut out = self.clone();
        out.occupied = cur;
        for (i, p) in out.point_index.iter_mut().enumerate() {
            if !out.occupied[i] {
                *p = None;
            }
        }
        out
    }

    pub fn clear_points(&mut self) {
        self.point_index.iter_mut().for_each(|p| *p = None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_hull() -> ConvexHull {
        let pts: Vec<_> = (0..8)
            .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        ConvexHull::new(&pts).unwrap()
    }

    fn brute_inside(hull: &ConvexHull, p: &Vector3<f64>) -> bool {
        hull.faces.iter().all(|&[a, b, c]| {
            let (va, vb, vc) = (hull.vertices[a], hull.vertices[b], hull.vertices[c]);
            let n = (vb - va).cross(&(vc - va));
            n.dot(&(p - va)) <= hull.tolerance * n.norm()
        })
    }

    #[test]
    fn unit_cube_at_resolution_four() {
        let g = OccupancyGrid::from_hull(&cube_hull(), 4).unwrap();
        assert_eq!(g.dims, [6, 6, 6]);
        assert!((g.voxel_size - 0.25).abs() < 1e-15);
        assert_eq!(g.occupied_count(), 64);
        for v in g.occupied_voxels() {
            assert!(v.iter().all(|&c| (1..=4).contains(&c)));
        }
    }

    #[test]
    fn tetrahedron_matches_brute_force() {
        let pts = [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()];
        let hull = ConvexHull::new(&pts).unwrap();
        for res in [2, 3, 7, 16] {
            let g = OccupancyGrid::from_hull(&hull, res).unwrap();
            for i in 0..g.len() {
                assert_eq!(g.occupied[i], brute_inside(&hull, &g.center(g.coords(i))));
            }
        }
        assert!(OccupancyGrid::from_hull(&hull, 1).is_err());
    }

    #[test]
    fn hull_smaller_than_a_voxel() {
        let tiny: Vec<_> = [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()].iter().map(|p| p * 0.01).collect();
        let hull = ConvexHull::new(&tiny).unwrap();
        let g = OccupancyGrid::from_hull_with_voxel_size(&hull, 1.0).unwrap();
        assert_eq!(g.occupied_count(), 0);
        let around: Vec<_> = tiny.iter().map(|p| p - Vector3::repeat(0.004)).collect();
        let hull = ConvexHull::new(&around).unwrap();
        let g = OccupancyGrid::from_hull_with_voxel_size(&hull, 0.012).unwrap();
        let expect = (0..g.len()).filter(|&i| brute_inside(&hull, &g.center(g.coords(i)))).count();
        assert!(expect <= 1);
        assert_eq!(g.occupied_count(), expect);
    }

    #[test]
    fn erosion_examples() {
        let mut g = OccupancyGrid::empty(Vector3::zeros(), 1.0, [5, 5, 5]).unwrap();
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    let i = g.index([x, y, z]);
                    g.occupied.set(i, true);
                }
            }
        }
        let e = g.erode(1);
        assert_eq!(e.occupied_voxels().collect::<Vec<_>>(), vec![[2, 2, 2]]);
        assert_eq!(g.erode(0), g);
        assert_eq!(e.erode(1).occupied_count(), 0);

        let mut single = OccupancyGrid::empty(Vector3::zeros(), 1.0, [3, 3, 3]).unwrap();
        single.occupied.set(13, true);
        assert_eq!(single.erode(1).occupied_count(), 0);
    }

    #[test]
    fn erosion_is_monotone() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut g = OccupancyGrid::empty(Vector3::zeros(), 1.0, [8, 7, 6]).unwrap();
            for i in 0..g.len() {
                g.occupied.set(i, rng.random_bool(0.8));
            }
            let e = g.erode(1);
            assert!(e.occupied.iter_ones().all(|i| g.occupied[i]));
        }
    }
}
