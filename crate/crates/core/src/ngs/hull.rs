//! 3D convex hull by quickhull.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Closed triangle mesh with outward unit normals. Face `i` is the plane
/// `normals[i] . x = offsets[i]`.
#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub offsets: Vec<f64>,
    /// Containment slack, proportional to the input bounding-box diagonal.
    pub tolerance: f64,
}

struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(pts: &[Vector3<f64>], v: [usize; 3]) -> Face {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let normal = n.normalize();
        Face { v, normal, offset: normal.dot(&pts[v[0]]), outside: Vec::new(), alive: true }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.v;
        [(a, b), (b, c), (c, a)]
    }
}

impl ConvexHull {
    pub fn new(points: &[Vector3<f64>]) -> Result<ConvexHull> {
        if points.len() < 4 {
            return Err(Error::Degenerate(format!("convex hull needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter("convex hull input contains non-finite coordinates".into()));
        }
        let (lo, hi) = bounds(points);
        let diag = (hi - lo).norm();
        let eps = 1e-10 * diag.max(f64::MIN_POSITIVE);
        let simplex = initial_simplex(points, eps)?;

        let mut faces: Vec<Face> = Vec::new();
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        let centroid = simplex.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / 4.0;
        for tri in [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]] {
            let mut v = tri.map(|k| simplex[k]);
            let f = Face::new(points, v);
            if f.distance(&centroid) > 0.0 {
                v.swap(1, 2);
            }
            add_face(&mut faces, &mut edge_owner, Face::new(points, v));
        }

        let in_simplex = |i: usize| simplex.contains(&i);
        for (i, p) in points.iter().enumerate() {
            if in_simplex(i) {
                continue;
            }
            if let Some(f) = faces.iter_mut().find(|f| f.distance(p) > eps) {
                f.outside.push(i);
            }
        }

        loop {
            let Some(fi) = faces.iter().position(|f| f.alive && !f.outside.is_empty()) else { break };
            let apex = *faces[fi]
                .outside
                .iter()
                .max_by(|&&a, &&b| faces[fi].distance(&points[a]).total_cmp(&faces[fi].distance(&points[b])))
                .expect("non-empty");
            let p = points[apex];

            // Faces visible from the apex, found by flood fill across shared edges.
            let mut visible = vec![fi];
            let mut seen = vec![false; faces.len()];
            seen[fi] = true;
            let mut k = 0;
            while k < visible.len() {
                let f = visible[k];
                for (a, b) in faces[f].edges() {
                    let n = edge_owner[&(b, a)];
                    if !seen[n] && faces[n].distance(&p) > eps {
                        seen[n] = true;
                        visible.push(n);
                    }
                }
                k += 1;
            }
            let mut horizon = Vec::new();
            for &f in &visible {
                for (a, b) in faces[f].edges() {
                    if !seen[edge_owner[&(b, a)]] {
                        horizon.push((a, b));
                    }
                }
            }

            let mut orphans = Vec::new();
            for &f in &visible {
                faces[f].alive = false;
                orphans.append(&mut faces[f].outside);
                for e in faces[f].edges() {
                    edge_owner.remove(&e);
                }
            }
            let first_new = faces.len();
            for (a, b) in horizon {
                add_face(&mut faces, &mut edge_owner, Face::new(points, [a, b, apex]));
            }
            for i in orphans {
                if i == apex {
                    continue;
                }
                let q = &points[i];
                if let Some(f) = faces[first_new..].iter_mut().find(|f| f.distance(q) > eps) {
                    f.outside.push(i);
                }
            }
        }

        // Compact to the vertices actually referenced.
        let mut remap = vec![usize::MAX; points.len()];
        let mut hull = ConvexHull {
            vertices: Vec::new(),
            faces: Vec::new(),
            normals: Vec::new(),
            offsets: Vec::new(),
            tolerance: 1e-7 * diag,
        };
        for f in faces.iter().filter(|f| f.alive) {
            let v = f.v.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = hull.vertices.len();
                    hull.vertices.push(points[i]);
                }
                remap[i]
            });
            hull.faces.push(v);
            hull.normals.push(f.normal);
            hull.offsets.push(f.offset);
        }
        Ok(hull)
    }

    /// Largest plane distance over all faces: negative inside, positive outside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, d)| n.dot(p) - d)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Inside or on the hull, up to `tolerance`.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.signed_distance(p) <= self.tolerance
    }

    /// Strictly inside every face plane.
    pub fn contains_strictly(&self, p: &Vector3<f64>) -> bool {
        self.signed_distance(p) < 0.0
    }

    pub fn volume(&self) -> f64 {
        let o = self.vertices[0];
        self.faces
            .iter()
            .map(|&[a, b, c]| (self.vertices[a] - o).dot(&(self.vertices[b] - o).cross(&(self.vertices[c] - o))) / 6.0)
            .sum()
    }

    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        bounds(&self.vertices)
    }
}

fn add_face(faces: &mut Vec<Face>, edge_owner: &mut HashMap<(usize, usize), usize>, f: Face) {
    let id = faces.len();
    for e in f.edges() {
        edge_owner.insert(e, id);
    }
    faces.push(f);
}

pub(crate) fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn initial_simplex(points: &[Vector3<f64>], eps: f64) -> Result<[usize; 4]> {
    let argmax = |f: &dyn Fn(&Vector3<f64>) -> f64| {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            let v = f(p);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    };
    // Most separated pair among the axis extremes.
    let mut extremes = Vec::new();
    for axis in 0..3 {
        extremes.push(argmax(&|p| -p[axis]).0);
        extremes.push(argmax(&|p| p[axis]).0);
    }
    let mut pair = (extremes[0], extremes[1], -1.0);
    for &a in &extremes {
        for &b in &extremes {
            let d = (points[a] - points[b]).norm();
            if d > pair.2 {
                pair = (a, b, d);
            }
        }
    }
    let (a, b, len) = pair;
    if len <= eps {
        return Err(Error::Degenerate("all hull input points coincide".into()));
    }
    let dir = (points[b] - points[a]) / len;
    let (c, line_dist) = argmax(&|p| {
        let w = p - points[a];
        (w - dir * w.dot(&dir)).norm()
    });
    if line_dist <= eps {
        return Err(Error::Degenerate("hull input points are collinear".into()));
    }
    let n = (points[b] - points[a]).cross(&(points[c] - points[a])).normalize();
    let (d, plane_dist) = argmax(&|p| n.dot(&(p - points[a])).abs());
    if plane_dist <= eps {
        return Err(Error::Degenerate("hull input points are coplanar".into()));
    }
    Ok([a, b, c, d])
}
