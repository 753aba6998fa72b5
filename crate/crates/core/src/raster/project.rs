//! EWA projection of 3D Gaussians onto the image plane.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::camera::Camera;
use crate::gaussian::{quat_norm, unit_quat_to_matrix, Gaussian3D, Role};

/// Splats at or in front of this camera depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Low-pass term added to the projected covariance diagonal, in px^2.
pub const COV2D_BLUR: f64 = 0.3;
/// Footprint support in standard deviations.
pub const FOOTPRINT_SIGMA: f64 = 3.0;
/// `-0.5 * FOOTPRINT_SIGMA^2`: exponent at the footprint boundary.
pub const FOOTPRINT_POWER: f64 = -0.5 * FOOTPRINT_SIGMA * FOOTPRINT_SIGMA;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SplatSource {
    pub role: Role,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub pixel_mean: Vector2<f64>,
    /// Projected covariance including the low-pass term.
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    /// Camera-space z of the mean.
    pub depth: f64,
    pub base_opacity: f64,
    pub color: [f64; 3],
    pub source: SplatSource,
    /// Pixel bounding box of the footprint, `[x0, x1) x [y0, y1)`, clipped to the image.
    pub bbox: [u32; 4],
}

/// Intermediate quantities of the projection, shared with the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct ProjectionTerms {
    pub t: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub cov_cam: Matrix3<f64>,
    pub rot: Matrix3<f64>,
    pub scale: Vector3<f64>,
    pub quat_unit: [f64; 4],
    pub quat_norm: f64,
}

pub(crate) fn projection_terms(g: &Gaussian3D, cam: &Camera) -> Option<ProjectionTerms> {
    let q = g.quaternion();
    let n = quat_norm(q);
    if !(n > 1e-12) || !n.is_finite() {
        return None;
    }
    let quat_unit = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let rot = unit_quat_to_matrix(quat_unit);
    let scale = g.scale();
    let m = rot * Matrix3::from_diagonal(&scale);
    let cov = m * m.transpose();
    let t = cam.to_camera(&g.mean());
    if t.z <= NEAR_PLANE {
        return None;
    }
    let k = &cam.intrinsics;
    let (iz, iz2) = (1.0 / t.z, 1.0 / (t.z * t.z));
    let jacobian = Matrix2x3::new(k.fx * iz, 0.0, -k.fx * t.x * iz2, 0.0, k.fy * iz, -k.fy * t.y * iz2);
    let cov_cam = cam.rotation * cov * cam.rotation.transpose();
    Some(ProjectionTerms { t, jacobian, cov_cam, rot, scale, quat_unit, quat_norm: n })
}

/// Projects a Gaussian; `None` means culled (behind the near plane, off-image,
/// or a degenerate footprint).
pub fn project(g: &Gaussian3D, cam: &Camera) -> Option<Splat2D> {
    project_with_source(g, cam, SplatSource { role: Role::Surface, index: 0 })
}

pub(crate) fn project_with_source(g: &Gaussian3D, cam: &Camera, source: SplatSource) -> Option<Splat2D> {
    let terms = projection_terms(g, cam)?;
    let j = &terms.jacobian;
    let cov2d = j * terms.cov_cam * j.transpose() + Matrix2::identity() * COV2D_BLUR;
    let det = cov2d[(0, 0)] * cov2d[(1, 1)] - cov2d[(0, 1)] * cov2d[(1, 0)];
    if !(det > 1e-12) || !det.is_finite() {
        return None;
    }
    let conic = Matrix2::new(cov2d[(1, 1)], -cov2d[(0, 1)], -cov2d[(1, 0)], cov2d[(0, 0)]) / det;
    let pixel_mean = cam.project_camera_point(&terms.t);

    let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = FOOTPRINT_SIGMA * lambda_max.sqrt();
    let (w, h) = (cam.width as f64, cam.height as f64);
    // A pixel is evaluated when its center lies inside the square footprint.
    let x0 = (pixel_mean.x - radius - 0.5).ceil().max(0.0);
    let x1 = (pixel_mean.x + radius - 0.5).floor().min(w - 1.0) + 1.0;
    let y0 = (pixel_mean.y - radius - 0.5).ceil().max(0.0);
    let y1 = (pixel_mean.y + radius - 0.5).floor().min(h - 1.0) + 1.0;
    if !(x0 < x1 && y0 < y1) {
        return None;
    }
    Some(Splat2D {
        pixel_mean,
        cov2d,
        conic,
        depth: terms.t.z,
        base_opacity: g.opacity(),
        color: g.color(),
        source,
        bbox: [x0 as u32, x1 as u32, y0 as u32, y1 as u32],
    })
}

/// Normalized falloff: `exp(power)` minus its tangent at the footprint boundary,
/// rescaled to 1 at the center. Value and slope vanish at the boundary, so the
/// render is continuously differentiable in the parameters.
#[inline]
pub(crate) fn falloff(power: f64) -> f64 {
    if power < FOOTPRINT_POWER {
        0.0
    } else {
        (power.exp() - EDGE * (1.0 + power - FOOTPRINT_POWER)) / FALLOFF_NORM
    }
}

/// d falloff / d power inside the footprint.
#[inline]
pub(crate) fn falloff_slope(power: f64) -> f64 {
    if power < FOOTPRINT_POWER {
        0.0
    } else {
        (power.exp() - EDGE) / FALLOFF_NORM
    }
}

/// `exp(FOOTPRINT_POWER)`.
const EDGE: f64 = 0.011_108_996_538_242_306;
/// Unnormalized falloff at the center.
const FALLOFF_NORM: f64 = 1.0 - EDGE * (1.0 - FOOTPRINT_POWER);

impl Splat2D {
    /// Exponent `-0.5 d^T conic d` at image point `p`.
    #[inline]
    pub fn power_at(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.pixel_mean.x;
        let dy = py - self.pixel_mean.y;
        -0.5 * (self.conic[(0, 0)] * dx * dx + 2.0 * self.conic[(0, 1)] * dx * dy + self.conic[(1, 1)] * dy * dy)
    }

    /// Effective opacity at image point `p`.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> f64 {
        self.base_opacity * falloff(self.power_at(px, py))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use approx::assert_relative_eq;

    fn axis_camera() -> Camera {
        Camera::new(
            Intrinsics { fx: 100.0, fy: 100.0, cx: 32.0, cy: 32.0 },
            64,
            64,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 0.01, 0.5, [1.0, 0.0, 0.0]);
        let s = project(&g, &axis_camera()).unwrap();
        assert_relative_eq!(s.pixel_mean, Vector2::new(32.0, 32.0), epsilon = 1e-9);
        assert_relative_eq!(s.depth, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn behind_camera_is_culled() {
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -1.0), 0.01, 0.5, [1.0, 0.0, 0.0]);
        assert!(project(&g, &axis_camera()).is_none());
    }

    #[test]
    fn off_image_is_culled() {
        let g = Gaussian3D::isotropic(Vector3::new(5.0, 0.0, 1.0), 0.01, 0.5, [1.0, 0.0, 0.0]);
        assert!(project(&g, &axis_camera()).is_none());
    }

    /// Finite-difference Jacobian of the pinhole map, pushed through `sigma^2 I`.
    #[test]
    fn isotropic_footprint_matches_finite_difference_jacobian() {
        let cam = axis_camera();
        let (sigma, d) = (0.02, 1.5);
        let mean = Vector3::new(0.0, 0.0, d);
        let h = 1e-6;
        let mut jac = Matrix2x3::zeros();
        for k in 0..3 {
            let mut p = mean;
            let mut m = mean;
            p[k] += h;
            m[k] -= h;
            let col = (cam.project_camera_point(&p) - cam.project_camera_point(&m)) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let oracle = jac * Matrix3::identity() * (sigma * sigma) * jac.transpose();
        let expected = (100.0 * sigma / d).powi(2);
        assert_relative_eq!(oracle[(0, 0)], expected, max_relative = 1e-6);
        assert_relative_eq!(oracle[(0, 1)], 0.0, epsilon = 1e-9);

        let g = Gaussian3D::isotropic(mean, sigma, 0.5, [0.0; 3]);
        let s = project(&g, &cam).unwrap();
        let cov = s.cov2d - Matrix2::identity() * COV2D_BLUR;
        assert_relative_eq!(cov[(0, 0)], oracle[(0, 0)], max_relative = 1e-5);
        assert_relative_eq!(cov[(1, 1)], oracle[(1, 1)], max_relative = 1e-5);
        assert_relative_eq!(cov[(0, 1)], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn falloff_is_one_at_center_and_flat_at_edge() {
        assert_relative_eq!(falloff(0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(falloff(FOOTPRINT_POWER), 0.0, epsilon = 1e-15);
        assert_eq!(falloff(FOOTPRINT_POWER - 1e-9), 0.0);
        assert_relative_eq!(falloff_slope(FOOTPRINT_POWER), 0.0, epsilon = 1e-15);
        let h = 1e-6;
        for p in [-4.0, -2.0, -0.5] {
            let fd = (falloff(p + h) - falloff(p - h)) / (2.0 * h);
            assert_relative_eq!(falloff_slope(p), fd, epsilon = 1e-8);
        }
    }
}
