//! Trainable Gaussian primitives and typed collections of them.
//!
//! Parameters are stored in their unconstrained form, in `f32` to match the
//! on-disk layout: log-scales, an unnormalized `(w, x, y, z)` quaternion, an
//! opacity logit and a degree-0 spherical-harmonic color coefficient. All
//! derived quantities are computed in `f64`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree-0 real spherical harmonic constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn rgb_to_sh(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

pub fn sh_to_rgb(dc: f64) -> f64 {
    0.5 + SH_C0 * dc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3D {
    pub mean: [f32; 3],
    pub log_scale: [f32; 3],
    /// `(w, x, y, z)`, normalized on use.
    pub rotation: [f32; 4],
    pub opacity_logit: f32,
    pub sh_dc: [f32; 3],
}

impl Gaussian3D {
    pub fn new(mean: Vector3<f64>, scale: Vector3<f64>, rotation: [f64; 4], opacity: f64, color: [f64; 3]) -> Self {
        let mut g = Gaussian3D {
            mean: [mean.x as f32, mean.y as f32, mean.z as f32],
            log_scale: [scale.x.ln() as f32, scale.y.ln() as f32, scale.z.ln() as f32],
            rotation: rotation.map(|v| v as f32),
            opacity_logit: 0.0,
            sh_dc: [0.0; 3],
        };
        g.set_opacity(opacity);
        g.set_color(color);
        g
    }

    pub fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self::new(mean, Vector3::repeat(sigma), [1.0, 0.0, 0.0, 0.0], opacity, color)
    }

    pub fn mean(&self) -> Vector3<f64> {
        Vector3::new(self.mean[0] as f64, self.mean[1] as f64, self.mean[2] as f64)
    }

    pub fn scale(&self) -> Vector3<f64> {
        Vector3::new(
            (self.log_scale[0] as f64).exp(),
            (self.log_scale[1] as f64).exp(),
            (self.log_scale[2] as f64).exp(),
        )
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit as f64)
    }

    pub fn set_opacity(&mut self, opacity: f64) {
        self.opacity_logit = logit(opacity.clamp(1e-7, 1.0 - 1e-7)) as f32;
    }

    pub fn color(&self) -> [f64; 3] {
        self.sh_dc.map(|c| sh_to_rgb(c as f64))
    }

    pub fn set_color(&mut self, rgb: [f64; 3]) {
        self.sh_dc = rgb.map(|c| rgb_to_sh(c) as f32);
    }

    pub fn quaternion(&self) -> [f64; 4] {
        self.rotation.map(|v| v as f64)
    }

    pub fn rotation_matrix(&self) -> Result<Matrix3<f64>> {
        quat_to_matrix(self.quaternion())
    }

    /// World-space covariance `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        let r = self.rotation_matrix()?;
        let s = self.scale();
        let m = r * Matrix3::from_diagonal(&s);
        Ok(m * m.transpose())
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh_dc.iter().all(|v| v.is_finite())
    }
}

/// Covariance of a Gaussian; fails on a zero-norm quaternion.
pub fn covariance(g: &Gaussian3D) -> Result<Matrix3<f64>> {
    g.covariance()
}

pub fn quat_norm(q: [f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Rotation matrix of a `(w, x, y, z)` quaternion after normalization.
pub fn quat_to_matrix(q: [f64; 4]) -> Result<Matrix3<f64>> {
    let n = quat_norm(q);
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::InvalidParameter(format!("quaternion {q:?} has zero norm")));
    }
    Ok(unit_quat_to_matrix([q[0] / n, q[1] / n, q[2] / n, q[3] / n]))
}

pub(crate) fn unit_quat_to_matrix([w, x, y, z]: [f64; 4]) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Surface,
    Noise,
}

/// Per parameter group freeze switches. `true` means the group is frozen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeFlags {
    pub means: bool,
    pub scales: bool,
    pub rotations: bool,
    pub opacities: bool,
    pub colors: bool,
}

impl FreezeFlags {
    pub const NONE: FreezeFlags =
        FreezeFlags { means: false, scales: false, rotations: false, opacities: false, colors: false };
    pub const ALL: FreezeFlags =
        FreezeFlags { means: true, scales: true, rotations: true, opacities: true, colors: true };
    /// Everything frozen except opacity.
    pub const OPACITY_ONLY: FreezeFlags =
        FreezeFlags { means: true, scales: true, rotations: true, opacities: false, colors: true };

    pub fn all_frozen(&self) -> bool {
        *self == Self::ALL
    }
}

/// Voxel a noise Gaussian was created from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoxelRef {
    pub level: u32,
    pub voxel: [u32; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub gaussians: Vec<Gaussian3D>,
    pub role: Role,
    pub freeze: FreezeFlags,
    /// Either empty (no provenance, e.g. loaded from disk) or one entry per Gaussian.
    pub voxel_refs: Vec<VoxelRef>,
}

impl GaussianSet {
    pub fn new(role: Role) -> Self {
        GaussianSet { gaussians: Vec::new(), role, freeze: FreezeFlags::NONE, voxel_refs: Vec::new() }
    }

    pub fn from_gaussians(role: Role, gaussians: Vec<Gaussian3D>) -> Self {
        GaussianSet { gaussians, role, freeze: FreezeFlags::NONE, voxel_refs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn with_freeze(mut self, freeze: FreezeFlags) -> Self {
        self.freeze = freeze;
        self
    }

    pub fn has_voxel_refs(&self) -> bool {
        !self.voxel_refs.is_empty() && self.voxel_refs.len() == self.gaussians.len()
    }

    /// Keeps the Gaussians whose flag is `true`, preserving order and provenance.
    pub fn retain_by(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.gaussians.len());
        let with_refs = self.has_voxel_refs();
        let mut i = 0;
        self.gaussians.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        if with_refs {
            let mut i = 0;
            self.voxel_refs.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        } else {
            self.voxel_refs.clear();
        }
    }

    /// Appends another set of the same role; provenance is kept only if both sides carry it.
    pub fn extend_from(&mut self, other: &GaussianSet) {
        let refs_ok = (self.is_empty() || self.has_voxel_refs()) && other.has_voxel_refs();
        self.gaussians.extend_from_slice(&other.gaussians);
        if refs_ok {
            self.voxel_refs.extend_from_slice(&other.voxel_refs);
        } else {
            self.voxel_refs.clear();
        }
    }

    pub fn means(&self) -> Vec<Vector3<f64>> {
        self.gaussians.iter().map(Gaussian3D::mean).collect()
    }

    /// Stable content hash of the raw parameters, used to pair renders with their scene.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits; independent of platform hasher seeds.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u32| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.gaussians.len() as u32);
        for g in &self.gaussians {
            for v in g.mean.iter().chain(&g.log_scale).chain(&g.rotation).chain(&g.sh_dc) {
                eat(v.to_bits());
            }
            eat(g.opacity_logit.to_bits());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_covariance() {
        let g = Gaussian3D::isotropic(Vector3::zeros(), 1.0, 0.5, [0.5; 3]);
        assert_relative_eq!(g.covariance().unwrap(), Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn axis_aligned_covariance() {
        let g = Gaussian3D::new(Vector3::zeros(), Vector3::new(2.0, 1.0, 1.0), [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        assert_relative_eq!(
            g.covariance().unwrap(),
            Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)),
            epsilon = 1e-6
        );
    }

    #[test]
    fn rotated_covariance_matches_matrix_product() {
        // 90 degrees about z: q = (cos 45, 0, 0, sin 45).
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let g = Gaussian3D::new(Vector3::zeros(), Vector3::new(2.0, 1.0, 1.0), [h, 0.0, 0.0, h], 0.5, [0.5; 3]);
        let rz = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let expected = rz * Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)) * rz.transpose();
        assert_relative_eq!(expected, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0)), epsilon = 1e-12);
        assert_relative_eq!(g.covariance().unwrap(), expected, epsilon = 1e-5);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        let mut g = Gaussian3D::isotropic(Vector3::zeros(), 1.0, 0.5, [0.5; 3]);
        g.rotation = [0.0; 4];
        assert!(matches!(covariance(&g), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn retain_keeps_provenance_aligned() {
        let mut set = GaussianSet::new(Role::Noise);
        for i in 0..4 {
            set.gaussians.push(Gaussian3D::isotropic(Vector3::new(i as f64, 0.0, 0.0), 0.1, 0.9, [1.0, 0.0, 0.0]));
            set.voxel_refs.push(VoxelRef { level: 0, voxel: [i, 0, 0] });
        }
        set.retain_by(&[true, false, true, false]);
        assert_eq!(set.len(), 2);
        assert_eq!(set.voxel_refs[1].voxel, [2, 0, 0]);
        assert_eq!(set.gaussians[1].mean[0], 2.0);
    }

    proptest! {
        #[test]
        fn activation_round_trips(x in -12.0f64..12.0, s in -6.0f64..3.0) {
            prop_assert!((logit(sigmoid(x)) - x).abs() < 1e-6);
            prop_assert!((s.exp().ln() - s).abs() < 1e-12);
            let o = sigmoid(x);
            prop_assert!(o > 0.0 && o < 1.0);
        }

        #[test]
        fn covariance_is_spd_with_squared_scale_spectrum(
            q in prop::array::uniform4(-1.0f64..1.0),
            s in prop::array::uniform3(0.05f64..3.0),
        ) {
            prop_assume!(quat_norm(q) > 0.1);
            let g = Gaussian3D::new(Vector3::zeros(), Vector3::from(s), q, 0.5, [0.5; 3]);
            let cov = g.covariance().unwrap();
            prop_assert!((cov - cov.transpose()).abs().max() < 1e-12);
            let mut eig: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            let mut want: Vec<f64> = g.scale().iter().map(|v| v * v).collect();
            want.sort_by(f64::total_cmp);
            for (a, b) in eig.iter().zip(&want) {
                prop_assert!(*a > 0.0);
                prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
            }
        }
    }
}
