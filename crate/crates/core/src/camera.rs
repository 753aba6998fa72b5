use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
///
/// Pixel `(i, j)` covers `[i, i + 1) x [j, j + 1)` in image coordinates, so its
/// center sits at `(i + 0.5, j + 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Camera { intrinsics, width, height, rotation, translation };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::InvalidParameter(format!("focal lengths must be positive, got {} {}", k.fx, k.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera resolution must be nonzero".into()));
        }
        let r = &self.rotation;
        let ortho = (r * r.transpose() - Matrix3::identity()).abs().max();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter("camera rotation is not a proper rotation".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::InvalidParameter("look_at: up is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let f = 0.5 * height as f64 / (0.5 * fov_y).tan();
        let intrinsics = Intrinsics { fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64 };
        Camera::new(intrinsics, width, height, rotation, translation)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pixel coordinates of a camera-space point with positive depth.
    pub fn project_camera_point(&self, t: &Vector3<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * t.x / t.z + k.cx, k.fy * t.y / t.z + k.cy)
    }

    /// World-space ray `(origin, unit direction)` through image point `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let k = &self.intrinsics;
        let d_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let d = self.rotation.transpose() * d_cam;
        (self.center(), d.normalize())
    }

    /// Ray through the center of pixel `(i, j)`.
    pub fn pixel_ray(&self, i: u32, j: u32) -> (Vector3<f64>, Vector3<f64>) {
        self.ray(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Pixel containing the projection of a world point, if it lands on the image.
    pub fn pixel_of(&self, p: &Vector3<f64>) -> Option<(u32, u32, f64)> {
        let t = self.to_camera(p);
        if t.z <= 0.0 {
            return None;
        }
        let uv = self.project_camera_point(&t);
        if uv.x < 0.0 || uv.y < 0.0 || uv.x >= self.width as f64 || uv.y >= self.height as f64 {
            return None;
        }
        Some((uv.x as u32, uv.y as u32, t.z))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}
