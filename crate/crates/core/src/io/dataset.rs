//! Dataset directories: `cameras.json`, `images/<name>.png`, `masks/<name>.png`.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::dataset::{split_for_index, Dataset, View};
use crate::error::{Error, Result};
use crate::image::{ColorImage, ScalarMap};

pub const CAMERAS_FILE: &str = "cameras.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CamerasFile {
    pub views: Vec<CameraRecord>,
}

impl CameraRecord {
    pub fn from_camera(name: &str, c: &Camera) -> Self {
        let r = &c.rotation;
        CameraRecord {
            name: name.to_string(),
            width: c.width,
            height: c.height,
            fx: c.intrinsics.fx,
            fy: c.intrinsics.fy,
            cx: c.intrinsics.cx,
            cy: c.intrinsics.cy,
            rotation: std::array::from_fn(|k| r[(k / 3, k % 3)]),
            translation: [c.translation.x, c.translation.y, c.translation.z],
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        Camera::new(
            Intrinsics { fx: self.fx, fy: self.fy, cx: self.cx, cy: self.cy },
            self.width,
            self.height,
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation),
        )
    }
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image { path: path.to_path_buf(), message: e.to_string() }
}

pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb16();
    let (w, h) = img.dimensions();
    Ok(ColorImage {
        width: w as usize,
        height: h as usize,
        data: img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    })
}

/// 16-bit RGB; values are clamped to [0, 1].
pub fn write_color_png(img: &ColorImage, path: &Path) -> Result<()> {
    let data: Vec<u16> = img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Rgb<u16>, _> = ImageBuffer::from_raw(img.width as u32, img.height as u32, data)
        .ok_or_else(|| image_err(path, "buffer size does not match dimensions"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

/// 8-bit grayscale; values are clamped to [0, 1].
pub fn write_gray_png(map: &ScalarMap, path: &Path) -> Result<()> {
    let data: Vec<u8> = map.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(map.width as u32, map.height as u32, data)
        .ok_or_else(|| image_err(path, "buffer size does not match dimensions"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Grayscale mask thresholded at one half. Also returns how many pixels were not already 0 or 1.
pub fn read_mask_png(path: &Path) -> Result<(ScalarMap, usize)> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    let mut soft = 0;
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| {
            if v != 0 && v != u16::MAX {
                soft += 1;
            }
            if v as f64 / 65535.0 >= 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok((ScalarMap { width: w as usize, height: h as usize, data }, soft))
}

/// Loads a dataset. Views are ordered by name and every eighth is held out for testing.
/// Problems with individual views are collected and reported together.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let cams_path = dir.join(CAMERAS_FILE);
    let text = std::fs::read_to_string(&cams_path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", cams_path.display())))?;
    let mut file: CamerasFile = serde_json::from_str(&text)?;
    file.views.sort_by(|a, b| a.name.cmp(&b.name));
    if file.views.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(Error::Dataset("duplicate view names in cameras file".into()));
    }
    let mut problems = Vec::new();
    let mut views = Vec::with_capacity(file.views.len());
    for (i, rec) in file.views.iter().enumerate() {
        let loaded = (|| -> Result<View> {
            let camera = rec.to_camera()?;
            let image = read_color_png(&dir.join("images").join(format!("{}.png", rec.name)))?;
            let mask_path = dir.join("masks").join(format!("{}.png", rec.name));
            if !mask_path.exists() {
                return Err(Error::Dataset("missing mask".into()));
            }
            let (mask, soft) = read_mask_png(&mask_path)?;
            if soft > 0 {
                log::warn!("{}: {soft} mask pixels were not binary and were thresholded at 0.5", rec.name);
            }
            let (w, h) = (rec.width as usize, rec.height as usize);
            if image.width != w || image.height != h {
                return Err(Error::Dataset(format!("image is {}x{}, camera is {w}x{h}", image.width, image.height)));
            }
            if mask.width != w || mask.height != h {
                return Err(Error::Dataset(format!("mask is {}x{}, camera is {w}x{h}", mask.width, mask.height)));
            }
            Ok(View { name: rec.name.clone(), camera, image, mask, split: split_for_index(i) })
        })();
        match loaded {
            Ok(v) => views.push(v),
            Err(e) => problems.push(format!("{}: {e}", rec.name)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Dataset(problems.join("; ")));
    }
    if views.is_empty() {
        return Err(Error::Dataset(format!("{} lists no views", cams_path.display())));
    }
    Dataset::new(views)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("masks"))?;
    let file = CamerasFile { views: ds.views.iter().map(|v| CameraRecord::from_camera(&v.name, &v.camera)).collect() };
    std::fs::write(dir.join(CAMERAS_FILE), serde_json::to_string_pretty(&file)? + "\n")?;
    for v in &ds.views {
        write_color_png(&v.image, &dir.join("images").join(format!("{}.png", v.name)))?;
        write_gray_png(&v.mask, &dir.join("masks").join(format!("{}.png", v.name)))?;
    }
    Ok(())
}
