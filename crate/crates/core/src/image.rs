//! Minimal dense float images used throughout the pipeline.

use crate::error::{Error, Result};

/// Interleaved RGB image with `f64` channels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Single-channel map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        ColorImage { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ColorImage { width, height, data }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn channel(&self, c: usize) -> ScalarMap {
        ScalarMap { width: self.width, height: self.height, data: self.data.iter().skip(c).step_by(3).copied().collect() }
    }

    pub fn clamped(&self) -> ColorImage {
        ColorImage { width: self.width, height: self.height, data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect() }
    }

    pub fn check_same_size(&self, other: &ColorImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

impl ScalarMap {
    pub fn new(width: usize, height: usize) -> Self {
        ScalarMap { width, height, data: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Self {
        ScalarMap { width, height, data: vec![v; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn check_same_size(&self, other: &ScalarMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}
