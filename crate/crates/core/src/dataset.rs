use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::{ColorImage, ScalarMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Split for the `index`-th view in sorted-name order: every eighth view is held out.
pub fn split_for_index(index: usize) -> Split {
    if index % 8 == 7 {
        Split::Test
    } else {
        Split::Train
    }
}

#[derive(Clone, Debug)]
pub struct View {
    pub name: String,
    pub camera: Camera,
    pub image: ColorImage,
    /// Binary foreground mask (values exactly 0 or 1).
    pub mask: ScalarMap,
    pub split: Split,
}

impl View {
    pub fn mask_pixels(&self) -> usize {
        self.mask.data.iter().filter(|&&m| m > 0.5).count()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub views: Vec<View>,
}

impl Dataset {
    pub fn new(views: Vec<View>) -> Result<Self> {
        let ds = Dataset { views };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for v in &self.views {
            let (w, h) = (v.camera.width as usize, v.camera.height as usize);
            if v.image.width != w || v.image.height != h {
                problems.push(format!("{}: image is {}x{}, camera is {w}x{h}", v.name, v.image.width, v.image.height));
            }
            if v.mask.width != w || v.mask.height != h {
                problems.push(format!("{}: mask is {}x{}, camera is {w}x{h}", v.name, v.mask.width, v.mask.height));
            }
            if v.mask.data.iter().any(|&m| m != 0.0 && m != 1.0) {
                problems.push(format!("{}: mask is not binary", v.name));
            }
            if v.image.data.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                problems.push(format!("{}: image values outside [0, 1]", v.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Dataset(problems.join("; ")))
        }
    }

    pub fn train_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.split == Split::Train)
    }

    pub fn test_views(&self) -> impl Iterator<Item = &View> {
        self.views.iter().filter(|v| v.split == Split::Test)
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.views.len()).filter(|&i| self.views[i].split == Split::Train).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.views.len()).filter(|&i| self.views[i].split == Split::Test).collect()
    }
}
