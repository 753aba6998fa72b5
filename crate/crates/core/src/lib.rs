//! Differentiable CPU Gaussian splatting with interior noise infill.
//!
//! The crate covers the full loop: a deterministic rasterizer with analytic
//! gradients, photometric and alpha-consistency losses, construction of
//! interior noise Gaussians from a convex hull occupancy grid, a staged trainer,
//! and the transmittance-based surface opacity audit.

pub mod benchmark;
pub mod camera;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod image;
pub mod io;
pub mod losses;
pub mod ngs;
pub mod raster;
pub mod train;

pub use camera::{Camera, Intrinsics};
pub use config::TrainConfig;
pub use dataset::{Dataset, Split, View};
pub use error::{Error, PlyError, Result};
pub use gaussian::{FreezeFlags, Gaussian3D, GaussianSet, Role, VoxelRef};
pub use image::{ColorImage, ScalarMap};
pub use raster::{render, render_backward, RenderOptions, RenderOutput};
