//! Interior noise infill: convex hull, voxel carving, coarse-to-fine injection
//! and opacity fine-tuning.

pub mod fill;
pub mod finetune;
pub mod grid;
pub mod hull;
pub mod prune;

pub use fill::{inject_noise, multiscale_fill, randomize_colors, FillConfig, Infill, RGBCMY};
pub use finetune::{finetune_noise, FinetuneConfig};
pub use grid::OccupancyGrid;
pub use hull::ConvexHull;
pub use prune::{depth_prune, depth_views, keep_mask, DepthView};
