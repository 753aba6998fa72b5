//! CPU splat rasterizer: projection, compositing and its analytic backward pass.

mod backward;
mod forward;
mod project;

pub use backward::{render_backward, render_backward_with, AlphaChannel, GaussianGrad, SceneGradients};
pub use forward::{
    decompose_pixel, project_scene, render, surface_depth_map, BlendEntry, BlendRecord, BlendTerm, Decomposition,
    DepthMode, PixelTerms, RenderOptions, RenderOutput, TILE, TRANSMITTANCE_CUTOFF,
};
pub use project::{project, Splat2D, SplatSource, COV2D_BLUR, FOOTPRINT_SIGMA, NEAR_PLANE};
