//! Pinhole cameras, heatmap rendering and readout, DLT triangulation and
//! bilinear feature sampling.

pub mod heatmap;
pub mod triangulate;
pub mod view;

pub use heatmap::{
    grid_sample, grid_sample_backward, render_gaussian_heatmap, soft_argmax, soft_argmax_backward,
    FeatureMap, Grid, Heatmap,
};
pub use triangulate::{dlt_triangulate, triangulate_point};
pub use view::{project_point, CameraRig, CameraView};

/// Image resolution the rig renders at.
pub const IMAGE_SIZE: u32 = 256;
/// Heatmap and feature grids are the image downsampled by this factor.
pub const DOWNSAMPLE: f64 = 4.0;
/// Heatmap grid side length.
pub const HEATMAP_SIZE: usize = 64;
/// Gaussian width of rendered heatmaps, in grid pixels.
pub const HEATMAP_SIGMA: f64 = 2.0;
/// Softmax scaling used when reading keypoints off rendered heatmaps.
///
/// Raw Gaussian values lie in [0, 1]; at scale 1 the 4096 background cells
/// swamp the peak and pull every estimate toward the grid center. 16 keeps
/// the readout of a clean σ = 2 heatmap within ~0.05 grid px of the peak.
pub const PIPELINE_TEMPERATURE: f64 = 16.0;

/// Image pixel coordinates to heatmap-grid coordinates.
pub fn image_to_grid(p: nalgebra::Vector2<f64>) -> nalgebra::Vector2<f64> {
    p / DOWNSAMPLE
}

/// Heatmap-grid coordinates to image pixel coordinates.
pub fn grid_to_image(p: nalgebra::Vector2<f64>) -> nalgebra::Vector2<f64> {
    p * DOWNSAMPLE
}
