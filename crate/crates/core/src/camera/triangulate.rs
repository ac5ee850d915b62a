//! Linear (DLT) multi-view triangulation.

use nalgebra::{Vector2, Vector3};

use super::view::{CameraRig, CameraView};
use crate::error::{Error, Result};
use crate::numeric::{svd, Matrix};

/// Ratio below which the third singular value counts as zero, i.e. the
/// homogeneous system has a null space of dimension two or more.
const RANK_TOL: f64 = 1e-12;

/// Triangulates one point from its pixel observations in each view.
pub fn triangulate_point(views: &[CameraView], pixels: &[Vector2<f64>]) -> Result<Vector3<f64>> {
    triangulate_indexed(views, pixels, 0)
}

fn triangulate_indexed(
    views: &[CameraView],
    pixels: &[Vector2<f64>],
    keypoint: usize,
) -> Result<Vector3<f64>> {
    if views.len() < 2 {
        return Err(Error::TooFewViews {
            required: 2,
            actual: views.len(),
        });
    }
    if views.len() != pixels.len() {
        return Err(Error::shape(
            "observations per view",
            views.len(),
            pixels.len(),
        ));
    }
    let mut a = Matrix::zeros(2 * views.len(), 4);
    for (i, (view, px)) in views.iter().zip(pixels).enumerate() {
        let p = view.projection_matrix();
        for c in 0..4 {
            a.set(2 * i, c, px.x * p[(2, c)] - p[(0, c)]);
            a.set(2 * i + 1, c, px.y * p[(2, c)] - p[(1, c)]);
        }
    }
    if !a.is_finite() {
        return Err(Error::DegenerateTriangulation { keypoint });
    }
    let dec = svd(&a)?;
    let s = &dec.singular_values;
    if s[0] == 0.0 || s[2] <= RANK_TOL * s[0] {
        return Err(Error::DegenerateTriangulation { keypoint });
    }
    let h: Vec<f64> = (0..4).map(|r| dec.v.get(r, 3)).collect();
    if h[3].abs() <= f64::EPSILON * h.iter().map(|x| x.abs()).fold(0.0, f64::max) {
        return Err(Error::DegenerateTriangulation { keypoint });
    }
    Ok(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Triangulates every keypoint; `observations[n][j]` is keypoint `j` in view `n`.
pub fn dlt_triangulate(
    observations: &[Vec<Vector2<f64>>],
    rig: &CameraRig,
) -> Result<Vec<Vector3<f64>>> {
    if rig.len() < 2 {
        return Err(Error::TooFewViews {
            required: 2,
            actual: rig.len(),
        });
    }
    if observations.len() != rig.len() {
        return Err(Error::shape(
            "keypoint sets per view",
            rig.len(),
            observations.len(),
        ));
    }
    let count = observations[0].len();
    if let Some(bad) = observations.iter().find(|o| o.len() != count) {
        return Err(Error::shape("keypoints per view", count, bad.len()));
    }
    (0..count)
        .map(|j| {
            let pixels: Vec<Vector2<f64>> = observations.iter().map(|o| o[j]).collect();
            triangulate_indexed(&rig.views, &pixels, j)
        })
        .collect()
}
