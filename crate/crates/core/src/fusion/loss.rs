use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraRig;
use crate::error::{Error, Result};

/// Weights of the five stage-2 terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub heatmap: f64,
    pub skeleton_2d: f64,
    pub vertex_2d: f64,
    pub skeleton_3d: f64,
    pub vertex_3d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            heatmap: 10.0,
            skeleton_2d: 1.0,
            vertex_2d: 0.1,
            skeleton_3d: 1.0,
            vertex_3d: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.heatmap,
            self.skeleton_2d,
            self.vertex_2d,
            self.skeleton_3d,
            self.vertex_3d,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "loss weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Always 0: heatmaps come from a fixed oracle with nothing to train.
    pub heatmap: f64,
    /// Sum over views of the mean joint reprojection distance, pixels.
    pub skeleton_2d: f64,
    /// Sum over views of the mean per-vertex L1 reprojection error, pixels.
    pub vertex_2d: f64,
    /// Mean joint distance, millimeters.
    pub skeleton_3d: f64,
    /// Mean per-vertex L1 error, millimeters.
    pub vertex_3d: f64,
    pub total: f64,
}

/// Predicted or ground-truth geometry for one sample.
#[derive(Debug, Clone, Copy)]
pub struct Geometry<'a> {
    pub mesh: &'a [Vector3<f64>],
    pub joints: &'a [Vector3<f64>],
}

/// Gradients of the weighted total w.r.t. the predicted mesh and joints.
pub struct LossGrads {
    pub mesh: Vec<Vector3<f64>>,
    pub joints: Vec<Vector3<f64>>,
}

fn l2_grad(d: Vector3<f64>) -> Vector3<f64> {
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vector3::zeros()
    }
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean reprojection error over `points`, summed over views. `l1` selects the
/// per-point norm. Points behind a camera are skipped for that view.
fn reprojection_term(
    rig: &CameraRig,
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    l1: bool,
    weight: f64,
    grad: &mut [Vector3<f64>],
) -> f64 {
    let n = pred.len() as f64;
    let mut total = 0.0;
    for view in &rig.views {
        for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
            let (Ok((uv, jac)), Ok(uv_gt)) = (view.project_with_jacobian(p), view.project(g))
            else {
                continue;
            };
            let d = uv - uv_gt;
            let (value, d_uv) = if l1 {
                (
                    d.x.abs() + d.y.abs(),
                    nalgebra::Vector2::new(sign(d.x), sign(d.y)),
                )
            } else {
                let len = d.norm();
                let unit = if len > 0.0 {
                    d / len
                } else {
                    nalgebra::Vector2::zeros()
                };
                (len, unit)
            };
            total += value / n;
            if weight != 0.0 {
                grad[i] += jac.transpose() * d_uv * (weight / n);
            }
        }
    }
    total
}

/// Weighted stage-2 loss for one sample with per-term breakdown and
/// gradients w.r.t. the prediction.
pub fn stage2_loss(
    pred: Geometry,
    gt: Geometry,
    rig: &CameraRig,
    weights: &LossWeights,
) -> Result<(LossTerms, LossGrads)> {
    if pred.mesh.len() != gt.mesh.len() || pred.mesh.is_empty() {
        return Err(Error::shape(
            "mesh vertices",
            gt.mesh.len(),
            pred.mesh.len(),
        ));
    }
    if pred.joints.len() != gt.joints.len() || pred.joints.is_empty() {
        return Err(Error::shape("joints", gt.joints.len(), pred.joints.len()));
    }
    let mut grads = LossGrads {
        mesh: vec![Vector3::zeros(); pred.mesh.len()],
        joints: vec![Vector3::zeros(); pred.joints.len()],
    };
    let nj = pred.joints.len() as f64;
    let nv = pred.mesh.len() as f64;
    let mut t = LossTerms::default();
    t.skeleton_2d = reprojection_term(
        rig,
        pred.joints,
        gt.joints,
        false,
        weights.skeleton_2d,
        &mut grads.joints,
    );
    t.vertex_2d = reprojection_term(
        rig,
        pred.mesh,
        gt.mesh,
        true,
        weights.vertex_2d,
        &mut grads.mesh,
    );
    for (i, (p, g)) in pred.joints.iter().zip(gt.joints).enumerate() {
        let d = p - g;
        t.skeleton_3d += d.norm() / nj;
        grads.joints[i] += l2_grad(d) * (weights.skeleton_3d / nj);
    }
    for (i, (p, g)) in pred.mesh.iter().zip(gt.mesh).enumerate() {
        let d = p - g;
        t.vertex_3d += d.abs().sum() / nv;
        grads.mesh[i] += d.map(sign) * (weights.vertex_3d / nv);
    }
    t.total = weights.heatmap * t.heatmap
        + weights.skeleton_2d * t.skeleton_2d
        + weights.vertex_2d * t.vertex_2d
        + weights.skeleton_3d * t.skeleton_3d
        + weights.vertex_3d * t.vertex_3d;
    Ok((t, grads))
}
