//! Position errors, Procrustes alignment, the skeleton-noise robustness sweep
//! and latency benchmarks.

pub mod bench;
pub mod procrustes;
pub mod sweep;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::ROOT;

pub use bench::{bench_mgfp, bench_reconstruct, bench_s2m, BenchResult};
pub use procrustes::{procrustes_align, Similarity};
pub use sweep::{robustness_sweep, SweepRow, DEFAULT_SIGMA_SQ};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorMode {
    Raw,
    /// The prediction is first shifted by `gt_root − pred_root`.
    RootRelative {
        pred_root: Vector3<f64>,
        gt_root: Vector3<f64>,
    },
}

/// Mean Euclidean distance between corresponding points, millimeters.
pub fn position_error(pred: &[Vector3<f64>], gt: &[Vector3<f64>], mode: ErrorMode) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::shape("compared points", gt.len(), pred.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let shift = match mode {
        ErrorMode::Raw => Vector3::zeros(),
        ErrorMode::RootRelative { pred_root, gt_root } => gt_root - pred_root,
    };
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p + shift - g).norm())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Root-relative error of joint sets, rooted at joint 0.
pub fn root_relative_joint_error(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    if pred.len() <= ROOT || gt.len() <= ROOT {
        return Err(Error::shape("joints", ROOT + 1, pred.len().min(gt.len())));
    }
    position_error(
        pred,
        gt,
        ErrorMode::RootRelative {
            pred_root: pred[ROOT],
            gt_root: gt[ROOT],
        },
    )
}

/// Errors of one prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub mpjpe: f64,
    pub mpvpe: f64,
    pub rr_j: f64,
    pub rr_v: f64,
    pub pa_j: f64,
    pub pa_v: f64,
}

/// Means over a set of samples, millimeters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub mpvpe: f64,
    pub rr_j: f64,
    pub rr_v: f64,
    pub pa_j: f64,
    pub pa_v: f64,
    pub count: usize,
}

/// All six errors for one sample. Mesh root-relative error shifts the mesh by
/// the wrist offset of the joint sets.
pub fn sample_metrics(
    pred_joints: &[Vector3<f64>],
    gt_joints: &[Vector3<f64>],
    pred_mesh: &[Vector3<f64>],
    gt_mesh: &[Vector3<f64>],
) -> Result<SampleMetrics> {
    if pred_joints.len() != gt_joints.len() || pred_joints.len() <= ROOT {
        return Err(Error::shape(
            "joints",
            gt_joints.len().max(ROOT + 1),
            pred_joints.len(),
        ));
    }
    let root = ErrorMode::RootRelative {
        pred_root: pred_joints[ROOT],
        gt_root: gt_joints[ROOT],
    };
    Ok(SampleMetrics {
        mpjpe: position_error(pred_joints, gt_joints, ErrorMode::Raw)?,
        mpvpe: position_error(pred_mesh, gt_mesh, ErrorMode::Raw)?,
        rr_j: position_error(pred_joints, gt_joints, root)?,
        rr_v: position_error(pred_mesh, gt_mesh, root)?,
        pa_j: procrustes_align(pred_joints, gt_joints)?.1,
        pa_v: procrustes_align(pred_mesh, gt_mesh)?.1,
    })
}

impl MetricReport {
    pub fn aggregate(samples: &[SampleMetrics]) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        Self {
            mpjpe: mean(|s| s.mpjpe),
            mpvpe: mean(|s| s.mpvpe),
            rr_j: mean(|s| s.rr_j),
            rr_v: mean(|s| s.rr_v),
            pa_j: mean(|s| s.pa_j),
            pa_v: mean(|s| s.pa_v),
            count: samples.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                Vector3::new(
                    t.sin() * 30.0,
                    (1.7 * t).cos() * 20.0 + t,
                    (0.3 * t).sin() * 10.0,
                )
            })
            .collect()
    }

    #[test]
    fn identical_sets_have_zero_error() {
        let a = cloud(21);
        assert_eq!(position_error(&a, &a, ErrorMode::Raw).unwrap(), 0.0);
    }

    #[test]
    fn translation_is_removed_by_root_alignment() {
        let gt = cloud(21);
        let t = Vector3::new(3.0, -4.0, 12.0);
        let pred: Vec<_> = gt.iter().map(|p| p + t).collect();
        assert!((position_error(&pred, &gt, ErrorMode::Raw).unwrap() - 13.0).abs() < 1e-12);
        assert!(root_relative_joint_error(&pred, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn single_offset_point() {
        let gt = cloud(21);
        let mut pred = gt.clone();
        pred[7] += Vector3::new(3.0, 4.0, 0.0);
        let e = position_error(&pred, &gt, ErrorMode::Raw).unwrap();
        assert!((e - 5.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        assert!(position_error(&cloud(3), &cloud(4), ErrorMode::Raw).is_err());
    }

    #[test]
    fn metric_ordering_holds() {
        let gt_j = cloud(21);
        let gt_v = cloud(60);
        let off = Vector3::new(5.0, 1.0, -2.0);
        let wobble = |p: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
            p.iter()
                .enumerate()
                .map(|(i, x)| x + off + Vector3::new((i as f64).cos(), 0.5, 0.0))
                .collect()
        };
        let m = sample_metrics(&wobble(&gt_j), &gt_j, &wobble(&gt_v), &gt_v).unwrap();
        assert!(m.pa_j <= m.rr_j + 1e-12 && m.pa_v <= m.rr_v + 1e-12);
        let r = MetricReport::aggregate(&[m, m]);
        assert_eq!(r.count, 2);
        assert!((r.mpvpe - m.mpvpe).abs() < 1e-12);
    }
}
