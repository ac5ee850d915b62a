use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::numeric::{svd, Matrix};

const RANK_TOL: f64 = 1e-10;

/// Similarity transform `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }
}

fn centered(points: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    (mean, points.iter().map(|p| p - mean).collect())
}

fn check_spread(points: &[Vector3<f64>], what: &str) -> Result<()> {
    let m = Matrix::from_vec(
        points.len(),
        3,
        points.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
    )?;
    let s = svd(&m)?.singular_values;
    if s[0] == 0.0 || s[1] <= RANK_TOL * s[0] {
        return Err(Error::DegenerateAlignment(format!(
            "{what} points are collinear"
        )));
    }
    Ok(())
}

/// Least-squares similarity taking `pred` onto `gt` (rotation from the SVD
/// of the cross-covariance, with a reflection guard). Returns the aligned
/// prediction, the mean residual distance and the transform.
pub fn procrustes_align(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
) -> Result<(Vec<Vector3<f64>>, f64, Similarity)> {
    if pred.len() != gt.len() {
        return Err(Error::shape("aligned points", gt.len(), pred.len()));
    }
    if pred.len() < 3 {
        return Err(Error::DegenerateAlignment(format!(
            "{} points, need at least 3",
            pred.len()
        )));
    }
    let (mp, p) = centered(pred);
    let (mg, g) = centered(gt);
    check_spread(&p, "predicted")?;
    check_spread(&g, "target")?;
    let mut h = Matrix::zeros(3, 3);
    for (a, b) in p.iter().zip(&g) {
        for r in 0..3 {
            for c in 0..3 {
                h.set(r, c, h.get(r, c) + a[r] * b[c]);
            }
        }
    }
    let dec = svd(&h)?;
    let to_na = |m: &Matrix| Matrix3::from_fn(|r, c| m.get(r, c));
    let (u, v) = (to_na(&dec.u), to_na(&dec.v));
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let sv = &dec.singular_values;
    let trace = sv[0] * d[(0, 0)] + sv[1] * d[(1, 1)] + sv[2] * d[(2, 2)];
    let var: f64 = p.iter().map(|x| x.norm_squared()).sum();
    let scale = trace / var;
    let translation = mg - scale * (rotation * mp);
    let t = Similarity {
        scale,
        rotation,
        translation,
    };
    let aligned: Vec<Vector3<f64>> = pred.iter().map(|x| t.apply(x)).collect();
    let err = aligned
        .iter()
        .zip(gt)
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / gt.len() as f64;
    Ok((aligned, err, t))
}
