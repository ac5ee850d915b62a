//! One-sided Jacobi (Hestenes) SVD for the small dense systems used by
//! triangulation and Procrustes alignment.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Thin SVD `A = U·diag(s)·Vᵀ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `max(rows, cols) × cols`, orthonormal columns where `s > 0`.
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    /// `cols × cols`, orthogonal.
    pub v: Matrix,
}

const MAX_SWEEPS: usize = 64;

pub fn svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("SVD input must be finite".into()));
    }
    // Pad wide matrices with zero rows; this leaves AᵀA unchanged.
    let rows = m.max(n);
    let mut u = Matrix::zeros(rows, n);
    for r in 0..m {
        u.row_mut(r).copy_from_slice(a.row(r));
    }
    let mut v = Matrix::identity(n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let (up, uq) = (u.get(r, p), u.get(r, q));
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut u, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|j| {
            (
                (0..rows).map(|r| u.get(r, j).powi(2)).sum::<f64>().sqrt(),
                j,
            )
        })
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut u_sorted = Matrix::zeros(rows, n);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &(sigma, src)) in order.iter().enumerate() {
        singular_values.push(sigma);
        for r in 0..rows {
            let val = if sigma > 0.0 {
                u.get(r, src) / sigma
            } else {
                0.0
            };
            u_sorted.set(r, dst, val);
        }
        for r in 0..n {
            v_sorted.set(r, dst, v.get(r, src));
        }
    }
    Ok(Svd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    })
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.rows() {
        let (mp, mq) = (m.get(r, p), m.get(r, q));
        m.set(r, p, c * mp - s * mq);
        m.set(r, q, s * mp + c * mq);
    }
}

/// Unit vector minimizing `‖A·v‖`: the right singular vector of the smallest
/// singular value. Any null vector is acceptable when the null space has
/// more than one dimension.
pub fn svd_smallest(a: &Matrix) -> Result<Vec<f64>> {
    if a.cols() < 2 {
        return Err(Error::InvalidArgument(
            "svd_smallest needs at least 2 columns".into(),
        ));
    }
    let dec = svd(a)?;
    let last = a.cols() - 1;
    let mut v: Vec<f64> = (0..a.cols()).map(|r| dec.v.get(r, last)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}
