//! Central finite-difference gradient checks.

/// Largest relative deviation between `analytic` and central differences of
/// `f` at `x`, over every coordinate.
///
/// The relative error of coordinate `i` is
/// `|analytic_i - fd_i| / max(1, |analytic_i|)`. Any NaN yields NaN so that
/// `err < tol` assertions fail.
pub fn finite_diff_check<F>(f: F, analytic: &[f64], x: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_at(f, analytic, x, &all, h)
}

/// Same as [`finite_diff_check`] restricted to the given coordinates.
pub fn finite_diff_check_at<F>(
    mut f: F,
    analytic: &[f64],
    x: &[f64],
    indices: &[usize],
    h: f64,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        analytic.len(),
        x.len(),
        "gradient and point dimensions differ"
    );
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
        if err.is_nan() {
            return f64::NAN;
        }
        worst = worst.max(err);
    }
    worst
}
