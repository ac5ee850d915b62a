use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tree::HandSkeleton;
use crate::error::{Error, Result};

/// Adds i.i.d. `N(0, sigma_sq)` noise (mm²) to every joint coordinate.
pub fn inject_noise(x: &HandSkeleton, sigma_sq: f64, seed: u64) -> Result<HandSkeleton> {
    if !(sigma_sq >= 0.0) || !sigma_sq.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be >= 0, got {sigma_sq}"
        )));
    }
    if sigma_sq == 0.0 {
        return Ok(*x);
    }
    let sigma = sigma_sq.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *x;
    for j in out.joints.iter_mut() {
        let n: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        *j += sigma * Vector3::from(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_is_identity() {
        let x = crate::hand::template::builtin_rest_skeleton();
        assert_eq!(inject_noise(&x, 0.0, 5).unwrap(), x);
        assert!(inject_noise(&x, -1.0, 5).is_err());
    }

    #[test]
    fn deterministic() {
        let x = crate::hand::template::builtin_rest_skeleton();
        assert_eq!(
            inject_noise(&x, 5.0, 1).unwrap(),
            inject_noise(&x, 5.0, 1).unwrap()
        );
    }
}
