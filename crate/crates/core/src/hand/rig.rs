use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraRig, CameraView};
use crate::error::{Error, Result};

/// Multi-view capture setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigConfig {
    pub n_views: usize,
    pub radius_mm: f64,
    pub focal_px: f64,
    pub image_size: u32,
    /// Cameras are raised or lowered uniformly within ± this many degrees.
    pub elevation_jitter_deg: f64,
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            n_views: 4,
            radius_mm: 500.0,
            focal_px: 300.0,
            image_size: crate::camera::IMAGE_SIZE,
            elevation_jitter_deg: 20.0,
            seed: 7,
        }
    }
}

impl RigConfig {
    pub fn build(&self, look_at: Vector3<f64>) -> Result<CameraRig> {
        make_rig_with_jitter(
            self.n_views,
            self.radius_mm,
            look_at,
            self.focal_px,
            self.image_size,
            self.elevation_jitter_deg,
            self.seed,
        )
    }
}

/// Cameras spaced evenly on a horizontal ring around `look_at` (random phase,
/// ±20° elevation jitter), all aimed at it with a centered principal point.
pub fn make_rig(
    n_views: usize,
    radius_mm: f64,
    look_at: Vector3<f64>,
    focal_px: f64,
    image_size: u32,
    seed: u64,
) -> Result<CameraRig> {
    make_rig_with_jitter(
        n_views, radius_mm, look_at, focal_px, image_size, 20.0, seed,
    )
}

pub fn make_rig_with_jitter(
    n_views: usize,
    radius_mm: f64,
    look_at: Vector3<f64>,
    focal_px: f64,
    image_size: u32,
    elevation_jitter_deg: f64,
    seed: u64,
) -> Result<CameraRig> {
    if n_views < 2 {
        return Err(Error::TooFewViews {
            required: 2,
            actual: n_views,
        });
    }
    if !(radius_mm > 0.0) || !(0.0..80.0).contains(&elevation_jitter_deg.abs()) {
        return Err(Error::InvalidArgument(
            "rig radius must be positive and elevation below 80°".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let c = (image_size as f64 - 1.0) / 2.0;
    let k = CameraView::intrinsics_matrix(focal_px, c, c);
    let up = Vector3::y();
    let views = (0..n_views)
        .map(|i| {
            let azimuth = phase + std::f64::consts::TAU * i as f64 / n_views as f64;
            let elevation = (rng.random::<f64>() * 2.0 - 1.0) * elevation_jitter_deg.to_radians();
            let dir = Vector3::new(
                elevation.cos() * azimuth.cos(),
                elevation.sin(),
                elevation.cos() * azimuth.sin(),
            );
            let center = look_at + radius_mm * dir;
            // Rows: right, down, forward.
            let z = -dir;
            let x = z.cross(&up).normalize();
            let y = z.cross(&x);
            let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
            CameraView::new(k, r, -(r * center), (image_size, image_size))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraRig::new(views))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_projects_to_principal_point() {
        let target = Vector3::new(10.0, 90.0, -5.0);
        let rig = make_rig(8, 500.0, target, 300.0, 256, 3).unwrap();
        assert_eq!(rig.len(), 8);
        for v in &rig.views {
            let uv = v.project(&target).unwrap();
            assert!((uv.x - 127.5).abs() < 1e-9 && (uv.y - 127.5).abs() < 1e-9);
            assert!(((v.center() - target).norm() - 500.0).abs() < 1e-9);
        }
        for i in 0..8 {
            for j in i + 1..8 {
                assert!((rig.views[i].center() - rig.views[j].center()).norm() > 1.0);
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let a = make_rig(4, 500.0, Vector3::zeros(), 300.0, 256, 11).unwrap();
        let b = make_rig(4, 500.0, Vector3::zeros(), 300.0, 256, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            make_rig(1, 500.0, Vector3::zeros(), 300.0, 256, 1),
            Err(Error::TooFewViews { .. })
        ));
    }
}
