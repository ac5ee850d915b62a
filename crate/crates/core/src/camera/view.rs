use nalgebra::{Matrix2x3, Matrix3, Matrix3x4, Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// A calibrated pinhole camera: intrinsics `K` and a rigid world-to-camera
/// transform `X_cam = R·X_world + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    intrinsics: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    image_size: (u32, u32),
}

impl CameraView {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_size: (u32, u32),
    ) -> Result<Self> {
        let k = &intrinsics;
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidArgument(
                "intrinsics must be upper-triangular with K[2,2] = 1".into(),
            ));
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return Err(Error::InvalidArgument(
                "focal lengths must be positive".into(),
            ));
        }
        let gram = rotation.transpose() * rotation;
        if (gram - Matrix3::identity()).abs().max() > ORTHONORMAL_TOL
            || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOL
        {
            return Err(Error::InvalidArgument(
                "rotation must be special orthogonal".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("translation must be finite".into()));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            image_size,
        })
    }

    /// Intrinsics from focal length and principal point (zero skew).
    pub fn intrinsics_matrix(focal_px: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(focal_px, 0.0, cx, 0.0, focal_px, cy, 0.0, 0.0, 1.0)
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    /// 4×4 homogeneous world-to-camera transform.
    pub fn extrinsic(&self) -> Matrix4<f64> {
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        t
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// `P = K·[R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        self.intrinsics * rt
    }

    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Pinhole projection of a world point to pixel coordinates.
    pub fn project(&self, x: &Vector3<f64>) -> Result<Vector2<f64>> {
        let xc = self.to_camera(x);
        if xc.z <= 0.0 {
            return Err(Error::BehindCamera { depth: xc.z });
        }
        let h = self.intrinsics * xc;
        Ok(Vector2::new(h.x / h.z, h.y / h.z))
    }

    /// Projection together with its 2×3 Jacobian w.r.t. the world point.
    pub fn project_with_jacobian(
        &self,
        x: &Vector3<f64>,
    ) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
        let xc = self.to_camera(x);
        if xc.z <= 0.0 {
            return Err(Error::BehindCamera { depth: xc.z });
        }
        let h = self.intrinsics * xc;
        let uv = Vector2::new(h.x / h.z, h.y / h.z);
        let kr = self.intrinsics * self.rotation;
        let dz = self.rotation.row(2);
        let mut jac = Matrix2x3::zeros();
        for c in 0..3 {
            // h = K·R·X + K·t, and h.z equals the camera-frame depth.
            jac[(0, c)] = (kr[(0, c)] - uv.x * dz[c]) / h.z;
            jac[(1, c)] = (kr[(1, c)] - uv.y * dz[c]) / h.z;
        }
        Ok((uv, jac))
    }
}

/// Pinhole projection of a world point.
pub fn project_point(view: &CameraView, x: &Vector3<f64>) -> Result<Vector2<f64>> {
    view.project(x)
}

/// An ordered set of calibrated views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub views: Vec<CameraView>,
}

impl CameraRig {
    pub fn new(views: Vec<CameraView>) -> Self {
        Self { views }
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_at_x(offset: f64) -> CameraView {
        // Camera center at (offset, 0, 0) looking down +z: t = -R·c.
        CameraView::new(
            CameraView::intrinsics_matrix(100.0, 64.0, 64.0),
            Matrix3::identity(),
            Vector3::new(-offset, 0.0, 0.0),
            (128, 128),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let uv = view_at_x(0.0)
            .project(&Vector3::new(0.0, 0.0, 2.0))
            .unwrap();
        assert_eq!((uv.x, uv.y), (64.0, 64.0));
    }

    #[test]
    fn translated_camera() {
        // u = 100 * (0 - 1) / 2 + 64 = 14.
        let uv = view_at_x(1.0)
            .project(&Vector3::new(0.0, 0.0, 2.0))
            .unwrap();
        assert!((uv.x - 14.0).abs() < 1e-12 && (uv.y - 64.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let err = view_at_x(0.0)
            .project(&Vector3::new(0.0, 0.0, -1.0))
            .unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
        assert!(view_at_x(0.0)
            .project(&Vector3::new(1.0, 0.0, 0.0))
            .is_err());
    }

    #[test]
    fn invalid_intrinsics_and_rotation_rejected() {
        let bad_k = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraView::new(bad_k, Matrix3::identity(), Vector3::zeros(), (1, 1)).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let k = CameraView::intrinsics_matrix(1.0, 0.0, 0.0);
        assert!(CameraView::new(k, reflect, Vector3::zeros(), (1, 1)).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.2, -0.4, 0.7).into_inner();
        let view = CameraView::new(
            CameraView::intrinsics_matrix(300.0, 120.0, 130.0),
            rot,
            Vector3::new(5.0, -3.0, 400.0),
            (256, 256),
        )
        .unwrap();
        let x = Vector3::new(10.0, -20.0, 15.0);
        let (_, jac) = view.project_with_jacobian(&x).unwrap();
        let h = 1e-5;
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let d = (view.project(&xp).unwrap() - view.project(&xm).unwrap()) / (2.0 * h);
            assert!((d.x - jac[(0, c)]).abs() < 1e-7);
            assert!((d.y - jac[(1, c)]).abs() < 1e-7);
        }
    }
}
