use nalgebra::{Matrix3, Vector3};

use super::tree::{HandSkeleton, KinematicTree, ROOT};
use crate::error::{Error, Result};

/// Relative tolerance on the sine of the angle between B→A and B→O.
const COLLINEAR_TOL: f64 = 1e-9;

/// Local frame of bone `k`: origin at its child joint B, x toward its parent
/// joint A, y toward the wrist O orthogonalized against x.
///
/// Returns the frame axes as rotation columns and the origin.
pub fn bone_frame(
    x: &HandSkeleton,
    tree: &KinematicTree,
    k: usize,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let (p, c) = tree.bones()[k];
    frame_from_points(x.joints[p], x.joints[c], x.joints[ROOT])
        .map_err(|_| Error::DegenerateFrame { bone: k })
}

/// Frame from parent `a`, child `b` and wrist `o`.
pub fn frame_from_points(
    a: Vector3<f64>,
    b: Vector3<f64>,
    o: Vector3<f64>,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let ba = a - b;
    let bo = o - b;
    let (la, lo) = (ba.norm(), bo.norm());
    if la == 0.0 || lo == 0.0 || ba.cross(&bo).norm() <= COLLINEAR_TOL * la * lo {
        return Err(Error::DegenerateFrame { bone: usize::MAX });
    }
    let ex = ba / la;
    let ey = (bo - ex * ex.dot(&bo)).normalize();
    let ez = ex.cross(&ey);
    Ok((Matrix3::from_columns(&[ex, ey, ez]), b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn canonical_frame() {
        let (r, t) = frame_from_points(Vector3::x(), Vector3::zeros(), Vector3::y()).unwrap();
        assert_eq!(r, Matrix3::identity());
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn collinear_rejected() {
        assert!(frame_from_points(Vector3::x(), Vector3::zeros(), Vector3::x() * 3.0).is_err());
        // Child at the wrist.
        assert!(frame_from_points(Vector3::x(), Vector3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn frames_follow_rigid_motion() {
        let tree = KinematicTree::hand();
        let x = crate::hand::template::builtin_rest_skeleton();
        let rot = Rotation3::from_euler_angles(0.5, -0.3, 1.2);
        let t = Vector3::new(4.0, -7.0, 2.5);
        let mut moved = x;
        moved.joints.iter_mut().for_each(|j| *j = rot * *j + t);
        // Finger bones not attached to the wrist have well-defined frames.
        for k in (0..20).filter(|&k| tree.parent_bone(k).is_some()) {
            let (r0, o0) = bone_frame(&x, &tree, k).unwrap();
            let (r1, o1) = bone_frame(&moved, &tree, k).unwrap();
            assert!((rot.matrix() * r0 - r1).abs().max() < 1e-12);
            assert!((rot * o0 + t - o1).norm() < 1e-9);
            assert!((r1.transpose() * r1 - Matrix3::identity()).abs().max() < 1e-12);
            assert!((r1.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
