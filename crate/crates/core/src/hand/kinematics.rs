use nalgebra::{Isometry3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::template::HandTemplate;
use super::tree::{HandSkeleton, KinematicTree, NUM_BONES, ROOT};

/// Rest-pose palm normal; positive flexion curls fingers toward `+z`.
const PALM_NORMAL: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Global placement plus a (flexion, abduction) angle pair per bone, radians.
/// Each bone rotates about its parent joint; twist is not modelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Applied about the wrist.
    pub global_rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub bones: [[f64; 2]; NUM_BONES],
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            global_rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            bones: [[0.0; 2]; NUM_BONES],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// Uniform sampling ranges, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseLimits {
    /// Flexion of every finger joint.
    pub finger_flexion_deg: (f64, f64),
    /// Side-to-side spread at the knuckle; the two distal joints are hinges.
    pub finger_abduction_deg: (f64, f64),
    /// Bones from the wrist (metacarpals) move only slightly.
    pub palm_flexion_deg: (f64, f64),
    pub palm_abduction_deg: (f64, f64),
    /// Uniform random rotation over SO(3) when set.
    pub random_global_rotation: bool,
    /// Per-axis uniform half-range of the global translation, millimeters.
    pub translation_mm: f64,
}

impl Default for PoseLimits {
    fn default() -> Self {
        Self {
            finger_flexion_deg: (0.0, 90.0),
            finger_abduction_deg: (-20.0, 20.0),
            palm_flexion_deg: (0.0, 10.0),
            palm_abduction_deg: (-5.0, 5.0),
            random_global_rotation: true,
            translation_mm: 0.0,
        }
    }
}

impl PoseLimits {
    pub fn zero() -> Self {
        Self {
            finger_flexion_deg: (0.0, 0.0),
            finger_abduction_deg: (0.0, 0.0),
            palm_flexion_deg: (0.0, 0.0),
            palm_abduction_deg: (0.0, 0.0),
            random_global_rotation: false,
            translation_mm: 0.0,
        }
    }

    /// `(flexion, abduction)` ranges in radians for bone `k`.
    pub fn bone_ranges(&self, tree: &KinematicTree, k: usize) -> [(f64, f64); 2] {
        let r = |(a, b): (f64, f64)| (a.to_radians(), b.to_radians());
        match tree.parent_bone(k) {
            None => [r(self.palm_flexion_deg), r(self.palm_abduction_deg)],
            Some(p) if tree.parent_bone(p).is_none() => {
                [r(self.finger_flexion_deg), r(self.finger_abduction_deg)]
            }
            Some(_) => [r(self.finger_flexion_deg), (0.0, 0.0)],
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// A pose drawn uniformly within `limits`; identical seeds give identical poses.
pub fn sample_pose(seed: u64, limits: &PoseLimits) -> Pose {
    let tree = KinematicTree::hand();
    sample_pose_for(&tree, seed, limits)
}

pub fn sample_pose_for(tree: &KinematicTree, seed: u64, limits: &PoseLimits) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global_rotation = if limits.random_global_rotation {
        // A normalized isotropic 4D Gaussian is uniform on the unit quaternions.
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
    } else {
        UnitQuaternion::identity()
    };
    let t = limits.translation_mm;
    let translation = Vector3::from_fn(|_, _| uniform(&mut rng, (-t, t)));
    let mut bones = [[0.0; 2]; NUM_BONES];
    for (k, b) in bones.iter_mut().enumerate() {
        let [flex, abd] = limits.bone_ranges(tree, k);
        *b = [uniform(&mut rng, flex), uniform(&mut rng, abd)];
    }
    Pose {
        global_rotation,
        translation,
        bones,
    }
}

/// Local rotation of bone `k` about its parent joint in the rest frame.
fn local_rotation(
    rest: &HandSkeleton,
    tree: &KinematicTree,
    k: usize,
    angles: [f64; 2],
) -> Rotation3<f64> {
    let (p, c) = tree.bones()[k];
    let d = (rest.joints[c] - rest.joints[p]).normalize();
    // Abduct within the palm plane, then flex about the lateral axis.
    let lateral = Unit::new_normalize(d.cross(&PALM_NORMAL));
    let normal = Unit::new_normalize(lateral.cross(&d));
    Rotation3::from_axis_angle(&normal, angles[1]) * Rotation3::from_axis_angle(&lateral, angles[0])
}

/// Rigid world transform of every bone: maps rest-pose points attached to
/// the bone to their posed positions.
pub fn bone_transforms(
    tree: &KinematicTree,
    rest: &HandSkeleton,
    pose: &Pose,
) -> Vec<Isometry3<f64>> {
    let wrist = rest.joints[ROOT];
    let about = |point: Vector3<f64>, rot: UnitQuaternion<f64>| {
        Translation3::from(point)
            * Isometry3::from_parts(Translation3::identity(), rot)
            * Translation3::from(-point)
    };
    let global = Translation3::from(pose.translation) * about(wrist, pose.global_rotation);
    let mut out = vec![Isometry3::identity(); NUM_BONES];
    for k in tree.topological_bones() {
        let (p, _) = tree.bones()[k];
        let parent = tree.parent_bone(k).map_or(global, |pk| out[pk]);
        let local =
            UnitQuaternion::from_rotation_matrix(&local_rotation(rest, tree, k, pose.bones[k]));
        out[k] = parent * about(rest.joints[p], local);
    }
    out
}

/// Posed joint positions. Rotations chain from the wrist outward, so every
/// bone keeps its rest length.
pub fn forward_kinematics(tree: &KinematicTree, rest: &HandSkeleton, pose: &Pose) -> HandSkeleton {
    if pose.is_identity() {
        return *rest;
    }
    let g = bone_transforms(tree, rest, pose);
    let mut out = *rest;
    out.joints[ROOT] = rest.joints[ROOT] + pose.translation;
    for (k, &(_, c)) in tree.bones().iter().enumerate() {
        out.joints[c] = (g[k] * nalgebra::Point3::from(rest.joints[c])).coords;
    }
    out
}

/// Linear blend skinning of the template. Written as `v + Σ w_k (G_k v − v)`
/// so that the identity pose reproduces the template exactly.
pub fn lbs_mesh(template: &HandTemplate, pose: &Pose) -> Vec<Vector3<f64>> {
    let tree = KinematicTree::hand();
    lbs_mesh_with(template, &tree, pose)
}

pub fn lbs_mesh_with(
    template: &HandTemplate,
    tree: &KinematicTree,
    pose: &Pose,
) -> Vec<Vector3<f64>> {
    if pose.is_identity() {
        return template.vertices.clone();
    }
    let g = bone_transforms(tree, &template.rest_skeleton, pose);
    template
        .vertices
        .iter()
        .zip(&template.skin_weights)
        .map(|(v, w)| {
            let mut delta = Vector3::zeros();
            for (k, &wk) in w.iter().enumerate() {
                if wk != 0.0 {
                    delta += wk * ((g[k] * nalgebra::Point3::from(*v)).coords - v);
                }
            }
            v + delta
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lengths(x: &HandSkeleton, tree: &KinematicTree) -> Vec<f64> {
        tree.bones()
            .iter()
            .map(|&(p, c)| (x.joints[c] - x.joints[p]).norm())
            .collect()
    }

    #[test]
    fn identity_pose_is_rest() {
        let t = HandTemplate::builtin();
        let tree = KinematicTree::hand();
        assert_eq!(
            forward_kinematics(&tree, &t.rest_skeleton, &Pose::identity()),
            t.rest_skeleton
        );
        assert_eq!(lbs_mesh(&t, &Pose::identity()), t.vertices);
        // The general path also reproduces the rest pose (up to rounding).
        let g = bone_transforms(&tree, &t.rest_skeleton, &Pose::identity());
        assert!(g
            .iter()
            .all(|iso| (iso.to_homogeneous() - nalgebra::Matrix4::identity())
                .abs()
                .max()
                < 1e-12));
    }

    #[test]
    fn zero_limits_give_identity() {
        assert!(sample_pose(42, &PoseLimits::zero()).is_identity());
    }

    #[test]
    fn same_seed_same_pose() {
        let l = PoseLimits::default();
        assert_eq!(sample_pose(9, &l), sample_pose(9, &l));
        assert_ne!(sample_pose(9, &l), sample_pose(10, &l));
    }

    #[test]
    fn global_rotation_about_wrist() {
        let t = HandTemplate::builtin();
        let tree = KinematicTree::hand();
        let mut pose = Pose::identity();
        pose.global_rotation = UnitQuaternion::from_euler_angles(0.3, -1.1, 2.0);
        let x = forward_kinematics(&tree, &t.rest_skeleton, &pose);
        let w = t.rest_skeleton.joints[0];
        for (a, b) in x.joints.iter().zip(&t.rest_skeleton.joints) {
            assert!((a - (w + pose.global_rotation * (b - w))).norm() < 1e-9);
        }
    }

    #[test]
    fn random_poses_preserve_lengths() {
        let t = HandTemplate::builtin();
        let tree = KinematicTree::hand();
        let rest = lengths(&t.rest_skeleton, &tree);
        let limits = PoseLimits {
            translation_mm: 50.0,
            ..PoseLimits::default()
        };
        for seed in 0..50 {
            let x = forward_kinematics(&tree, &t.rest_skeleton, &sample_pose(seed, &limits));
            for (a, b) in lengths(&x, &tree).iter().zip(&rest) {
                assert!((a - b).abs() <= 1e-9 * b);
            }
        }
    }

    #[test]
    fn rigid_pose_moves_mesh_rigidly() {
        let t = HandTemplate::builtin();
        let mut pose = Pose::identity();
        pose.global_rotation = UnitQuaternion::from_euler_angles(-0.4, 0.2, 0.9);
        pose.translation = Vector3::new(10.0, -5.0, 3.0);
        let mesh = lbs_mesh(&t, &pose);
        for (m, v) in mesh.iter().zip(&t.vertices) {
            assert!((m - (pose.global_rotation * v + pose.translation)).norm() < 1e-9);
        }
    }

    #[test]
    fn regressor_tracks_posed_joints() {
        let t = HandTemplate::builtin();
        let tree = KinematicTree::hand();
        let pose = sample_pose(3, &PoseLimits::default());
        let x = forward_kinematics(&tree, &t.rest_skeleton, &pose);
        let r = t.regress_joints(&lbs_mesh(&t, &pose));
        for (a, b) in x.joints.iter().zip(&r.joints) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn angle_ranges_respected() {
        let tree = KinematicTree::hand();
        let l = PoseLimits::default();
        for seed in 0..2000 {
            let p = sample_pose(seed, &l);
            for k in 0..NUM_BONES {
                let [f, a] = l.bone_ranges(&tree, k);
                assert!(p.bones[k][0] >= f.0 && p.bones[k][0] <= f.1);
                assert!(p.bones[k][1] >= a.0 && p.bones[k][1] <= a.1);
            }
        }
    }
}
