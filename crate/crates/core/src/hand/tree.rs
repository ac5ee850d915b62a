use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 21;
pub const NUM_BONES: usize = 20;
/// Joint 0 is the wrist.
pub const ROOT: usize = 0;

/// 21 joints in millimeters, world frame. Joint 0 is the wrist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandSkeleton {
    pub joints: [Vector3<f64>; NUM_JOINTS],
}

impl HandSkeleton {
    pub fn new(joints: [Vector3<f64>; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn from_slice(points: &[Vector3<f64>]) -> Result<Self> {
        if points.len() != NUM_JOINTS {
            return Err(Error::shape("skeleton joints", NUM_JOINTS, points.len()));
        }
        let mut joints = [Vector3::zeros(); NUM_JOINTS];
        joints.copy_from_slice(points);
        Ok(Self { joints })
    }

    pub fn zeros() -> Self {
        Self {
            joints: [Vector3::zeros(); NUM_JOINTS],
        }
    }

    pub fn root(&self) -> Vector3<f64> {
        self.joints[ROOT]
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Self {
        let mut out = *self;
        out.joints.iter_mut().for_each(|j| *j += t);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.iter().all(|v| v.is_finite()))
    }

    /// Row-major `[x0, y0, z0, x1, …]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|j| [j.x, j.y, j.z]).collect()
    }
}

/// One 6D row per bone: parent endpoint followed by child endpoint.
pub type BoneSet = Vec<[f64; 6]>;

/// Joint hierarchy of the hand and the fixed order in which its 20 bones are
/// enumerated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KinematicTree {
    parent: Vec<Option<usize>>,
    bones: Vec<(usize, usize)>,
}

impl KinematicTree {
    /// Wrist, then thumb, index, middle, ring and pinky with four joints each
    /// (proximal to distal). Bone `k` ends at joint `k + 1`, so bones run
    /// thumb → pinky and proximal → distal within each finger.
    pub fn hand() -> Self {
        let mut parent = vec![None; NUM_JOINTS];
        for finger in 0..5 {
            let base = 1 + 4 * finger;
            parent[base] = Some(ROOT);
            for j in 1..4 {
                parent[base + j] = Some(base + j - 1);
            }
        }
        let bones = (1..NUM_JOINTS).map(|c| (parent[c].unwrap(), c)).collect();
        Self { parent, bones }
    }

    /// A tree with a custom bone enumeration. Every non-root joint must be the
    /// child of exactly one bone, and each bone must be a parent/child edge.
    pub fn with_bone_order(parent: Vec<Option<usize>>, bones: Vec<(usize, usize)>) -> Result<Self> {
        if parent.len() != NUM_JOINTS {
            return Err(Error::shape("joint parents", NUM_JOINTS, parent.len()));
        }
        if bones.len() != NUM_BONES {
            return Err(Error::shape("bone order", NUM_BONES, bones.len()));
        }
        let roots: Vec<usize> = (0..NUM_JOINTS).filter(|&j| parent[j].is_none()).collect();
        if roots != [ROOT] {
            return Err(Error::InvalidArgument(format!(
                "expected joint 0 as the only root, found {roots:?}"
            )));
        }
        let mut seen = [false; NUM_JOINTS];
        for &(p, c) in &bones {
            if c >= NUM_JOINTS || parent[c] != Some(p) {
                return Err(Error::InvalidArgument(format!(
                    "({p}, {c}) is not a tree edge"
                )));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidArgument(format!(
                    "joint {c} is the child of two bones"
                )));
            }
        }
        // Parents must be reachable from the root without cycles.
        for start in 0..NUM_JOINTS {
            let mut j = start;
            for _ in 0..=NUM_JOINTS {
                match parent[j] {
                    Some(p) => j = p,
                    None => break,
                }
            }
            if j != ROOT {
                return Err(Error::InvalidArgument(
                    "joint parents contain a cycle".into(),
                ));
            }
        }
        Ok(Self { parent, bones })
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parent[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// `(parent_joint, child_joint)` per bone, in bone order.
    pub fn bones(&self) -> &[(usize, usize)] {
        &self.bones
    }

    /// Bone whose child endpoint is `joint`.
    pub fn bone_ending_at(&self, joint: usize) -> Option<usize> {
        self.bones.iter().position(|&(_, c)| c == joint)
    }

    /// Bone that ends where bone `k` starts, if `k` is not attached to the root.
    pub fn parent_bone(&self, k: usize) -> Option<usize> {
        self.bone_ending_at(self.bones[k].0)
    }

    /// Bones ordered so that every bone comes after its parent bone.
    pub fn topological_bones(&self) -> Vec<usize> {
        let depth = |k: usize| {
            let mut d = 0;
            let mut j = self.bones[k].0;
            while let Some(p) = self.parent[j] {
                d += 1;
                j = p;
            }
            d
        };
        let mut order: Vec<usize> = (0..NUM_BONES).collect();
        order.sort_by_key(|&k| (depth(k), k));
        order
    }

    pub fn one_hot(&self, k: usize) -> [f64; NUM_BONES] {
        let mut v = [0.0; NUM_BONES];
        v[k] = 1.0;
        v
    }
}

/// `b_k = [x_parent, x_child]` for every bone in tree order.
pub fn bones_from_skeleton(x: &HandSkeleton, tree: &KinematicTree) -> BoneSet {
    tree.bones()
        .iter()
        .map(|&(p, c)| {
            let (a, b) = (x.joints[p], x.joints[c]);
            [a.x, a.y, a.z, b.x, b.y, b.z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tree_is_valid() {
        let t = KinematicTree::hand();
        let rebuilt =
            KinematicTree::with_bone_order(t.parents().to_vec(), t.bones().to_vec()).unwrap();
        assert_eq!(rebuilt, t);
        assert_eq!(t.bones()[0], (0, 1));
        assert_eq!(t.bones()[4], (0, 5));
        assert_eq!(t.bones()[19], (19, 20));
        assert_eq!(t.parent_bone(1), Some(0));
        assert_eq!(t.parent_bone(4), None);
    }

    #[test]
    fn rejects_duplicate_child() {
        let t = KinematicTree::hand();
        let mut bones = t.bones().to_vec();
        bones[1] = bones[0];
        assert!(KinematicTree::with_bone_order(t.parents().to_vec(), bones).is_err());
    }

    #[test]
    fn one_hot_marks_bone() {
        let t = KinematicTree::hand();
        let o = t.one_hot(7);
        assert_eq!(o.iter().sum::<f64>(), 1.0);
        assert_eq!(o[7], 1.0);
    }

    #[test]
    fn zero_skeleton_gives_zero_bones() {
        let b = bones_from_skeleton(&HandSkeleton::zeros(), &KinematicTree::hand());
        assert_eq!(b.len(), NUM_BONES);
        assert!(b.iter().all(|r| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn translation_shifts_both_endpoints() {
        let tree = KinematicTree::hand();
        let mut x = HandSkeleton::zeros();
        for (i, j) in x.joints.iter_mut().enumerate() {
            *j = Vector3::new(i as f64, 2.0 * i as f64, -(i as f64));
        }
        let t = Vector3::new(1.5, -2.0, 4.0);
        let a = bones_from_skeleton(&x, &tree);
        let b = bones_from_skeleton(&x.translated(&t), &tree);
        for (ra, rb) in a.iter().zip(&b) {
            for i in 0..6 {
                assert!((rb[i] - ra[i] - t[i % 3]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn topological_order_respects_parents() {
        let t = KinematicTree::hand();
        let order = t.topological_bones();
        for (pos, &k) in order.iter().enumerate() {
            if let Some(p) = t.parent_bone(k) {
                assert!(order[..pos].contains(&p));
            }
        }
    }
}
