use nalgebra::Vector3;

use super::tree::{HandSkeleton, KinematicTree, NUM_BONES, NUM_JOINTS};
use crate::error::{Error, Result};

const RING_SIDES: usize = 8;
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Normal of the rest-pose palm; fingers point along +y in the xy-plane.
const PALM_NORMAL: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

/// Rest-pose mesh with per-vertex skinning weights over the 20 bones.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTemplate {
    pub rest_skeleton: HandSkeleton,
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    /// One convex weight row per vertex.
    pub skin_weights: Vec<[f64; NUM_BONES]>,
    /// Per joint, the vertices whose mean is that joint. Used to read joints
    /// back off a mesh.
    pub joint_regressor: Vec<Vec<usize>>,
}

impl HandTemplate {
    pub fn new(
        rest_skeleton: HandSkeleton,
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[u32; 3]>,
        skin_weights: Vec<[f64; NUM_BONES]>,
        joint_regressor: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let t = Self {
            rest_skeleton,
            vertices,
            faces,
            skin_weights,
            joint_regressor,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.len();
        if v == 0 {
            return Err(Error::InvalidTemplate("no vertices".into()));
        }
        if self.skin_weights.len() != v {
            return Err(Error::shape("skin weight rows", v, self.skin_weights.len()));
        }
        for (i, row) in self.skin_weights.iter().enumerate() {
            if row.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::InvalidTemplate(format!(
                    "vertex {i} has a negative weight"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidTemplate(format!(
                    "vertex {i} weights sum to {s}"
                )));
            }
        }
        if let Some(f) = self
            .faces
            .iter()
            .find(|f| f.iter().any(|&i| i as usize >= v))
        {
            return Err(Error::InvalidTemplate(format!(
                "face {f:?} indexes past {v} vertices"
            )));
        }
        if self.joint_regressor.len() != NUM_JOINTS {
            return Err(Error::shape(
                "joint regressor rows",
                NUM_JOINTS,
                self.joint_regressor.len(),
            ));
        }
        if self
            .joint_regressor
            .iter()
            .any(|r| r.is_empty() || r.iter().any(|&i| i >= v))
        {
            return Err(Error::InvalidTemplate(
                "joint regressor rows must be non-empty and in range".into(),
            ));
        }
        if !self.rest_skeleton.is_finite()
            || self
                .vertices
                .iter()
                .any(|p| !p.iter().all(|x| x.is_finite()))
        {
            return Err(Error::InvalidTemplate("non-finite coordinates".into()));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Joints as the mean of each regressor vertex set.
    pub fn regress_joints(&self, mesh: &[Vector3<f64>]) -> HandSkeleton {
        let mut x = HandSkeleton::zeros();
        for (j, idx) in self.joint_regressor.iter().enumerate() {
            let sum: Vector3<f64> = idx.iter().map(|&i| mesh[i]).sum();
            x.joints[j] = sum / idx.len() as f64;
        }
        x
    }

    /// Adjoint of [`regress_joints`](Self::regress_joints): accumulates joint
    /// gradients into per-vertex gradients.
    pub fn regress_joints_backward(&self, d_joints: &[Vector3<f64>], d_mesh: &mut [Vector3<f64>]) {
        for (j, idx) in self.joint_regressor.iter().enumerate() {
            let g = d_joints[j] / idx.len() as f64;
            for &i in idx {
                d_mesh[i] += g;
            }
        }
    }

    /// The default hand: generalized 8-gon cylinders along every bone,
    /// welded by shared rings at the joints.
    pub fn builtin() -> Self {
        build_builtin()
    }
}

/// Rest joint positions in millimeters. Wrist at the origin, palm in the
/// xy-plane, middle fingertip about 185 mm up the y axis.
pub fn builtin_rest_skeleton() -> HandSkeleton {
    let p = |x: f64, y: f64, z: f64| Vector3::new(x, y, z);
    HandSkeleton::new([
        p(0.0, 0.0, 0.0),
        // thumb
        p(-22.0, 28.0, -5.0),
        p(-45.0, 55.0, -10.0),
        p(-60.0, 80.0, -12.0),
        p(-70.0, 102.0, -13.0),
        // index
        p(-25.0, 88.0, 0.0),
        p(-29.0, 128.0, 0.0),
        p(-31.0, 152.0, 0.0),
        p(-32.0, 170.0, 0.0),
        // middle
        p(-3.0, 92.0, 0.0),
        p(-3.0, 137.0, 0.0),
        p(-3.0, 165.0, 0.0),
        p(-3.0, 185.0, 0.0),
        // ring
        p(17.0, 87.0, 0.0),
        p(19.0, 128.0, 0.0),
        p(20.0, 153.0, 0.0),
        p(21.0, 172.0, 0.0),
        // pinky
        p(35.0, 78.0, 0.0),
        p(39.0, 108.0, 0.0),
        p(41.0, 126.0, 0.0),
        p(42.0, 142.0, 0.0),
    ])
}

/// Cylinder radius per position along a finger chain (palm, proximal,
/// middle, distal), in millimeters.
const RADII: [[f64; 4]; 5] = [
    [10.0, 9.0, 8.5, 8.0],
    [11.0, 8.5, 7.5, 6.5],
    [11.0, 9.0, 8.0, 7.0],
    [11.0, 8.5, 7.5, 6.5],
    [10.0, 7.5, 6.5, 6.0],
];
const WRIST_RADIUS: f64 = 22.0;

struct Builder {
    vertices: Vec<Vector3<f64>>,
    weights: Vec<[f64; NUM_BONES]>,
    faces: Vec<[u32; 3]>,
}

impl Builder {
    /// Adds an 8-gon ring around `center` perpendicular to `dir`; returns the
    /// index of its first vertex.
    fn ring(
        &mut self,
        center: Vector3<f64>,
        dir: Vector3<f64>,
        radius: f64,
        weights: &[(usize, f64)],
    ) -> usize {
        let d = dir.normalize();
        let e1 = (PALM_NORMAL - d * PALM_NORMAL.dot(&d)).normalize();
        let e2 = d.cross(&e1);
        let mut row = [0.0; NUM_BONES];
        for &(k, w) in weights {
            row[k] += w;
        }
        let start = self.vertices.len();
        for i in 0..RING_SIDES {
            let a = std::f64::consts::TAU * i as f64 / RING_SIDES as f64;
            self.vertices
                .push(center + radius * (a.cos() * e1 + a.sin() * e2));
            self.weights.push(row);
        }
        start
    }

    fn bridge(&mut self, a: usize, b: usize) {
        for i in 0..RING_SIDES {
            let j = (i + 1) % RING_SIDES;
            let (a0, a1, b0, b1) = (
                (a + i) as u32,
                (a + j) as u32,
                (b + i) as u32,
                (b + j) as u32,
            );
            self.faces.push([a0, a1, b1]);
            self.faces.push([a0, b1, b0]);
        }
    }
}

fn build_builtin() -> HandTemplate {
    let rest = builtin_rest_skeleton();
    let tree = KinematicTree::hand();
    let j = &rest.joints;
    let mut b = Builder {
        vertices: Vec::new(),
        weights: Vec::new(),
        faces: Vec::new(),
    };
    let mut regressor = vec![Vec::new(); NUM_JOINTS];

    let palm_bones: Vec<usize> = (0..5).map(|f| 4 * f).collect();
    let palm_share = 1.0 / palm_bones.len() as f64;
    let wrist_weights: Vec<(usize, f64)> = palm_bones.iter().map(|&k| (k, palm_share)).collect();
    let wrist = b.ring(j[0], Vector3::y(), WRIST_RADIUS, &wrist_weights);
    for i in 1..RING_SIDES - 1 {
        b.faces
            .push([wrist as u32, (wrist + i) as u32, (wrist + i + 1) as u32]);
    }
    regressor[0] = (wrist..wrist + RING_SIDES).collect();

    for finger in 0..5 {
        let bones: Vec<usize> = (0..4).map(|s| 4 * finger + s).collect();
        let dir = |k: usize| {
            let (p, c) = tree.bones()[k];
            j[c] - j[p]
        };
        let mut rings = Vec::new();
        for (s, &k) in bones.iter().enumerate() {
            let (p, c) = tree.bones()[k];
            let r = RADII[finger][s];
            let d = dir(k);
            let prev = if s > 0 { Some(bones[s - 1]) } else { None };
            let next = bones.get(s + 1).copied();
            // Interior rings lean a quarter toward the neighbouring bone.
            let near = match prev {
                Some(pk) => vec![(k, 0.75), (pk, 0.25)],
                None => vec![(k, 1.0)],
            };
            let far = match next {
                Some(nk) => vec![(k, 0.75), (nk, 0.25)],
                None => vec![(k, 1.0)],
            };
            rings.push(b.ring(j[p] + d / 3.0, d, r, &near));
            rings.push(b.ring(j[p] + d * (2.0 / 3.0), d, r, &far));
            match next {
                Some(nk) => {
                    let r_joint = 0.5 * (r + RADII[finger][s + 1]);
                    let welded = d.normalize() + dir(nk).normalize();
                    let ring = b.ring(j[c], welded, r_joint, &[(k, 0.5), (nk, 0.5)]);
                    regressor[c] = (ring..ring + RING_SIDES).collect();
                    rings.push(ring);
                }
                None => {
                    let tip_ring = b.ring(j[p] + d * 0.92, d, 0.6 * r, &[(k, 1.0)]);
                    rings.push(tip_ring);
                    let cap = b.vertices.len();
                    b.vertices.push(j[c]);
                    let mut row = [0.0; NUM_BONES];
                    row[k] = 1.0;
                    b.weights.push(row);
                    regressor[c] = vec![cap];
                    for i in 0..RING_SIDES {
                        let n = (i + 1) % RING_SIDES;
                        b.faces
                            .push([(tip_ring + i) as u32, (tip_ring + n) as u32, cap as u32]);
                    }
                }
            }
        }
        for w in rings.windows(2) {
            b.bridge(w[0], w[1]);
        }
    }

    HandTemplate::new(rest, b.vertices, b.faces, b.weights, regressor)
        .expect("builtin template is valid")
}
