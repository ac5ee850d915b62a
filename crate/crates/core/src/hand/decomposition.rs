use nalgebra::Vector3;

use super::template::HandTemplate;
use super::tree::NUM_BONES;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Output width of each per-bone regressor: the largest patch it can fill.
pub const PATCH_CAPACITY: usize = 100;

/// Per-bone vertex counts of the 778-vertex MANO mesh split into 991 rows.
pub const MANO_BONE_COUNTS: [usize; NUM_BONES] = [
    45, 61, 43, 45, 92, 34, 41, 62, 44, 44, 58, 42, 40, 60, 41, 35, 64, 28, 50, 62,
];
pub const MANO_VERTEX_COUNT: usize = 778;

/// Selection/duplication of mesh vertices into 20 bone patches.
///
/// `M` has one row per patch entry (bone-major, then ascending vertex index)
/// with a single 1 in the column of the selected vertex. Since `MᵀM` is
/// diagonal with each vertex's multiplicity, the left inverse averages the
/// copies of every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionSpec {
    vertex_count: usize,
    patches: Vec<Vec<usize>>,
    multiplicity: Vec<usize>,
}

/// Stacked patch rows, `P_count` of them, in bone-major order.
pub type BonePatches = Vec<Vector3<f64>>;

impl DecompositionSpec {
    pub fn from_patches(vertex_count: usize, patches: Vec<Vec<usize>>) -> Result<Self> {
        if patches.len() != NUM_BONES {
            return Err(Error::shape("bone patches", NUM_BONES, patches.len()));
        }
        let mut multiplicity = vec![0usize; vertex_count];
        for (bone, p) in patches.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::InvalidTemplate(format!(
                    "bone {bone} has no vertices"
                )));
            }
            if p.len() > PATCH_CAPACITY {
                return Err(Error::Capacity {
                    bone,
                    count: p.len(),
                    capacity: PATCH_CAPACITY,
                });
            }
            if p.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidTemplate(format!(
                    "bone {bone} patch is not strictly ascending"
                )));
            }
            for &v in p {
                if v >= vertex_count {
                    return Err(Error::InvalidTemplate(format!(
                        "bone {bone} selects vertex {v} of {vertex_count}"
                    )));
                }
                multiplicity[v] += 1;
            }
        }
        if let Some(v) = multiplicity.iter().position(|&m| m == 0) {
            return Err(Error::InvalidTemplate(format!(
                "vertex {v} belongs to no bone"
            )));
        }
        Ok(Self {
            vertex_count,
            patches,
            multiplicity,
        })
    }

    /// A spec with the MANO per-bone counts. Bones take consecutive runs of
    /// the 778 vertices; the 213 surplus rows re-select the first vertices
    /// of the following bone, standing in for duplicated boundary vertices.
    pub fn mano_configured() -> Self {
        let total_unique = MANO_VERTEX_COUNT;
        let surplus = MANO_BONE_COUNTS.iter().sum::<usize>() - total_unique;
        // Spread the surplus over bones roughly in proportion to their size.
        let mut extra = [0usize; NUM_BONES];
        let total: usize = MANO_BONE_COUNTS.iter().sum();
        let mut assigned = 0;
        for k in 0..NUM_BONES {
            extra[k] = MANO_BONE_COUNTS[k] * surplus / total;
            assigned += extra[k];
        }
        for k in 0..surplus - assigned {
            extra[k % NUM_BONES] += 1;
        }
        let mut patches = Vec::with_capacity(NUM_BONES);
        let mut start = 0;
        for k in 0..NUM_BONES {
            let own = MANO_BONE_COUNTS[k] - extra[k];
            let mut p: Vec<usize> = (start..start + own).collect();
            start += own;
            // Duplicates come from the next bone's run (wrapping at the end).
            let dup_start = if k + 1 < NUM_BONES { start } else { 0 };
            p.extend(dup_start..dup_start + extra[k]);
            p.sort_unstable();
            patches.push(p);
        }
        debug_assert_eq!(start, total_unique);
        Self::from_patches(total_unique, patches).expect("MANO counts form a valid spec")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn patch_count(&self) -> usize {
        self.patches.iter().map(Vec::len).sum()
    }

    pub fn per_bone_counts(&self) -> Vec<usize> {
        self.patches.iter().map(Vec::len).collect()
    }

    /// Template vertex indices of bone `k`, ascending. Output slot `i` of the
    /// bone's regressor maps to `patch(k)[i]`.
    pub fn patch(&self, k: usize) -> &[usize] {
        &self.patches[k]
    }

    pub fn patches(&self) -> &[Vec<usize>] {
        &self.patches
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    /// Offset of bone `k`'s first row in the stacked patches.
    pub fn patch_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(NUM_BONES + 1);
        off.push(0);
        for p in &self.patches {
            off.push(off.last().unwrap() + p.len());
        }
        off
    }

    /// Template vertex of each stacked patch row.
    pub fn row_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.patches.iter().flatten().copied()
    }

    /// Dense `M`, `P_count × V_count`.
    pub fn m_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.patch_count(), self.vertex_count);
        for (r, v) in self.row_vertices().enumerate() {
            m.set(r, v, 1.0);
        }
        m
    }

    /// Dense `(MᵀM)⁻¹Mᵀ`, `V_count × P_count`.
    pub fn left_inverse(&self) -> Matrix {
        let mut m = Matrix::zeros(self.vertex_count, self.patch_count());
        for (r, v) in self.row_vertices().enumerate() {
            m.set(v, r, 1.0 / self.multiplicity[v] as f64);
        }
        m
    }
}

/// Assigns each vertex to its heaviest bone (lowest index on ties), and also
/// to its second-heaviest bone when that weight reaches `dup_threshold`.
pub fn build_decomposition(
    template: &HandTemplate,
    dup_threshold: f64,
) -> Result<DecompositionSpec> {
    template.validate()?;
    let mut patches = vec![Vec::new(); NUM_BONES];
    for (v, row) in template.skin_weights.iter().enumerate() {
        let mut order: Vec<usize> = (0..NUM_BONES).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        patches[order[0]].push(v);
        let second = order[1];
        if row[second] > 0.0 && row[second] >= dup_threshold {
            patches[second].push(v);
        }
    }
    DecompositionSpec::from_patches(template.vertex_count(), patches)
}

/// `M·V`.
pub fn decompose_mesh(spec: &DecompositionSpec, vertices: &[Vector3<f64>]) -> Result<BonePatches> {
    if vertices.len() != spec.vertex_count {
        return Err(Error::shape(
            "mesh vertices",
            spec.vertex_count,
            vertices.len(),
        ));
    }
    Ok(spec.row_vertices().map(|v| vertices[v]).collect())
}

/// `M⁺·patches`: each vertex becomes the mean of its copies.
pub fn recover_mesh(
    spec: &DecompositionSpec,
    patches: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if patches.len() != spec.patch_count() {
        return Err(Error::shape(
            "patch rows",
            spec.patch_count(),
            patches.len(),
        ));
    }
    let mut out = vec![Vector3::zeros(); spec.vertex_count];
    for (r, v) in spec.row_vertices().enumerate() {
        out[v] += patches[r];
    }
    for (p, &m) in out.iter_mut().zip(&spec.multiplicity) {
        *p /= m as f64;
    }
    Ok(out)
}

/// Adjoint of [`recover_mesh`]: per-vertex gradients to per-row gradients.
pub fn recover_mesh_backward(
    spec: &DecompositionSpec,
    d_vertices: &[Vector3<f64>],
) -> Vec<Vector3<f64>> {
    spec.row_vertices()
        .map(|v| d_vertices[v] / spec.multiplicity[v] as f64)
        .collect()
}
