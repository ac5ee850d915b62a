use serde::{Deserialize, Serialize};

use crate::hand::{HandSkeleton, KinematicTree, NUM_BONES, ROOT};

/// Frequency encoding of bone rows and bone indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PEConfig {
    /// Bands per bone-coordinate scalar.
    pub bone_bands: usize,
    /// Bands per one-hot scalar.
    pub order_bands: usize,
    /// Coordinates are root-centered and divided by this many millimeters
    /// before encoding. Predicted offsets are scaled back by the same factor.
    pub pre_scale_mm: f64,
    /// When off, the 26 raw scalars are passed through unencoded.
    pub enabled: bool,
}

impl Default for PEConfig {
    fn default() -> Self {
        Self {
            bone_bands: 5,
            order_bands: 2,
            pre_scale_mm: 100.0,
            enabled: true,
        }
    }
}

impl PEConfig {
    /// Width of the encoded `[b_k, o_k]` row.
    pub fn output_dim(&self) -> usize {
        if self.enabled {
            6 * 2 * self.bone_bands + NUM_BONES * 2 * self.order_bands
        } else {
            6 + NUM_BONES
        }
    }

    /// Writes the encoding of bone `k` (root-centered, pre-scaled endpoints
    /// `b`) into `out`.
    pub fn encode_row(&self, b: &[f64; 6], k: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.output_dim());
        if !self.enabled {
            out[..6].copy_from_slice(b);
            out[6..].fill(0.0);
            out[6 + k] = 1.0;
            return;
        }
        let (lb, lo) = (2 * self.bone_bands, 2 * self.order_bands);
        for (i, &x) in b.iter().enumerate() {
            positional_encode_into(x, self.bone_bands, &mut out[i * lb..(i + 1) * lb]);
        }
        let base = 6 * lb;
        for i in 0..NUM_BONES {
            let x = if i == k { 1.0 } else { 0.0 };
            positional_encode_into(
                x,
                self.order_bands,
                &mut out[base + i * lo..base + (i + 1) * lo],
            );
        }
    }

    /// Root-centered, pre-scaled joints flattened (GSD input).
    pub fn normalized_joints(&self, x: &HandSkeleton) -> Vec<f64> {
        let root = x.joints[ROOT];
        x.joints
            .iter()
            .flat_map(|j| {
                let p = (j - root) / self.pre_scale_mm;
                [p.x, p.y, p.z]
            })
            .collect()
    }

    /// Root-centered, pre-scaled bone rows.
    pub fn normalized_bones(&self, x: &HandSkeleton, tree: &KinematicTree) -> Vec<[f64; 6]> {
        let root = x.joints[ROOT];
        tree.bones()
            .iter()
            .map(|&(p, c)| {
                let a = (x.joints[p] - root) / self.pre_scale_mm;
                let b = (x.joints[c] - root) / self.pre_scale_mm;
                [a.x, a.y, a.z, b.x, b.y, b.z]
            })
            .collect()
    }
}

/// `(sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx))`.
pub fn positional_encode(x: f64, bands: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * bands];
    positional_encode_into(x, bands, &mut out);
    out
}

fn positional_encode_into(x: f64, bands: usize, out: &mut [f64]) {
    let mut freq = std::f64::consts::PI;
    for l in 0..bands {
        let (s, c) = (freq * x).sin_cos();
        out[2 * l] = s;
        out[2 * l + 1] = c;
        freq *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        assert_eq!(positional_encode(0.0, 2), vec![0.0, 1.0, 0.0, 1.0]);
        let v = positional_encode(0.5, 1);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn default_row_width() {
        assert_eq!(PEConfig::default().output_dim(), 140);
        let off = PEConfig {
            enabled: false,
            ..PEConfig::default()
        };
        assert_eq!(off.output_dim(), 26);
    }

    #[test]
    fn order_block_marks_bone() {
        let pe = PEConfig::default();
        let mut row = vec![0.0; 140];
        pe.encode_row(&[0.0; 6], 7, &mut row);
        for i in 0..NUM_BONES {
            let block = &row[60 + 4 * i..60 + 4 * i + 4];
            let expect = positional_encode(if i == 7 { 1.0 } else { 0.0 }, 2);
            assert_eq!(block, expect.as_slice());
        }
    }
}
