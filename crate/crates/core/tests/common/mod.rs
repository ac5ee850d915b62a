#![allow(dead_code)]

use skelmesh::hand::{build_decomposition, HandTemplate, KinematicTree, DEFAULT_DUP_THRESHOLD};
use skelmesh::s2m::{S2MConfig, Skeleton2Mesh};

pub fn builtin_model(config: S2MConfig, seed: u64) -> (HandTemplate, Skeleton2Mesh) {
    let template = HandTemplate::builtin();
    let spec = build_decomposition(&template, DEFAULT_DUP_THRESHOLD).unwrap();
    let model = Skeleton2Mesh::new(config, KinematicTree::hand(), spec, seed).unwrap();
    (template, model)
}

pub fn params(tensors: Vec<(String, Vec<usize>, &[f64])>) -> Vec<(String, Vec<f64>)> {
    tensors
        .into_iter()
        .map(|(n, _, t)| (n, t.to_vec()))
        .collect()
}

pub fn quantized(tensors: Vec<(String, Vec<usize>, &[f64])>) -> Vec<(String, Vec<f64>)> {
    tensors
        .into_iter()
        .map(|(n, _, t)| (n, t.iter().map(|&x| x as f32 as f64).collect()))
        .collect()
}

use nalgebra::Vector3;
use skelmesh::hand::{synthesize_pose, HandSkeleton, SynthConfig};

/// Small architecture for gradient checks.
pub fn tiny_config() -> S2MConfig {
    S2MConfig {
        depth: 2,
        hidden: 8,
        output_width: 40,
        gsd_hidden: 8,
        gsd_width: 10,
        ..S2MConfig::default()
    }
}

pub fn flatten(tensors: Vec<&[f64]>) -> Vec<f64> {
    tensors
        .into_iter()
        .flat_map(|t| t.iter().copied())
        .collect()
}

pub fn assign(tensors: Vec<&mut [f64]>, values: &[f64]) {
    let mut at = 0;
    for t in tensors {
        let n = t.len();
        t.copy_from_slice(&values[at..at + n]);
        at += n;
    }
    assert_eq!(at, values.len());
}

/// Ground-truth skeleton/mesh pairs from the builtin template.
pub fn pairs(
    template: &HandTemplate,
    n: usize,
    seed: u64,
) -> Vec<(HandSkeleton, Vec<Vector3<f64>>)> {
    let cfg = SynthConfig::default();
    (0..n as u64)
        .map(|i| {
            let (x, v, _) = synthesize_pose(template, &cfg, skelmesh::hand::sample_seed(seed, i));
            (x, v)
        })
        .collect()
}
