//! Synthetic dataset directories: one container per sample plus a JSON
//! manifest holding the seeds and a hash of the generating configuration.
//! The manifest is written last, so a directory with a manifest is complete.

use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::hash::Hasher;

use super::container::{meta_field, write_atomic, Container, TensorData};
use crate::camera::CameraRig;
use crate::error::{Error, Result};
use crate::hand::{
    sample_seed, synthesize_sample, HandSkeleton, HandTemplate, SynthConfig, SyntheticSample,
    NUM_JOINTS,
};
use crate::s2m::TrainingPair;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// `builtin` or the template file the data was generated from.
    pub template: String,
    pub global_seed: u64,
    pub rig: CameraRig,
    pub synth: SynthConfig,
    /// Whether sample files carry heatmaps and feature maps.
    pub with_maps: bool,
    /// FNV-1a (64-bit, hex) of the generating configuration.
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    fn compute_hash(&self) -> Result<String> {
        let canonical = serde_json::to_vec(&json!({
            "template": self.template,
            "global_seed": self.global_seed,
            "rig": self.rig,
            "synth": self.synth,
            "with_maps": self.with_maps,
            "count": self.seeds.len(),
        }))
        .map_err(|e| Error::format("config_hash", e.to_string()))?;
        let mut h = FnvHasher::default();
        h.write(&canonical);
        Ok(format!("{:016x}", h.finish()))
    }

    /// Re-simulates sample `index` in full, including image-space maps.
    pub fn regenerate(&self, template: &HandTemplate, index: usize) -> Result<SyntheticSample> {
        let seed = *self.seeds.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "sample {index} out of range for {} samples",
                self.len()
            ))
        })?;
        synthesize_sample(template, &self.rig, &self.synth, seed)
    }
}

pub fn sample_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("sample_{index:06}.s2mw"))
}

fn flat(points: &[Vector3<f64>]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn sample_container(s: &SyntheticSample, index: usize, with_maps: bool) -> Result<Container> {
    let mut c = Container::new(json!({"kind": "sample", "index": index, "seed": s.seed}));
    c.push(
        "skeleton",
        vec![NUM_JOINTS, 3],
        TensorData::F64(s.skeleton.flatten()),
    )?;
    c.push(
        "mesh",
        vec![s.mesh.len(), 3],
        TensorData::F64(flat(&s.mesh)),
    )?;
    let proj: Vec<f64> = s
        .projections
        .iter()
        .flatten()
        .flat_map(|p| [p.x, p.y])
        .collect();
    c.push(
        "projections",
        vec![s.projections.len(), NUM_JOINTS, 2],
        TensorData::F64(proj),
    )?;
    if with_maps {
        for (name, grids) in [("heatmaps", &s.heatmaps), ("feature_maps", &s.feature_maps)] {
            let g = &grids[0];
            let data: Vec<f64> = grids
                .iter()
                .flat_map(|g| g.as_slice().iter().copied())
                .collect();
            c.push_f32(
                name,
                vec![grids.len(), g.channels(), g.height(), g.width()],
                &data,
            )?;
        }
    }
    Ok(c)
}

/// Simulates `count` samples into `dir` (created if needed). Samples are
/// generated in parallel; each derives its seed from `(global_seed, index)`.
#[allow(clippy::too_many_arguments)]
pub fn write_dataset(
    dir: impl AsRef<Path>,
    template: &HandTemplate,
    template_id: &str,
    rig: &CameraRig,
    synth: &SynthConfig,
    global_seed: u64,
    count: usize,
    with_maps: bool,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let seeds: Vec<u64> = (0..count as u64)
        .map(|i| sample_seed(global_seed, i))
        .collect();
    seeds.par_iter().enumerate().try_for_each(|(i, &seed)| {
        let s = synthesize_sample(template, rig, synth, seed)?;
        sample_container(&s, i, with_maps)?.write(sample_path(dir, i))
    })?;
    let mut manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        template: template_id.into(),
        global_seed,
        rig: rig.clone(),
        synth: *synth,
        with_maps,
        config_hash: String::new(),
        seeds,
    };
    manifest.config_hash = manifest.compute_hash()?;
    let text = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

/// Reads and checks a dataset manifest.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let text = std::fs::read(dir.as_ref().join(MANIFEST_FILE))?;
    let m: DatasetManifest =
        serde_json::from_slice(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
    if m.format_version != DATASET_VERSION {
        return Err(Error::format(
            "format_version",
            format!("unsupported dataset version {}", m.format_version),
        ));
    }
    let h = m.compute_hash()?;
    if h != m.config_hash {
        return Err(Error::format(
            "config_hash",
            format!("stored {} but configuration hashes to {h}", m.config_hash),
        ));
    }
    Ok(m)
}

fn read_pair(dir: &Path, index: usize, seed: u64) -> Result<TrainingPair> {
    let c = Container::read(sample_path(dir, index))?;
    let stored: u64 = meta_field(&c.metadata, "seed")?;
    if stored != seed {
        return Err(Error::format(
            "seed",
            format!("sample {index} has seed {stored}, manifest says {seed}"),
        ));
    }
    let to_points = |v: Vec<f64>| -> Vec<Vector3<f64>> {
        v.chunks_exact(3)
            .map(|p| Vector3::new(p[0], p[1], p[2]))
            .collect()
    };
    let skeleton = to_points(
        c.get("skeleton")?
            .expect_shape(&[NUM_JOINTS, 3])?
            .to_f64()?,
    );
    let mesh_t = c.get("mesh")?;
    let mesh = to_points(
        mesh_t
            .expect_shape(&[mesh_t.shape.first().copied().unwrap_or(0), 3])?
            .to_f64()?,
    );
    Ok((HandSkeleton::from_slice(&skeleton)?, mesh))
}

/// Ground-truth (skeleton, mesh) pairs of every sample.
pub fn load_pairs(dir: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<TrainingPair>)> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let pairs = m
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| read_pair(dir, i, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, pairs))
}
