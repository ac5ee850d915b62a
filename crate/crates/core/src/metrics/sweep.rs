use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{position_error, ErrorMode};
use crate::error::Result;
use crate::hand::{inject_noise, recover_mesh, sample_seed, HandSkeleton};
use crate::s2m::{Skeleton2Mesh, TrainingPair};

/// Noise variances of the default sweep, mm².
pub const DEFAULT_SIGMA_SQ: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sigma_sq: f64,
    /// Mean joint displacement of the noisy input skeletons.
    pub ref_mpjpe: f64,
    /// Mean per-vertex error of meshes predicted from the noisy skeletons.
    pub mpvpe: f64,
}

/// Feeds ground-truth skeletons with Gaussian noise of each variance to the
/// model. Sample `i` uses the same noise draw at every variance, scaled.
pub fn robustness_sweep(
    model: &Skeleton2Mesh,
    data: &[TrainingPair],
    sigma_sq: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    sigma_sq
        .iter()
        .map(|&s2| {
            let noisy: Vec<HandSkeleton> = data
                .iter()
                .enumerate()
                .map(|(i, (x, _))| inject_noise(x, s2, sample_seed(seed, i as u64)))
                .collect::<Result<_>>()?;
            let per_sample: Vec<(f64, f64)> = data
                .par_chunks(64)
                .zip(noisy.par_chunks(64))
                .map(|(pairs, xs)| {
                    let preds = model.predict_batch(xs)?;
                    pairs
                        .iter()
                        .zip(xs)
                        .zip(preds)
                        .map(|(((x, v), xn), p)| {
                            let mesh = recover_mesh(model.spec(), &p)?;
                            Ok((
                                position_error(&xn.joints, &x.joints, ErrorMode::Raw)?,
                                position_error(&mesh, v, ErrorMode::Raw)?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            let n = per_sample.len().max(1) as f64;
            Ok(SweepRow {
                sigma_sq: s2,
                ref_mpjpe: per_sample.iter().map(|p| p.0).sum::<f64>() / n,
                mpvpe: per_sample.iter().map(|p| p.1).sum::<f64>() / n,
            })
        })
        .collect()
}
