use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::MgfpModel;
use crate::hand::HandSkeleton;
use crate::numeric::Matrix;
use crate::s2m::Skeleton2Mesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub target: String,
    pub batch: usize,
    pub iterations: usize,
    /// Median wall time of one batched call.
    pub median_ms: f64,
    pub per_sample_ms: f64,
    /// Analytic multiply-adds per sample.
    pub macs: usize,
    pub params: usize,
}

impl BenchResult {
    pub fn fps(&self) -> f64 {
        1000.0 / self.per_sample_ms
    }
}

fn median_ms<F: FnMut() -> Result<()>>(iterations: usize, mut f: F) -> Result<f64> {
    // One warm-up call.
    f()?;
    let mut times = Vec::with_capacity(iterations.max(1));
    for _ in 0..iterations.max(1) {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Times the skeleton-to-mesh forward pass on `batch` copies of `x`.
pub fn bench_s2m(
    model: &Skeleton2Mesh,
    x: &HandSkeleton,
    batch: usize,
    iterations: usize,
) -> Result<BenchResult> {
    let xs = vec![*x; batch.max(1)];
    let ms = median_ms(iterations, || model.predict_batch(&xs).map(|_| ()))?;
    Ok(BenchResult {
        target: "s2m".into(),
        batch: xs.len(),
        iterations,
        median_ms: ms,
        per_sample_ms: ms / xs.len() as f64,
        macs: model.mac_count(),
        params: model.param_count(),
    })
}

/// Times the fused forward pass, with zero bone features.
pub fn bench_mgfp(
    model: &MgfpModel,
    x: &HandSkeleton,
    batch: usize,
    iterations: usize,
) -> Result<BenchResult> {
    let xs = vec![*x; batch.max(1)];
    let f = Matrix::zeros(crate::hand::NUM_BONES, model.feature_dim());
    let fs = vec![&f; xs.len()];
    let ms = median_ms(iterations, || model.predict_batch(&xs, &fs).map(|_| ()))?;
    Ok(BenchResult {
        target: "mgfp".into(),
        batch: xs.len(),
        iterations,
        median_ms: ms,
        per_sample_ms: ms / xs.len() as f64,
        macs: model.mac_count(),
        params: model.param_count(),
    })
}

/// Times the whole image-to-mesh pipeline on one multi-view capture.
pub fn bench_reconstruct(
    model: &MgfpModel,
    rig: &crate::camera::CameraRig,
    heatmaps: &[crate::camera::Heatmap],
    feature_maps: &[crate::camera::FeatureMap],
    iterations: usize,
) -> Result<BenchResult> {
    let ms = median_ms(iterations, || {
        crate::fusion::reconstruct(model, rig, heatmaps, feature_maps).map(|_| ())
    })?;
    Ok(BenchResult {
        target: "reconstruct".into(),
        batch: 1,
        iterations,
        median_ms: ms,
        per_sample_ms: ms,
        macs: model.mac_count(),
        params: model.param_count(),
    })
}
