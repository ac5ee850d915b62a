//! CSV reports. Each file opens with a `# skelmesh <kind> v1` comment line,
//! followed by a header row.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{BenchResult, MetricReport, SampleMetrics, SweepRow};

pub const CSV_VERSION: u32 = 1;

fn write_rows<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    let mut buf = format!("# skelmesh {kind} v{CSV_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)
                .map_err(|e| Error::format(kind, e.to_string()))?;
        }
        w.flush()?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

#[derive(Serialize)]
struct MetricRow<'a> {
    sample: &'a str,
    mpjpe: f64,
    mpvpe: f64,
    rr_j: f64,
    rr_v: f64,
    pa_j: f64,
    pa_v: f64,
}

/// One row per sample, then a `mean` row.
pub fn write_metrics_csv(
    path: impl AsRef<Path>,
    samples: &[SampleMetrics],
    aggregate: &MetricReport,
) -> Result<()> {
    let labels: Vec<String> = (0..samples.len()).map(|i| i.to_string()).collect();
    let mut rows: Vec<MetricRow> = samples
        .iter()
        .zip(&labels)
        .map(|(s, l)| MetricRow {
            sample: l,
            mpjpe: s.mpjpe,
            mpvpe: s.mpvpe,
            rr_j: s.rr_j,
            rr_v: s.rr_v,
            pa_j: s.pa_j,
            pa_v: s.pa_v,
        })
        .collect();
    let a = aggregate;
    rows.push(MetricRow {
        sample: "mean",
        mpjpe: a.mpjpe,
        mpvpe: a.mpvpe,
        rr_j: a.rr_j,
        rr_v: a.rr_v,
        pa_j: a.pa_j,
        pa_v: a.pa_v,
    });
    write_rows(path.as_ref(), "metrics", &rows)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    write_rows(path.as_ref(), "sweep", rows)
}

#[derive(Serialize)]
struct BenchRow<'a> {
    target: &'a str,
    batch: usize,
    iterations: usize,
    median_ms: f64,
    per_sample_ms: f64,
    fps: f64,
    macs: usize,
    params: usize,
}

pub fn write_bench_csv(path: impl AsRef<Path>, results: &[BenchResult]) -> Result<()> {
    let rows: Vec<BenchRow> = results
        .iter()
        .map(|r| BenchRow {
            target: &r.target,
            batch: r.batch,
            iterations: r.iterations,
            median_ms: r.median_ms,
            per_sample_ms: r.per_sample_ms,
            fps: r.fps(),
            macs: r.macs,
            params: r.params,
        })
        .collect();
    write_rows(path.as_ref(), "bench", &rows)
}
