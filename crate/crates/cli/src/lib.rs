//! Command-line driver: dataset generation, both training stages,
//! evaluation, the noise sweep, benchmarks, inference and the size ablation.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use skelmesh::fusion::{
    estimate_skeleton, prepare_example, reconstruct, train_stage2_with, MgfpModel, Stage2Example,
};
use skelmesh::hand::{
    build_decomposition, recover_mesh, sample_seed, synthesize_sample, HandTemplate, KinematicTree,
    SyntheticSample,
};
use skelmesh::io::{
    export_obj, load_model, load_pairs, load_template, read_manifest, save_mgfp, save_s2m,
    write_bench_csv, write_dataset, write_metrics_csv, write_sweep_csv, DatasetManifest,
    StoredModel,
};
use skelmesh::metrics::{
    bench_mgfp, bench_reconstruct, bench_s2m, robustness_sweep, sample_metrics, MetricReport,
    DEFAULT_SIGMA_SQ,
};
use skelmesh::s2m::{s2m_forward, train_stage1_with, S2MConfig, Skeleton2Mesh};

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable capping worker threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "S2M_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "skelmesh",
    version,
    about = "Multi-view hand mesh reconstruction"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data generation and training shuffles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a multi-view dataset.
    GenData(GenData),
    /// Train the skeleton-to-mesh model on ground-truth skeletons.
    TrainS2m(TrainS2m),
    /// Train the multi-view fusion branch on top of a trained model.
    TrainFull(TrainFull),
    /// Write per-sample and mean errors as CSV.
    Eval(Eval),
    /// Mesh error under increasing skeleton noise.
    Sweep(Sweep),
    /// Latency with analytic multiply-add and parameter counts.
    Bench(Bench),
    /// Reconstruct one capture to OBJ plus the triangulated skeleton as JSON.
    Infer(Infer),
    /// Parameter and multiply-add counts across depths and input variants.
    Ablate(Ablate),
}

#[derive(Debug, Args)]
struct GenData {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    /// Also store heatmaps and feature maps in each sample file.
    #[arg(long)]
    with_maps: bool,
}

#[derive(Debug, Args)]
struct TrainS2m {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainFull {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained skeleton-to-mesh weights.
    #[arg(long)]
    s2m: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Use only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct Eval {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct Sweep {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    /// Comma-separated noise variances, mm².
    #[arg(long, value_delimiter = ',')]
    sigma_sq: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct Bench {
    /// Weights to time; a freshly initialized model otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Infer {
    #[arg(long)]
    weights: PathBuf,
    /// Dataset to take the capture from; a fresh capture is simulated otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    obj: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Ablate {
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 5])]
    depths: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn init_threads() {
    let n = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

struct Ctx {
    cfg: RunConfig,
}

impl Ctx {
    fn template(&self, id: &str) -> anyhow::Result<HandTemplate> {
        if id == "builtin" {
            Ok(HandTemplate::builtin())
        } else {
            load_template(id).with_context(|| format!("loading template {id}"))
        }
    }

    fn data_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .unwrap_or_else(|| self.cfg.paths.data_dir.clone())
    }

    fn out_path(&self, flag: &Option<PathBuf>, default: &str) -> PathBuf {
        flag.clone()
            .unwrap_or_else(|| self.cfg.paths.out_dir.join(default))
    }

    fn fresh_s2m(
        &self,
        template: &HandTemplate,
        config: S2MConfig,
    ) -> anyhow::Result<Skeleton2Mesh> {
        let spec = build_decomposition(template, self.cfg.dup_threshold)?;
        Ok(Skeleton2Mesh::new(
            config,
            KinematicTree::hand(),
            spec,
            self.cfg.seed,
        )?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg.set_seed(seed);
    let ctx = Ctx { cfg };
    match cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::TrainS2m(a) => train_s2m(&ctx, a),
        Command::TrainFull(a) => train_full(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn gen_data(ctx: &Ctx, a: GenData) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.data_dir(&a.out);
    let template = ctx.template(&cfg.template)?;
    let rig = cfg.rig.build(Vector3::zeros())?;
    let count = a.samples.unwrap_or(cfg.paths.samples);
    let m = write_dataset(
        &dir,
        &template,
        &cfg.template,
        &rig,
        &cfg.synth,
        cfg.seed,
        count,
        a.with_maps,
    )?;
    println!(
        "wrote {} samples to {} (config hash {})",
        m.len(),
        dir.display(),
        m.config_hash
    );
    Ok(())
}

fn train_s2m(ctx: &Ctx, a: TrainS2m) -> anyhow::Result<()> {
    let (manifest, pairs) = open_pairs(&ctx.data_dir(&a.data))?;
    let template = ctx.template(&manifest.template)?;
    let mut model = ctx.fresh_s2m(&template, ctx.cfg.model)?;
    let mut stage1 = ctx.cfg.stage1;
    if let Some(e) = a.epochs {
        stage1.epochs = e;
    }
    let report = train_stage1_with(&mut model, &pairs, &stage1, |e, r| {
        println!(
            "epoch {e} train {:.4} val {:.4} lr {:.2e}",
            r.train_loss[e], r.val_loss[e], r.lr[e]
        );
    })?;
    let out = ctx.out_path(&a.out, "s2m.s2mw");
    ensure_parent(&out)?;
    save_s2m(&model, &out)?;
    write_json(&out.with_extension("report.json"), &report)?;
    println!("saved {}", out.display());
    Ok(())
}

fn open_model(path: &Path) -> anyhow::Result<StoredModel> {
    load_model(path, None).with_context(|| format!("loading weights {}", path.display()))
}

fn load_locked(path: &Path, expected: &S2MConfig) -> anyhow::Result<Skeleton2Mesh> {
    let stored = load_model(path, Some(expected))
        .with_context(|| format!("loading weights {}", path.display()))?;
    match stored {
        StoredModel::S2M(m) => Ok(m),
        StoredModel::Mgfp(m) => Ok(m.locked().clone()),
    }
}

fn open_pairs(dir: &Path) -> anyhow::Result<(DatasetManifest, Vec<skelmesh::s2m::TrainingPair>)> {
    load_pairs(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn stage2_examples(
    manifest: &DatasetManifest,
    template: &HandTemplate,
    model: &MgfpModel,
    count: usize,
) -> anyhow::Result<Vec<Stage2Example>> {
    Ok((0..count)
        .into_par_iter()
        .map(|i| prepare_example(&manifest.regenerate(template, i)?, model))
        .collect::<skelmesh::error::Result<_>>()?)
}

fn train_full(ctx: &Ctx, a: TrainFull) -> anyhow::Result<()> {
    let dir = ctx.data_dir(&a.data);
    let manifest =
        read_manifest(&dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let template = ctx.template(&manifest.template)?;
    let locked = load_locked(&ctx.out_path(&a.s2m, "s2m.s2mw"), &ctx.cfg.model)?;
    let mut model = MgfpModel::new(locked, manifest.rig.len(), manifest.synth.feature_channels)?;
    let count = a.limit.unwrap_or(manifest.len()).min(manifest.len());
    let examples = stage2_examples(&manifest, &template, &model, count)?;
    let mut stage2 = ctx.cfg.stage2;
    if let Some(e) = a.epochs {
        stage2.epochs = e;
    }
    let report = train_stage2_with(
        &mut model,
        &template,
        &manifest.rig,
        &examples,
        &stage2,
        |e, r| {
            println!(
                "epoch {e} loss {:.4} val mpvpe {:.4} lr {:.2e}",
                r.train_loss[e], r.val_mpvpe[e], r.lr[e]
            );
        },
    )?;
    println!(
        "cascade val mpvpe {:.4}, fused start {:.4}, fused end {:.4}",
        report.cascade_val_mpvpe,
        report.initial_val_mpvpe,
        report
            .val_mpvpe
            .last()
            .copied()
            .unwrap_or(report.initial_val_mpvpe)
    );
    let out = ctx.out_path(&a.out, "mgfp.s2mw");
    ensure_parent(&out)?;
    save_mgfp(&model, &out)?;
    write_json(&out.with_extension("report.json"), &report)?;
    println!("saved {}", out.display());
    Ok(())
}

/// Predicted mesh of sample `i`: from the ground-truth skeleton for a
/// skeleton-to-mesh model, from the images for a fused model.
fn predict_mesh(
    model: &StoredModel,
    manifest: &DatasetManifest,
    template: &HandTemplate,
    gt: &skelmesh::s2m::TrainingPair,
    i: usize,
) -> skelmesh::error::Result<Vec<Vector3<f64>>> {
    match model {
        StoredModel::S2M(m) => Ok(s2m_forward(m, &gt.0)?.1),
        StoredModel::Mgfp(m) => {
            let s = manifest.regenerate(template, i)?;
            Ok(reconstruct(m, &s.rig, &s.heatmaps, &s.feature_maps)?.mesh)
        }
    }
}

fn eval(ctx: &Ctx, a: Eval) -> anyhow::Result<()> {
    let (manifest, pairs) = open_pairs(&ctx.data_dir(&a.data))?;
    let template = ctx.template(&manifest.template)?;
    let model = open_model(&a.weights)?;
    let n = a.limit.unwrap_or(pairs.len()).min(pairs.len());
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mesh = predict_mesh(&model, &manifest, &template, &pairs[i], i)?;
            let joints = template.regress_joints(&mesh);
            sample_metrics(&joints.joints, &pairs[i].0.joints, &mesh, &pairs[i].1)
        })
        .collect::<skelmesh::error::Result<Vec<_>>>()?;
    let report = MetricReport::aggregate(&samples);
    let out = ctx.out_path(&a.out, "metrics.csv");
    ensure_parent(&out)?;
    write_metrics_csv(&out, &samples, &report)?;
    println!(
        "n {} mpjpe {:.3} mpvpe {:.3} rr_j {:.3} rr_v {:.3} pa_j {:.3} pa_v {:.3}",
        report.count,
        report.mpjpe,
        report.mpvpe,
        report.rr_j,
        report.rr_v,
        report.pa_j,
        report.pa_v
    );
    Ok(())
}

fn sweep(ctx: &Ctx, a: Sweep) -> anyhow::Result<()> {
    let (_, pairs) = open_pairs(&ctx.data_dir(&a.data))?;
    let model = match open_model(&a.weights)? {
        StoredModel::S2M(m) => m,
        StoredModel::Mgfp(m) => m.locked().clone(),
    };
    let n = a.limit.unwrap_or(pairs.len()).min(pairs.len());
    let grid = a.sigma_sq.unwrap_or_else(|| DEFAULT_SIGMA_SQ.to_vec());
    let rows = robustness_sweep(&model, &pairs[..n], &grid, ctx.cfg.seed)?;
    let out = ctx.out_path(&a.out, "sweep.csv");
    ensure_parent(&out)?;
    write_sweep_csv(&out, &rows)?;
    println!("sigma_sq,ref_mpjpe,mpvpe");
    for r in &rows {
        println!("{},{:.4},{:.4}", r.sigma_sq, r.ref_mpjpe, r.mpvpe);
    }
    Ok(())
}

fn bench(ctx: &Ctx, a: Bench) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let template = ctx.template(&cfg.template)?;
    let rig = cfg.rig.build(Vector3::zeros())?;
    let fused = match &a.weights {
        Some(p) => match open_model(p)? {
            StoredModel::S2M(m) => MgfpModel::new(m, rig.len(), cfg.synth.feature_channels)?,
            StoredModel::Mgfp(m) => m,
        },
        None => MgfpModel::new(
            ctx.fresh_s2m(&template, cfg.model)?,
            rig.len(),
            cfg.synth.feature_channels,
        )?,
    };
    if fused.n_views() != rig.len() {
        bail!(
            "weights expect {} views but the rig has {}",
            fused.n_views(),
            rig.len()
        );
    }
    let sample: SyntheticSample =
        synthesize_sample(&template, &rig, &cfg.synth, sample_seed(cfg.seed, 0))?;
    let results = vec![
        bench_s2m(fused.locked(), &sample.skeleton, a.batch, a.iterations)?,
        bench_mgfp(&fused, &sample.skeleton, a.batch, a.iterations)?,
        bench_reconstruct(
            &fused,
            &sample.rig,
            &sample.heatmaps,
            &sample.feature_maps,
            a.iterations,
        )?,
    ];
    let out = ctx.out_path(&a.out, "bench.csv");
    ensure_parent(&out)?;
    write_bench_csv(&out, &results)?;
    println!("target,batch,median_ms,per_sample_ms,fps,macs,params");
    for r in &results {
        println!(
            "{},{},{:.4},{:.4},{:.1},{},{}",
            r.target,
            r.batch,
            r.median_ms,
            r.per_sample_ms,
            r.fps(),
            r.macs,
            r.params
        );
    }
    Ok(())
}

fn infer(ctx: &Ctx, a: Infer) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let (template, sample) = match &a.data {
        Some(dir) => {
            let m = read_manifest(dir)?;
            let t = ctx.template(&m.template)?;
            let s = m.regenerate(&t, a.index)?;
            (t, s)
        }
        None => {
            let t = ctx.template(&cfg.template)?;
            let rig = cfg.rig.build(Vector3::zeros())?;
            let s = synthesize_sample(&t, &rig, &cfg.synth, sample_seed(cfg.seed, a.index as u64))?;
            (t, s)
        }
    };
    let (xbar, keypoints, mesh) = match open_model(&a.weights)? {
        StoredModel::Mgfp(m) => {
            let r = reconstruct(&m, &sample.rig, &sample.heatmaps, &sample.feature_maps)?;
            (r.xbar, r.keypoints_2d, r.mesh)
        }
        StoredModel::S2M(m) => {
            let (xbar, kp) = estimate_skeleton(&sample.rig, &sample.heatmaps)?;
            let patches = m.predict_batch(std::slice::from_ref(&xbar))?.pop().unwrap();
            (xbar, kp, recover_mesh(m.spec(), &patches)?)
        }
    };
    if mesh.len() != template.vertex_count() {
        bail!(
            "model predicts {} vertices but the template has {}",
            mesh.len(),
            template.vertex_count()
        );
    }
    ensure_parent(&a.obj)?;
    export_obj(&mesh, &template.faces, &a.obj)?;
    let json_path = a
        .json
        .clone()
        .unwrap_or_else(|| a.obj.with_extension("json"));
    let pts = |v: &[Vector3<f64>]| v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>();
    write_json(
        &json_path,
        &json!({
            "xbar": pts(&xbar.joints),
            "ground_truth": pts(&sample.skeleton.joints),
            "keypoints_2d": keypoints.iter().map(|v| v.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
    )?;
    println!("wrote {} and {}", a.obj.display(), json_path.display());
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    variant: &'static str,
    depth: usize,
    params: usize,
    macs: usize,
    params_m: String,
    macs_m: String,
}

fn ablate(ctx: &Ctx, a: Ablate) -> anyhow::Result<()> {
    let template = ctx.template(&ctx.cfg.template)?;
    let base = ctx.cfg.model;
    let mut variants: Vec<(&'static str, S2MConfig)> = a
        .depths
        .iter()
        .map(|&d| ("full", S2MConfig { depth: d, ..base }))
        .collect();
    let mut no_pe = base;
    no_pe.pe.enabled = false;
    variants.push(("no-pe", no_pe));
    variants.push((
        "no-gsd",
        S2MConfig {
            use_gsd: false,
            ..base
        },
    ));
    let mut w = csv::Writer::from_writer(Vec::new());
    for (variant, config) in variants {
        let m = ctx.fresh_s2m(&template, config)?;
        w.serialize(AblationRow {
            variant,
            depth: config.depth,
            params: m.param_count(),
            macs: m.mac_count(),
            params_m: format!("{:.2}", m.param_count() as f64 / 1e6),
            macs_m: format!("{:.2}", m.mac_count() as f64 / 1e6),
        })?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    print!("{text}");
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        std::fs::write(out, &text)?;
    }
    Ok(())
}
