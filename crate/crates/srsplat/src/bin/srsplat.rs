//! Thin command-line wrapper over the library. Every subcommand maps to
//! one library entry point; flags override config-file values which
//! override defaults. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use srsplat::camera::DEFAULT_NEAR_PLANE;
use srsplat::config::TrainConfig;
use srsplat::experiment::{
    self, standard_variants, ExperimentSpec, ExternalSource, Metric, SceneSource,
};
use srsplat::gaussian::compute_sampling_sigmas;
use srsplat::io::{fimg, pngio, scene as scene_io};
use srsplat::metrics::{self, format_metric};
use srsplat::render::{sr_splat, RenderSettings};
use srsplat::scenegen::{self, DatasetSpec, Layout};
use srsplat::train::{self, train_hr, train_internal, TrainOutcome, TrainView};
use srsplat::{Error, ImageBuffer, Result};

#[derive(Parser)]
#[command(
    name = "srsplat",
    version,
    about = "Super-resolution Gaussian splatting: two-stage training with fused texture and depth guidance"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset: true scene, ring cameras, HR ground
    /// truth, and bicubic LR inputs.
    GenScene(GenSceneArgs),
    /// Stage 1: fit a smoothed model to the dataset's LR views.
    TrainInternal(TrainInternalArgs),
    /// Build the guidance directory (internal SR-splats plus external
    /// image/depth files) for a frozen stage-1 scene.
    BuildGuidance(BuildGuidanceArgs),
    /// Stage 2: continue from a frozen stage-1 scene at HR against the
    /// fused guidance objective.
    TrainHr(TrainHrArgs),
    /// Render a scene file at every camera in a camera file.
    Render(RenderArgs),
    /// PSNR/SSIM between two images (.fimg or .png).
    Eval(EvalArgs),
    /// Full pipeline with internal/external/fused variants and a report.
    RunExperiment(ExperimentArgs),
    /// Fused stage 2 once per mask threshold, sharing one stage-1 model.
    SweepThreshold(SweepArgs),
}

/// Training knobs shared by the training-adjacent subcommands.
#[derive(Args)]
struct ConfigFlags {
    /// Flat `key = value` config file, applied before flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Upscaling factor between LR inputs and the HR model.
    #[arg(long)]
    scale: Option<f64>,
    /// Discrepancy threshold for the texture fusion mask.
    #[arg(long)]
    threshold: Option<f64>,
    /// Internal depth correlation weight.
    #[arg(long)]
    lambda_i: Option<f64>,
    /// External depth correlation weight.
    #[arg(long)]
    lambda_e: Option<f64>,
    /// Views sampled per optimization step.
    #[arg(long)]
    mv_views: Option<usize>,
    /// Optimization steps.
    #[arg(long)]
    iters: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigFlags {
    fn build(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        if let Some(v) = self.scale {
            cfg.scale_factor = v;
        }
        if let Some(v) = self.threshold {
            cfg.loss.threshold = v;
        }
        if let Some(v) = self.lambda_i {
            cfg.loss.lambda_i = v;
        }
        if let Some(v) = self.lambda_e {
            cfg.loss.lambda_e = v;
        }
        if let Some(v) = self.mv_views {
            cfg.mv_views = v;
        }
        if let Some(v) = self.iters {
            cfg.iterations = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenSceneArgs {
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_gaussians: usize,
    /// cluster | shell | textured-grid | packed-grid
    #[arg(long, default_value = "textured-grid")]
    layout: String,
    #[arg(long, default_value_t = 8)]
    n_views: usize,
    #[arg(long, default_value_t = 2)]
    n_holdout: usize,
    #[arg(long, default_value_t = 32)]
    lr_width: u32,
    #[arg(long, default_value_t = 32)]
    lr_height: u32,
    /// Downsampling factor between HR ground truth and the LR inputs.
    #[arg(long, default_value_t = 4)]
    down_factor: usize,
}

#[derive(Args)]
struct TrainInternalArgs {
    /// Dataset directory from gen-scene.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for scene.txt, state.iesr, log.csv.
    #[arg(long)]
    out: PathBuf,
    /// Random Gaussians to start from.
    #[arg(long, default_value_t = 120)]
    init_gaussians: usize,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct BuildGuidanceArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Frozen stage-1 scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Guidance root directory to create.
    #[arg(long)]
    out: PathBuf,
    /// gt | corrupt | bicubic, or a path to an existing manifest.tsv.
    #[arg(long, default_value = "gt")]
    external: String,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct TrainHrArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Frozen stage-1 scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Guidance root from build-guidance.
    #[arg(long)]
    guidance: PathBuf,
    /// Output directory for scene.txt, state.iesr, log.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Camera file.
    #[arg(long)]
    cameras: PathBuf,
    /// Output directory for per-camera PNG/FIMG/depth files.
    #[arg(long)]
    out: PathBuf,
    /// Render with intrinsics scaled by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Disable the 3D smoothing filter.
    #[arg(long)]
    no_smoothing: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Image under test (.fimg or .png).
    #[arg(long)]
    rendered: PathBuf,
    /// Reference image (.fimg or .png).
    #[arg(long)]
    reference: PathBuf,
}

#[derive(Args)]
struct DatasetFlags {
    /// Existing dataset directory; omitted, a dataset is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n_gaussians: usize,
    /// cluster | shell | textured-grid | packed-grid
    #[arg(long, default_value = "textured-grid")]
    layout: String,
    #[arg(long, default_value_t = 8)]
    n_views: usize,
    #[arg(long, default_value_t = 2)]
    n_holdout: usize,
    #[arg(long, default_value_t = 32)]
    lr_width: u32,
    #[arg(long, default_value_t = 32)]
    lr_height: u32,
    /// Downsampling factor between HR ground truth and the LR inputs.
    #[arg(long, default_value_t = 4)]
    down_factor: usize,
}

impl DatasetFlags {
    fn source(&self, seed: u64) -> Result<SceneSource> {
        Ok(match &self.data {
            Some(dir) => SceneSource::Files(dir.clone()),
            None => SceneSource::Generated(DatasetSpec {
                seed,
                n_gaussians: self.n_gaussians,
                layout: Layout::from_str(&self.layout)?,
                n_train: self.n_views,
                n_holdout: self.n_holdout,
                lr_width: self.lr_width,
                lr_height: self.lr_height,
                factor: self.down_factor,
            }),
        })
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Output directory for the report, renders, grids, and masks.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    dataset: DatasetFlags,
    /// gt | corrupt | bicubic, or a path to an existing manifest.tsv.
    #[arg(long, default_value = "gt")]
    external: String,
    /// Stage-1 steps (--iters controls stage 2).
    #[arg(long, default_value_t = 600)]
    stage1_iters: usize,
    /// Random Gaussians stage 1 starts from.
    #[arg(long, default_value_t = 120)]
    init_gaussians: usize,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated mask thresholds to sweep.
    #[arg(long, default_value = "0,0.3,0.6,0.9,1.0")]
    thresholds: String,
}

fn parse_external(s: &str, seed: u64) -> ExternalSource {
    match s {
        "gt" => ExternalSource::GroundTruth,
        "corrupt" => ExternalSource::CorruptedGroundTruth {
            seed,
            n_blobs: 3,
            strength: 0.9,
            radius_frac: 0.1,
        },
        "bicubic" => ExternalSource::Bicubic { seed, noise: 0.05 },
        path => ExternalSource::Manifest(PathBuf::from(path)),
    }
}

fn read_image_any(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("fimg") => fimg::read_image(path),
        _ => pngio::read_png(path),
    }
}

fn save_outcome(out_dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    scene_io::save_scene(&out_dir.join("scene.txt"), &outcome.scene)?;
    train::save_optimizer_state(
        &out_dir.join("state.iesr"),
        &outcome.raw,
        &outcome.optimizer,
    )?;
    train::write_log_csv(&out_dir.join("log.csv"), &outcome.log)?;
    if let Some(last) = outcome.log.last() {
        println!(
            "step {} loss {} holdout psnr {} gaussians {}",
            last.step,
            format_metric(last.loss_total),
            format_metric(last.psnr_holdout),
            last.num_gaussians
        );
    }
    println!("saved {}", out_dir.display());
    Ok(())
}

fn lr_views_of(views: &[scenegen::ViewData]) -> Vec<TrainView> {
    views
        .iter()
        .map(|v| TrainView {
            view_id: v.view_id.clone(),
            camera: v.camera.clone(),
            target: v.lr_image.clone(),
        })
        .collect()
}

fn experiment_spec(a: &ExperimentArgs) -> Result<ExperimentSpec> {
    let mut stage1 = a.cfg.build()?;
    stage1.iterations = a.stage1_iters;
    let mut stage2 = a.cfg.build()?;
    // The stage-2 default is sized for the desk harness, not the 30k-step
    // config default; an explicit --iters still wins.
    stage2.iterations = a.cfg.iters.unwrap_or(400);
    Ok(ExperimentSpec {
        source: a.dataset.source(stage1.seed)?,
        external: parse_external(&a.external, stage1.seed),
        holdout_ids: Vec::new(),
        metrics: vec![Metric::Psnr, Metric::Ssim],
        stage1,
        init_gaussians: a.init_gaussians,
        variants: standard_variants(&stage2),
        out_dir: a.out.clone(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenScene(a) => {
            let spec = DatasetSpec {
                seed: a.seed,
                n_gaussians: a.n_gaussians,
                layout: Layout::from_str(&a.layout)?,
                n_train: a.n_views,
                n_holdout: a.n_holdout,
                lr_width: a.lr_width,
                lr_height: a.lr_height,
                factor: a.down_factor,
            };
            let ds = scenegen::generate_dataset(&spec)?;
            scenegen::save_dataset(&a.out, &ds)?;
            println!(
                "wrote {} training and {} holdout views at {}x{} (factor {}) to {}",
                ds.train_views.len(),
                ds.holdout_views.len(),
                a.lr_width,
                a.lr_height,
                a.down_factor,
                a.out.display()
            );
        }
        Cmd::TrainInternal(a) => {
            let cfg = a.cfg.build()?;
            let ds = scenegen::load_dataset(&a.data)?;
            let init =
                scenegen::generate_gaussians(cfg.seed, a.init_gaussians, Layout::Cluster);
            let outcome = train_internal(
                &init,
                &lr_views_of(&ds.train_views),
                &lr_views_of(&ds.holdout_views),
                &cfg,
            )?;
            save_outcome(&a.out, &outcome)?;
        }
        Cmd::BuildGuidance(a) => {
            let cfg = a.cfg.build()?;
            let ds = scenegen::load_dataset(&a.data)?;
            let scene = scene_io::load_scene(&a.scene)?;
            let built = experiment::build_guidance(
                &scene,
                &ds.train_views,
                ds.factor,
                &parse_external(&a.external, cfg.seed),
                &cfg,
                &a.out,
            )?;
            println!(
                "built guidance for {} views under {}",
                built.hr_views.len(),
                a.out.display()
            );
        }
        Cmd::TrainHr(a) => {
            let mut cfg = a.cfg.build()?;
            let ds = scenegen::load_dataset(&a.data)?;
            if a.cfg.scale.is_none() {
                cfg.scale_factor = ds.factor as f64;
            }
            let scene = scene_io::load_scene(&a.scene)?;
            let manifest = a.guidance.join("external").join("manifest.tsv");
            let built = experiment::build_guidance(
                &scene,
                &ds.train_views,
                ds.factor,
                &ExternalSource::Manifest(manifest),
                &cfg,
                &a.guidance,
            )?;
            let holdout: Vec<_> = ds
                .holdout_views
                .iter()
                .map(|v| {
                    let mut gt = v.hr_image.clone();
                    gt.quantize_f32();
                    (v.camera.scaled(ds.factor as f64), gt)
                })
                .collect();
            let outcome = train_hr(&scene, &built.hr_views, &holdout, &cfg)?;
            save_outcome(&a.out, &outcome)?;
        }
        Cmd::Render(a) => {
            let scene = scene_io::load_scene(&a.scene)?;
            let cams = scene_io::load_cameras(&a.cameras)?;
            if cams.is_empty() {
                return Err(Error::Config("camera file lists no cameras".into()));
            }
            std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            let defaults = TrainConfig::default();
            let sigmas = if a.no_smoothing {
                None
            } else {
                Some(compute_sampling_sigmas(
                    &scene,
                    &cams,
                    defaults.sampling_k,
                    DEFAULT_NEAR_PLANE,
                    defaults.sampling_fallback_sigma,
                ))
            };
            let settings = RenderSettings::default();
            for (i, cam) in cams.iter().enumerate() {
                let mut out = sr_splat(&scene, cam, a.scale, sigmas.as_deref(), &settings)?;
                out.image.quantize_f32();
                out.depth.quantize_f32();
                let stem = a.out.join(format!("cam_{i:03}"));
                fimg::write_image(&stem.with_extension("fimg"), &out.image)?;
                pngio::write_png(&stem.with_extension("png"), &out.image)?;
                pngio::write_depth_png(
                    &a.out.join(format!("cam_{i:03}_depth.png")),
                    &out.depth,
                )?;
            }
            println!("rendered {} cameras to {}", cams.len(), a.out.display());
        }
        Cmd::Eval(a) => {
            let rendered = read_image_any(&a.rendered)?;
            let reference = read_image_any(&a.reference)?;
            println!("psnr {}", format_metric(metrics::psnr(&rendered, &reference)?));
            println!("ssim {}", format_metric(metrics::ssim(&rendered, &reference)?));
        }
        Cmd::RunExperiment(a) => {
            let spec = experiment_spec(&a)?;
            let report = experiment::run_experiment(&spec)?;
            for variant in &spec.variants {
                let psnr = report.variant_mean(&variant.name, Metric::Psnr);
                let ssim = report.variant_mean(&variant.name, Metric::Ssim);
                match (psnr, ssim) {
                    (Some(p), Some(s)) => println!(
                        "{}: psnr {} ssim {}",
                        variant.name,
                        format_metric(p),
                        format_metric(s)
                    ),
                    _ => println!("{}: no results", variant.name),
                }
            }
            if !report.failures.is_empty() {
                eprintln!("{} failure(s); see failures.txt", report.failures.len());
            }
            println!("report at {}", spec.out_dir.join("report.csv").display());
        }
        Cmd::SweepThreshold(a) => {
            let spec = experiment_spec(&a.exp)?;
            let mut thresholds = Vec::new();
            for part in a.thresholds.split(',') {
                let t: f64 = part
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad threshold `{part}`")))?;
                thresholds.push(t);
            }
            let rows = experiment::sweep_threshold(&spec, &thresholds)?;
            for r in &rows {
                println!(
                    "threshold {} psnr {} ssim {}",
                    r.threshold,
                    format_metric(r.psnr),
                    format_metric(r.ssim)
                );
            }
            println!("curve at {}", spec.out_dir.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
