//! Desk-scale experiment harness.
//!
//! Prepares a dataset (generated or from disk), runs stage 1, builds the
//! guidance directory, trains any number of named stage-2 variants, and
//! writes the report files: per-view metric CSV, f32 renders, depth and
//! mask PNGs, and side-by-side comparison grids. Metrics are computed
//! from the quantized buffers that land on disk, so recomputing them
//! from the saved files reproduces the CSV exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::buffer::{DepthBuffer, ImageBuffer};
use crate::camera::{Camera, DEFAULT_NEAR_PLANE};
use crate::config::TrainConfig;
use crate::error::Error;
use crate::gaussian::{compute_sampling_sigmas, Gaussian3D};
use crate::guidance::{self, GuidanceLayout, GuidanceManifest, GuidanceSet, Provenance};
use crate::io::manifest::ManifestEntry;
use crate::io::{fimg, manifest as manifest_io, pngio, scene as scene_io};
use crate::loss::{mask as maskops, TextureMode};
use crate::metrics::{self, format_metric, parse_metric};
use crate::render::{render, RenderSettings};
use crate::resample;
use crate::scenegen::{self, DatasetSpec, GeneratedDataset, Layout, ViewData};
use crate::train::{self, train_hr, train_internal, HrView, TrainView};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    Ssim,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SceneSource {
    /// Synthesize a dataset (true scene, ring cameras, HR renders, bicubic
    /// LR inputs) and save it under the output directory.
    Generated(DatasetSpec),
    /// Load a dataset previously written by `save_dataset`.
    Files(PathBuf),
}

/// Where the external guidance images and depths come from.
#[derive(Debug, Clone)]
pub enum ExternalSource {
    /// The dataset's HR ground truth, bit-exact through f32 files.
    GroundTruth,
    /// Ground truth with seeded multiplicative blob artifacts on the
    /// image (depth stays clean). Exercises the discrepancy mask.
    CorruptedGroundTruth {
        seed: u64,
        n_blobs: usize,
        strength: f64,
        radius_frac: f64,
    },
    /// Bicubic-upsampled LR image; depth is the internal render's depth
    /// with smooth seeded noise, which depth correlation treats the same
    /// as any monocular estimate.
    Bicubic { seed: u64, noise: f64 },
    /// Pre-produced files named by an existing manifest.
    Manifest(PathBuf),
}

/// One stage-2 run to evaluate. `train: None` skips training and scores
/// the frozen stage-1 scene rendered at HR.
#[derive(Debug, Clone)]
pub struct VariantSpec {
    pub name: String,
    pub train: Option<TrainConfig>,
}

/// The three-way comparison the report is built around: the stage-1 model
/// as-is, external-only supervision, and the full fused objective.
pub fn standard_variants(stage2: &TrainConfig) -> Vec<VariantSpec> {
    let mut external = stage2.clone();
    external.loss.texture_mode = TextureMode::External;
    external.loss.lambda_i = 0.0;
    vec![
        VariantSpec {
            name: "internal".into(),
            train: None,
        },
        VariantSpec {
            name: "external".into(),
            train: Some(external),
        },
        VariantSpec {
            name: "fused".into(),
            train: Some(stage2.clone()),
        },
    ]
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: SceneSource,
    pub external: ExternalSource,
    /// When non-empty, these view ids become the holdout set and the rest
    /// train, overriding the dataset's own split.
    pub holdout_ids: Vec<String>,
    /// Which metric columns the report CSV carries.
    pub metrics: Vec<Metric>,
    pub stage1: TrainConfig,
    /// Number of randomly placed Gaussians stage 1 starts from.
    pub init_gaussians: usize,
    pub variants: Vec<VariantSpec>,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// Defaults sized for a single-core desk run: 32x32 LR inputs, 4x
    /// factor, a few hundred optimization steps per stage.
    pub fn desk(out_dir: impl Into<PathBuf>) -> Self {
        let stage1 = TrainConfig {
            iterations: 600,
            log_interval: 100,
            ..TrainConfig::default()
        };
        let stage2 = TrainConfig {
            iterations: 400,
            log_interval: 100,
            ..TrainConfig::default()
        };
        ExperimentSpec {
            source: SceneSource::Generated(DatasetSpec::default()),
            external: ExternalSource::GroundTruth,
            holdout_ids: Vec::new(),
            metrics: vec![Metric::Psnr, Metric::Ssim],
            stage1,
            init_gaussians: 120,
            variants: standard_variants(&stage2),
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants to run".into()));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.variants.len() {
            return Err(Error::Config("variant names must be unique".into()));
        }
        for v in &self.variants {
            if v.name.is_empty() || v.name.contains(['/', '\\']) {
                return Err(Error::Config(format!(
                    "variant name `{}` is not a valid directory name",
                    v.name
                )));
            }
        }
        if self.init_gaussians == 0 {
            return Err(Error::Config("init_gaussians must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub variant: String,
    pub view_id: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Stage or variant failures, in the order they occurred. Earlier
    /// results stay on disk and in `rows`.
    pub failures: Vec<String>,
    pub out_dir: PathBuf,
}

impl ExperimentReport {
    /// Mean over the per-view rows of one variant.
    pub fn variant_mean(&self, variant: &str, metric: Metric) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.view_id != "mean")
            .map(|r| match metric {
                Metric::Psnr => r.psnr,
                Metric::Ssim => r.ssim,
            })
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub threshold: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Everything shared by the stage-2 variants: the dataset split, the
/// frozen stage-1 scene with its smoothing, and per-view guidance.
struct Prepared {
    holdout: Vec<ViewData>,
    factor: usize,
    stage1_scene: Vec<Gaussian3D>,
    stage1_sigmas: Vec<f64>,
    hr_views: Vec<HrView>,
    /// Holdout id, HR camera, and f32-quantized ground truth.
    hr_holdout: Vec<(String, Camera, ImageBuffer)>,
}

fn partition_views(
    ds: &GeneratedDataset,
    holdout_ids: &[String],
) -> Result<(Vec<ViewData>, Vec<ViewData>)> {
    if holdout_ids.is_empty() {
        if ds.train_views.is_empty() || ds.holdout_views.is_empty() {
            return Err(Error::Config(
                "dataset must provide at least one training and one holdout view".into(),
            ));
        }
        return Ok((ds.train_views.clone(), ds.holdout_views.clone()));
    }
    let pool: Vec<ViewData> = ds
        .train_views
        .iter()
        .chain(&ds.holdout_views)
        .cloned()
        .collect();
    for id in holdout_ids {
        if !pool.iter().any(|v| &v.view_id == id) {
            return Err(Error::Config(format!("holdout view `{id}` not in dataset")));
        }
    }
    let (holdout, train): (Vec<ViewData>, Vec<ViewData>) = pool
        .into_iter()
        .partition(|v| holdout_ids.contains(&v.view_id));
    if train.is_empty() {
        return Err(Error::Config("holdout override leaves no training views".into()));
    }
    Ok((train, holdout))
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Smooth low-frequency noise field, one value per pixel in [-amp, amp].
fn smooth_noise(width: usize, height: usize, seed: u64, amp: f64) -> ImageBuffer {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut coarse = ImageBuffer::new(7, 7, 1);
    for v in &mut coarse.data {
        *v = rng.random_range(-amp..amp);
    }
    resample::resize(&coarse, width, height)
}

/// Writes the external guidance files (image FIMG + viewing PNG + depth
/// FIMG) plus the manifest that names them, and returns the loaded
/// manifest. An existing manifest source is loaded as-is.
fn write_external_guidance(
    source: &ExternalSource,
    layout: &GuidanceLayout,
    train: &[ViewData],
    factor: usize,
    internal: &BTreeMap<String, (ImageBuffer, DepthBuffer)>,
) -> Result<GuidanceManifest> {
    if let ExternalSource::Manifest(path) = source {
        return GuidanceManifest::load(path, factor);
    }
    create_dir(&layout.external_dir())?;
    let mut entries = Vec::with_capacity(train.len());
    let provenance = match source {
        ExternalSource::Bicubic { .. } => Provenance::BicubicFallback,
        _ => Provenance::Ingested,
    };
    for (idx, v) in train.iter().enumerate() {
        let (image, depth) = match source {
            ExternalSource::GroundTruth => (v.hr_image.clone(), v.hr_depth.clone()),
            ExternalSource::CorruptedGroundTruth {
                seed,
                n_blobs,
                strength,
                radius_frac,
            } => (
                scenegen::corrupt_image(
                    &v.hr_image,
                    seed.wrapping_add(idx as u64),
                    *n_blobs,
                    *strength,
                    *radius_frac,
                ),
                v.hr_depth.clone(),
            ),
            ExternalSource::Bicubic { seed, noise } => {
                let image = guidance::bicubic_fallback(&v.lr_image, factor)?;
                let (_, int_depth) = internal
                    .get(&v.view_id)
                    .ok_or_else(|| Error::Config(format!("no internal render for {}", v.view_id)))?;
                let mut depth = int_depth.clone();
                let field = smooth_noise(
                    depth.width,
                    depth.height,
                    seed.wrapping_add(idx as u64),
                    *noise,
                );
                for (d, n) in depth.depth.iter_mut().zip(&field.data) {
                    *d += n;
                }
                (image, depth)
            }
            ExternalSource::Manifest(_) => unreachable!("handled above"),
        };
        let image_rel = PathBuf::from(format!("{}.fimg", v.view_id));
        let depth_rel = PathBuf::from(format!("{}_depth.fimg", v.view_id));
        fimg::write_image(&layout.external_dir().join(&image_rel), &image)?;
        fimg::write_depth(&layout.external_dir().join(&depth_rel), &depth)?;
        pngio::write_png(&layout.external_image(&v.view_id), &image)?;
        entries.push(ManifestEntry {
            view_id: v.view_id.clone(),
            image_path: image_rel,
            depth_path: depth_rel,
        });
    }
    manifest_io::save_manifest(&layout.manifest_path(), &entries)?;
    let mut manifest = GuidanceManifest::load(&layout.manifest_path(), factor)?;
    manifest.provenance = provenance;
    Ok(manifest)
}

/// The guidance bundle stage 2 consumes, plus the frozen model's
/// smoothing (needed to render it for comparison).
pub struct BuiltGuidance {
    pub hr_views: Vec<HrView>,
    pub stage1_sigmas: Vec<f64>,
}

/// Builds the complete guidance directory under `root` for a frozen
/// stage-1 scene: internal SR-splats cached under `root/internal`,
/// external image/depth files under `root/external` (unless `external`
/// names an existing manifest), and the validated per-view join.
pub fn build_guidance(
    stage1_scene: &[Gaussian3D],
    train: &[ViewData],
    factor: usize,
    external: &ExternalSource,
    cfg: &TrainConfig,
    root: &Path,
) -> Result<BuiltGuidance> {
    if train.is_empty() {
        return Err(Error::Config("no training views to build guidance for".into()));
    }
    let lr_cams: Vec<Camera> = train.iter().map(|v| v.camera.clone()).collect();
    let stage1_sigmas = compute_sampling_sigmas(
        stage1_scene,
        &lr_cams,
        cfg.sampling_k,
        DEFAULT_NEAR_PLANE,
        cfg.sampling_fallback_sigma,
    );

    let layout = GuidanceLayout::new(root);
    let id_cams: Vec<(String, Camera)> = train
        .iter()
        .map(|v| (v.view_id.clone(), v.camera.clone()))
        .collect();
    let settings = RenderSettings::default();
    let internal = guidance::build_internal_guidance(
        stage1_scene,
        Some(&stage1_sigmas),
        &id_cams,
        factor as f64,
        &settings,
        Some(&layout.internal_dir()),
    )?;

    let manifest = write_external_guidance(external, &layout, train, factor, &internal)?;
    let hr_dims = (
        train[0].camera.width as usize * factor,
        train[0].camera.height as usize * factor,
    );
    let external_map = guidance::ingest_external(&manifest, hr_dims)?;
    let sets = guidance::assemble(external_map, internal)?;
    let mut by_id: BTreeMap<String, GuidanceSet> =
        sets.into_iter().map(|s| (s.view_id.clone(), s)).collect();
    let mut hr_views = Vec::with_capacity(train.len());
    for v in train {
        let set = by_id
            .remove(&v.view_id)
            .ok_or_else(|| Error::Config(format!("no guidance for view {}", v.view_id)))?;
        hr_views.push(HrView {
            view_id: v.view_id.clone(),
            camera: v.camera.clone(),
            guidance: set,
        });
    }
    Ok(BuiltGuidance {
        hr_views,
        stage1_sigmas,
    })
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let dataset = match &spec.source {
        SceneSource::Generated(ds_spec) => {
            let ds = scenegen::generate_dataset(ds_spec)?;
            scenegen::save_dataset(&spec.out_dir.join("dataset"), &ds)?;
            ds
        }
        SceneSource::Files(dir) => scenegen::load_dataset(dir)?,
    };
    let factor = dataset.factor;
    let (train, holdout) = partition_views(&dataset, &spec.holdout_ids)?;

    let init = scenegen::generate_gaussians(spec.stage1.seed, spec.init_gaussians, Layout::Cluster);
    let lr_views: Vec<TrainView> = train
        .iter()
        .map(|v| TrainView {
            view_id: v.view_id.clone(),
            camera: v.camera.clone(),
            target: v.lr_image.clone(),
        })
        .collect();
    let lr_holdout: Vec<TrainView> = holdout
        .iter()
        .map(|v| TrainView {
            view_id: v.view_id.clone(),
            camera: v.camera.clone(),
            target: v.lr_image.clone(),
        })
        .collect();
    let stage1_out = train_internal(&init, &lr_views, &lr_holdout, &spec.stage1)?;

    let stage1_dir = spec.out_dir.join("stage1");
    create_dir(&stage1_dir)?;
    scene_io::save_scene(&stage1_dir.join("scene.txt"), &stage1_out.scene)?;
    train::save_optimizer_state(
        &stage1_dir.join("state.iesr"),
        &stage1_out.raw,
        &stage1_out.optimizer,
    )?;
    train::write_log_csv(&stage1_dir.join("log.csv"), &stage1_out.log)?;

    let built = build_guidance(
        &stage1_out.scene,
        &train,
        factor,
        &spec.external,
        &spec.stage1,
        &spec.out_dir.join("guidance"),
    )?;

    let hr_holdout: Vec<(String, Camera, ImageBuffer)> = holdout
        .iter()
        .map(|v| {
            let mut gt = v.hr_image.clone();
            gt.quantize_f32();
            (v.view_id.clone(), v.camera.scaled(factor as f64), gt)
        })
        .collect();

    Ok(Prepared {
        holdout,
        factor,
        stage1_scene: stage1_out.scene,
        stage1_sigmas: built.stage1_sigmas,
        hr_views: built.hr_views,
        hr_holdout,
    })
}

/// Discrepancy maps and binary masks for every training view, written as
/// PNGs under `masks/`. Uses the first mask-fused variant's loss settings
/// (default settings when no variant masks).
fn write_mask_visualizations(spec: &ExperimentSpec, prep: &Prepared) -> Result<()> {
    let loss_cfg = spec
        .variants
        .iter()
        .filter_map(|v| v.train.as_ref())
        .map(|c| &c.loss)
        .find(|l| l.texture_mode == TextureMode::MaskFused)
        .cloned()
        .unwrap_or_default();
    let dir = spec.out_dir.join("masks");
    create_dir(&dir)?;
    for v in &prep.hr_views {
        let d = maskops::discrepancy_map(
            &v.guidance.internal_image,
            &v.guidance.external_image,
            loss_cfg.epsilon,
        );
        let m = maskops::binary_mask(&d, loss_cfg.threshold);
        pngio::write_png(&dir.join(format!("{}_discrepancy.png", v.view_id)), &d)?;
        pngio::write_mask_png(&dir.join(format!("{}_mask.png", v.view_id)), &m)?;
    }
    Ok(())
}

/// Renders one scene at every holdout view, quantizes to the on-disk
/// representation, optionally saves render files, and returns the images
/// keyed by view id.
fn eval_variant(
    scene: &[Gaussian3D],
    sigmas: &[f64],
    prep: &Prepared,
    save_dir: Option<&Path>,
) -> Result<BTreeMap<String, ImageBuffer>> {
    let settings = RenderSettings::default();
    let mut renders = BTreeMap::new();
    for (id, cam, _) in &prep.hr_holdout {
        let mut out = render(scene, cam, Some(sigmas), &settings);
        out.image.quantize_f32();
        out.depth.quantize_f32();
        if let Some(dir) = save_dir {
            fimg::write_image(&dir.join(format!("{id}.fimg")), &out.image)?;
            pngio::write_png(&dir.join(format!("{id}.png")), &out.image)?;
            pngio::write_depth_png(&dir.join(format!("{id}_depth.png")), &out.depth)?;
        }
        renders.insert(id.clone(), out.image);
    }
    Ok(renders)
}

fn metric_rows(
    variant: &str,
    renders: &BTreeMap<String, ImageBuffer>,
    prep: &Prepared,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (id, _, gt) in &prep.hr_holdout {
        let img = &renders[id];
        let psnr = metrics::psnr(img, gt)?;
        let ssim = metrics::ssim(img, gt)?;
        psnr_sum += psnr;
        ssim_sum += ssim;
        rows.push(ReportRow {
            variant: variant.to_string(),
            view_id: id.clone(),
            psnr,
            ssim,
        });
    }
    let n = prep.hr_holdout.len() as f64;
    rows.push(ReportRow {
        variant: variant.to_string(),
        view_id: "mean".into(),
        psnr: psnr_sum / n,
        ssim: ssim_sum / n,
    });
    Ok(rows)
}

fn write_report_csv(spec: &ExperimentSpec, rows: &[ReportRow]) -> Result<()> {
    let mut out = String::from("variant,view_id");
    for m in &spec.metrics {
        write!(out, ",{}", m.name()).expect("string write");
    }
    out.push('\n');
    for r in rows {
        write!(out, "{},{}", r.variant, r.view_id).expect("string write");
        for m in &spec.metrics {
            let v = match m {
                Metric::Psnr => r.psnr,
                Metric::Ssim => r.ssim,
            };
            write!(out, ",{}", format_metric(v)).expect("string write");
        }
        out.push('\n');
    }
    let path = spec.out_dir.join("report.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty report"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let psnr_col = cols.iter().position(|c| *c == "psnr");
    let ssim_col = cols.iter().position(|c| *c == "ssim");
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cols.len() {
            return Err(Error::parse(path, i + 1, "column count mismatch"));
        }
        let grab = |col: Option<usize>| -> Result<f64> {
            match col {
                None => Ok(f64::NAN),
                Some(c) => parse_metric(parts[c])
                    .ok_or_else(|| Error::parse(path, i + 1, format!("bad metric `{}`", parts[c]))),
            }
        };
        rows.push(ReportRow {
            variant: parts[0].to_string(),
            view_id: parts[1].to_string(),
            psnr: grab(psnr_col)?,
            ssim: grab(ssim_col)?,
        });
    }
    Ok(rows)
}

fn nearest_upscale(img: &ImageBuffer, factor: usize) -> ImageBuffer {
    let mut out = ImageBuffer::new(img.width * factor, img.height * factor, img.channels);
    for y in 0..out.height {
        for x in 0..out.width {
            for ch in 0..img.channels {
                out.set(x, y, ch, img.get(x / factor, y / factor, ch));
            }
        }
    }
    out
}

fn as_rgb(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 3 {
        return img.clone();
    }
    let mut out = ImageBuffer::new(img.width, img.height, 3);
    for i in 0..img.width * img.height {
        for ch in 0..3 {
            out.data[i * 3 + ch] = img.data[i];
        }
    }
    out
}

/// Panels side by side with a 2-pixel white gap, all forced to RGB.
fn hstack(panels: &[&ImageBuffer]) -> ImageBuffer {
    const GAP: usize = 2;
    let height = panels[0].height;
    let width: usize =
        panels.iter().map(|p| p.width).sum::<usize>() + GAP * (panels.len() - 1);
    let mut out = ImageBuffer::filled(width, height, 3, 1.0);
    let mut x0 = 0;
    for p in panels {
        let rgb = as_rgb(p);
        for y in 0..rgb.height.min(height) {
            for x in 0..rgb.width {
                for ch in 0..3 {
                    out.set(x0 + x, y, ch, rgb.get(x, y, ch));
                }
            }
        }
        x0 += p.width + GAP;
    }
    out
}

/// Per holdout view: LR input (pixel-replicated to HR), the internal and
/// fused variants' renders when present, and ground truth.
fn write_grids(
    spec: &ExperimentSpec,
    prep: &Prepared,
    renders: &BTreeMap<String, BTreeMap<String, ImageBuffer>>,
) -> Result<()> {
    let dir = spec.out_dir.join("grids");
    create_dir(&dir)?;
    for v in &prep.holdout {
        let lr_up = nearest_upscale(&v.lr_image, prep.factor);
        let mut panels: Vec<&ImageBuffer> = vec![&lr_up];
        for name in ["internal", "fused"] {
            if let Some(img) = renders.get(name).and_then(|m| m.get(&v.view_id)) {
                panels.push(img);
            }
        }
        let (_, _, gt) = prep
            .hr_holdout
            .iter()
            .find(|(id, _, _)| id == &v.view_id)
            .expect("holdout ids align");
        panels.push(gt);
        pngio::write_png(&dir.join(format!("{}.png", v.view_id)), &hstack(&panels))?;
    }
    Ok(())
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    create_dir(&spec.out_dir)?;
    let mut report = ExperimentReport {
        rows: Vec::new(),
        failures: Vec::new(),
        out_dir: spec.out_dir.clone(),
    };

    let prep = match prepare(spec) {
        Ok(p) => p,
        Err(e) => {
            report.failures.push(format!("setup: {e}"));
            finish_report(spec, &report)?;
            return Ok(report);
        }
    };
    if let Err(e) = write_mask_visualizations(spec, &prep) {
        report.failures.push(format!("masks: {e}"));
    }

    let hr_train_cams: Vec<Camera> = prep
        .hr_views
        .iter()
        .map(|v| v.camera.scaled(prep.factor as f64))
        .collect();
    let mut all_renders: BTreeMap<String, BTreeMap<String, ImageBuffer>> = BTreeMap::new();

    for variant in &spec.variants {
        let vdir = spec.out_dir.join("variants").join(&variant.name);
        let rdir = vdir.join("renders");
        if let Err(e) = create_dir(&rdir) {
            report.failures.push(format!("variant {}: {e}", variant.name));
            continue;
        }
        let outcome = match &variant.train {
            None => None,
            Some(cfg) => {
                let mut cfg = cfg.clone();
                cfg.scale_factor = prep.factor as f64;
                let hr_holdout_log: Vec<(Camera, ImageBuffer)> = prep
                    .hr_holdout
                    .iter()
                    .map(|(_, c, img)| (c.clone(), img.clone()))
                    .collect();
                match train_hr(&prep.stage1_scene, &prep.hr_views, &hr_holdout_log, &cfg) {
                    Ok(out) => Some((out, cfg)),
                    Err(e) => {
                        report.failures.push(format!("variant {}: {e}", variant.name));
                        continue;
                    }
                }
            }
        };
        let (scene, sigmas) = match &outcome {
            None => (&prep.stage1_scene, prep.stage1_sigmas.clone()),
            Some((out, cfg)) => {
                if let Err(e) = scene_io::save_scene(&vdir.join("scene.txt"), &out.scene)
                    .and_then(|_| {
                        train::save_optimizer_state(
                            &vdir.join("state.iesr"),
                            &out.raw,
                            &out.optimizer,
                        )
                    })
                    .and_then(|_| train::write_log_csv(&vdir.join("log.csv"), &out.log))
                {
                    report.failures.push(format!("variant {}: {e}", variant.name));
                }
                let sigmas = compute_sampling_sigmas(
                    &out.scene,
                    &hr_train_cams,
                    cfg.sampling_k,
                    DEFAULT_NEAR_PLANE,
                    cfg.sampling_fallback_sigma,
                );
                (&out.scene, sigmas)
            }
        };
        match eval_variant(scene, &sigmas, &prep, Some(&rdir)) {
            Ok(renders) => {
                match metric_rows(&variant.name, &renders, &prep) {
                    Ok(mut rows) => report.rows.append(&mut rows),
                    Err(e) => report.failures.push(format!("variant {}: {e}", variant.name)),
                }
                all_renders.insert(variant.name.clone(), renders);
            }
            Err(e) => report.failures.push(format!("variant {}: {e}", variant.name)),
        }
    }

    if let Err(e) = write_grids(spec, &prep, &all_renders) {
        report.failures.push(format!("grids: {e}"));
    }
    finish_report(spec, &report)?;
    Ok(report)
}

fn finish_report(spec: &ExperimentSpec, report: &ExperimentReport) -> Result<()> {
    write_report_csv(spec, &report.rows)?;
    if !report.failures.is_empty() {
        let path = spec.out_dir.join("failures.txt");
        std::fs::write(&path, report.failures.join("\n") + "\n")
            .map_err(|e| Error::io(&path, e))?;
        for f in &report.failures {
            log::warn!("experiment failure: {f}");
        }
    }
    Ok(())
}

/// Runs the fused stage-2 configuration once per threshold value against
/// one shared stage-1 model and guidance build, and writes the resulting
/// holdout-metric curve to `sweep.csv`.
pub fn sweep_threshold(spec: &ExperimentSpec, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if thresholds.is_empty() {
        return Err(Error::Config("no thresholds to sweep".into()));
    }
    create_dir(&spec.out_dir)?;
    let prep = prepare(spec)?;

    let base = spec
        .variants
        .iter()
        .filter_map(|v| v.train.as_ref())
        .find(|c| c.loss.texture_mode == TextureMode::MaskFused)
        .or_else(|| spec.variants.iter().filter_map(|v| v.train.as_ref()).next())
        .cloned()
        .unwrap_or_default();
    let hr_train_cams: Vec<Camera> = prep
        .hr_views
        .iter()
        .map(|v| v.camera.scaled(prep.factor as f64))
        .collect();
    let hr_holdout_log: Vec<(Camera, ImageBuffer)> = prep
        .hr_holdout
        .iter()
        .map(|(_, c, img)| (c.clone(), img.clone()))
        .collect();

    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
        }
        let mut cfg = base.clone();
        cfg.scale_factor = prep.factor as f64;
        cfg.loss.texture_mode = TextureMode::MaskFused;
        cfg.loss.threshold = t;
        let out = train_hr(&prep.stage1_scene, &prep.hr_views, &hr_holdout_log, &cfg)?;
        let sigmas = compute_sampling_sigmas(
            &out.scene,
            &hr_train_cams,
            cfg.sampling_k,
            DEFAULT_NEAR_PLANE,
            cfg.sampling_fallback_sigma,
        );
        let renders = eval_variant(&out.scene, &sigmas, &prep, None)?;
        let metric = metric_rows("sweep", &renders, &prep)?;
        let mean = metric.last().expect("mean row always present");
        rows.push(SweepRow {
            threshold: t,
            psnr: mean.psnr,
            ssim: mean.ssim,
        });
    }

    let mut out = String::from("threshold,psnr,ssim\n");
    for r in &rows {
        writeln!(
            out,
            "{},{},{}",
            r.threshold,
            format_metric(r.psnr),
            format_metric(r.ssim)
        )
        .expect("string write");
    }
    let path = spec.out_dir.join("sweep.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::parse(path, i + 1, "expected 3 columns"));
        }
        let get = |s: &str| {
            parse_metric(s).ok_or_else(|| Error::parse(path, i + 1, format!("bad value `{s}`")))
        };
        rows.push(SweepRow {
            threshold: get(parts[0])?,
            psnr: get(parts[1])?,
            ssim: get(parts[2])?,
        });
    }
    Ok(rows)
}
