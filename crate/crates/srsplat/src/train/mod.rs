//! Two-stage optimization.
//!
//! Stage 1 fits a smoothed multi-scale model to LR views with multi-view
//! batched steps. Stage 2 copies that frozen model and continues at HR
//! against per-view guidance with the fused texture and geometry
//! objective. Both stages share one loop: sample `mv_views` views without
//! replacement, sum the per-view gradients, take one optimizer step, then
//! run density control and smoothing updates on their schedules.

pub mod adam;
pub mod densify;
pub mod params;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::buffer::{ImageBuffer, MaskBuffer};
use crate::camera::{Camera, DEFAULT_NEAR_PLANE};
use crate::config::TrainConfig;
use crate::error::Error;
use crate::gaussian::{compute_sampling_sigmas, Gaussian3D};
use crate::guidance::GuidanceSet;
use crate::loss::{self, mask as maskops, texture_loss, LossConfig, TextureMode};
use crate::metrics;
use crate::render::{render, render_backward, RenderSettings};
use crate::Result;

use adam::{Adam, GroupLrs};
use densify::{densify_and_prune, DensifyStats};
use params::ParamVecs;

/// One LR training view: its camera and ground-truth image.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub view_id: String,
    pub camera: Camera,
    pub target: ImageBuffer,
}

/// One HR training view: the LR camera (scaled internally by the config's
/// factor) and its guidance.
#[derive(Debug, Clone)]
pub struct HrView {
    pub view_id: String,
    pub camera: Camera,
    pub guidance: GuidanceSet,
}

#[derive(Debug, Clone)]
pub struct LogRow {
    pub step: usize,
    pub loss_total: f64,
    pub loss_tex: f64,
    pub loss_gem: f64,
    pub psnr_holdout: f64,
    pub num_gaussians: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub scene: Vec<Gaussian3D>,
    pub log: Vec<LogRow>,
    pub raw: ParamVecs,
    pub optimizer: Adam,
}

/// Serializes the pre-activation parameters and optimizer moments into
/// the binary state container. The activated scene itself travels in its
/// own text file; this holds everything else needed to describe the run.
pub fn save_optimizer_state(path: &Path, raw: &ParamVecs, opt: &Adam) -> Result<()> {
    let mut ck = crate::io::checkpoint::Checkpoint::new();
    let groups: [(&str, &ParamVecs); 3] = [("raw", raw), ("adam.m", &opt.m), ("adam.v", &opt.v)];
    for (prefix, p) in groups {
        let fields: [(&str, &[f64]); 5] = [
            ("position", &p.position),
            ("scale", &p.scale),
            ("rotation", &p.rotation),
            ("color", &p.color),
            ("opacity", &p.opacity),
        ];
        for (name, data) in fields {
            ck.push(
                &format!("{prefix}.{name}"),
                data.iter().map(|&x| x as f32).collect(),
            );
        }
    }
    ck.push("step", vec![opt.t as f32]);
    crate::io::checkpoint::write_checkpoint(path, &ck)
}

/// Inverse of [`save_optimizer_state`]. The round trip narrows to f32,
/// so the result seeds a fresh run rather than resuming the old one
/// bit-for-bit.
pub fn load_optimizer_state(path: &Path) -> Result<(ParamVecs, Adam)> {
    let ck = crate::io::checkpoint::read_checkpoint(path)?;
    let read_group = |prefix: &str| -> Result<ParamVecs> {
        let grab = |name: &str| -> Result<Vec<f64>> {
            Ok(ck
                .require(path, &format!("{prefix}.{name}"))?
                .iter()
                .map(|&x| x as f64)
                .collect())
        };
        let p = ParamVecs {
            position: grab("position")?,
            scale: grab("scale")?,
            rotation: grab("rotation")?,
            color: grab("color")?,
            opacity: grab("opacity")?,
        };
        let n = p.opacity.len();
        if p.position.len() != 3 * n
            || p.scale.len() != 3 * n
            || p.rotation.len() != 4 * n
            || p.color.len() != 3 * n
        {
            return Err(Error::format(
                path,
                format!("field group `{prefix}` has inconsistent lengths"),
            ));
        }
        Ok(p)
    };
    let raw = read_group("raw")?;
    let m = read_group("adam.m")?;
    let v = read_group("adam.v")?;
    let step = ck.require(path, "step")?;
    if m.len() != raw.len() || v.len() != raw.len() || step.len() != 1 {
        return Err(Error::format(
            path,
            "optimizer state does not match parameter count",
        ));
    }
    let t = step[0] as u64;
    Ok((raw, Adam { m, v, t }))
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from("step,loss_total,loss_tex,loss_gem,psnr_holdout,num_gaussians\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            metrics::format_metric(r.loss_total),
            metrics::format_metric(r.loss_tex),
            metrics::format_metric(r.loss_gem),
            metrics::format_metric(r.psnr_holdout),
            r.num_gaussians
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

enum Supervision<'a> {
    /// Plain texture loss against a fixed target image.
    Plain(&'a ImageBuffer),
    /// Full fused objective against a guidance set, with the per-view
    /// discrepancy mask precomputed (guidance is frozen, so it never
    /// changes during the run).
    Guided {
        set: &'a GuidanceSet,
        mask: Option<MaskBuffer>,
    },
}

struct ViewTask<'a> {
    camera: Camera,
    supervision: Supervision<'a>,
}

/// Renders each holdout camera and averages PSNR against its target.
fn holdout_psnr(
    scene: &[Gaussian3D],
    smoothing: &[f64],
    holdout: &[(Camera, ImageBuffer)],
    settings: &RenderSettings,
) -> f64 {
    if holdout.is_empty() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (cam, target) in holdout {
        let out = render(scene, cam, Some(smoothing), settings);
        acc += metrics::psnr(&out.image, target).expect("holdout dims fixed at setup");
    }
    acc / holdout.len() as f64
}

fn run_training(
    init: &[Gaussian3D],
    tasks: &[ViewTask],
    holdout: &[(Camera, ImageBuffer)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::Config("no training views".into()));
    }
    if cfg.mv_views > tasks.len() {
        return Err(Error::Config(format!(
            "mv_views = {} exceeds the {} training views",
            cfg.mv_views,
            tasks.len()
        )));
    }
    if init.is_empty() {
        return Err(Error::Config("initial scene is empty".into()));
    }

    let settings = RenderSettings::default();
    let sigma_cams: Vec<Camera> = tasks.iter().map(|t| t.camera.clone()).collect();
    let recompute_sigmas = |scene: &[Gaussian3D]| {
        compute_sampling_sigmas(
            scene,
            &sigma_cams,
            cfg.sampling_k,
            DEFAULT_NEAR_PLANE,
            cfg.sampling_fallback_sigma,
        )
    };

    // The activated cache starts as an exact copy of the input so the
    // first step (and a zero-iteration run) sees the frozen scene bitwise.
    let mut scene = init.to_vec();
    let mut raw = ParamVecs::from_scene(init);
    let mut opt = Adam::new(raw.len());
    let mut stats = DensifyStats::new(raw.len());
    let mut sigmas = recompute_sigmas(&scene);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut recent = VecDeque::with_capacity(10);
    let mut log = Vec::new();
    let mut view_order: Vec<usize> = (0..tasks.len()).collect();

    for step in 0..cfg.iterations {
        view_order.shuffle(&mut rng);
        let chosen = &view_order[..cfg.mv_views];

        let mut grads = crate::render::RenderGradients::zeros(raw.len());
        let mut loss_total = 0.0;
        let mut loss_tex = 0.0;
        let mut loss_gem = 0.0;
        for &vi in chosen {
            let task = &tasks[vi];
            let out = render(&scene, &task.camera, Some(&sigmas), &settings);
            let g = match &task.supervision {
                Supervision::Plain(target) => {
                    let (l, d_image) = texture_loss(target, &out.image, &cfg.loss, None);
                    loss_total += l;
                    loss_tex += l;
                    render_backward(&scene, &task.camera, Some(&sigmas), &settings, &d_image, None)
                }
                Supervision::Guided { set, mask } => {
                    let fl = loss::final_loss(&out.image, &out.depth, set, mask.as_ref(), &cfg.loss);
                    loss_total += fl.total;
                    loss_tex += fl.texture;
                    loss_gem += fl.geometry;
                    render_backward(
                        &scene,
                        &task.camera,
                        Some(&sigmas),
                        &settings,
                        &fl.d_image,
                        Some(&fl.d_depth),
                    )
                }
            };
            grads.add(&g);
        }

        if !loss_total.is_finite() {
            let dump: Vec<f64> = recent.iter().copied().collect();
            return Err(Error::Numerical(format!(
                "loss diverged at step {step}; last losses: {dump:?}"
            )));
        }
        if recent.len() == 10 {
            recent.pop_front();
        }
        recent.push_back(loss_total);

        let zeroed = grads.sanitize();
        if zeroed > 0 {
            log::warn!("step {step}: zeroed non-finite gradients on {zeroed} gaussians");
        }
        stats.observe(&grads);

        let raw_grads = raw.chain_grads(&scene, &grads);
        let lrs = GroupLrs {
            position: cfg.lr_position_at(step, cfg.iterations),
            scale: cfg.lr_scale,
            rotation: cfg.lr_rotation,
            color: cfg.lr_color,
            opacity: cfg.lr_opacity,
        };
        opt.step(&mut raw, &raw_grads, &lrs);
        raw.renormalize_rotations();
        scene = raw.to_scene();

        let t = step + 1;
        let mut refresh_sigmas = t % cfg.smoothing_update_interval == 0;
        if cfg.densify_enabled
            && t >= cfg.densify_start
            && t <= cfg.densify_end
            && t % cfg.densify_interval == 0
        {
            let report = densify_and_prune(&mut raw, &mut opt, &stats, cfg, &mut rng);
            if report != densify::DensifyReport::default() {
                log::debug!(
                    "step {step}: densify cloned {} split {} pruned {}",
                    report.cloned,
                    report.split,
                    report.pruned
                );
            }
            stats = DensifyStats::new(raw.len());
            scene = raw.to_scene();
            refresh_sigmas = true;
        }
        if refresh_sigmas {
            sigmas = recompute_sigmas(&scene);
        }

        if t % cfg.log_interval == 0 || t == cfg.iterations {
            log.push(LogRow {
                step: t,
                loss_total,
                loss_tex,
                loss_gem,
                psnr_holdout: holdout_psnr(&scene, &sigmas, holdout, &settings),
                num_gaussians: scene.len(),
            });
        }
    }

    Ok(TrainOutcome {
        scene,
        log,
        raw,
        optimizer: opt,
    })
}

/// Stage 1: fits the internal model to LR views. The result is rendered
/// with 3D smoothing derived from the LR cameras; texture supervision only.
pub fn train_internal(
    init: &[Gaussian3D],
    views: &[TrainView],
    holdout: &[TrainView],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    for v in views {
        if v.target.channels != 3 {
            return Err(Error::Config(format!(
                "view {}: training targets must be 3-channel",
                v.view_id
            )));
        }
        if (v.target.width, v.target.height)
            != (v.camera.width as usize, v.camera.height as usize)
        {
            return Err(Error::Config(format!(
                "view {}: target is {}x{} but camera renders {}x{}",
                v.view_id, v.target.width, v.target.height, v.camera.width, v.camera.height
            )));
        }
    }
    let tasks: Vec<ViewTask> = views
        .iter()
        .map(|v| ViewTask {
            camera: v.camera.clone(),
            supervision: Supervision::Plain(&v.target),
        })
        .collect();
    let holdout: Vec<(Camera, ImageBuffer)> = holdout
        .iter()
        .map(|v| (v.camera.clone(), v.target.clone()))
        .collect();
    run_training(init, &tasks, &holdout, cfg)
}

/// The per-view discrepancy masks stage 2 trains with (internal vs
/// external guidance, Eq. mask semantics from the loss module). Only
/// mask-fused texture mode uses them.
pub fn precompute_masks(views: &[HrView], loss_cfg: &LossConfig) -> Vec<Option<MaskBuffer>> {
    views
        .iter()
        .map(|v| {
            if loss_cfg.texture_mode == TextureMode::MaskFused {
                let d = maskops::discrepancy_map(
                    &v.guidance.internal_image,
                    &v.guidance.external_image,
                    loss_cfg.epsilon,
                );
                Some(maskops::binary_mask(&d, loss_cfg.threshold))
            } else {
                None
            }
        })
        .collect()
}

/// Stage 2: warm-starts from the frozen internal scene and optimizes at HR
/// (cameras scaled by the config factor) against fused guidance.
pub fn train_hr(
    internal_scene: &[Gaussian3D],
    views: &[HrView],
    holdout: &[(Camera, ImageBuffer)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let masks = precompute_masks(views, &cfg.loss);
    let mut tasks = Vec::with_capacity(views.len());
    for (v, mask) in views.iter().zip(masks) {
        let hr_cam = v.camera.scaled(cfg.scale_factor);
        let (w, h) = (hr_cam.width as usize, hr_cam.height as usize);
        if (v.guidance.external_image.width, v.guidance.external_image.height) != (w, h) {
            return Err(Error::Config(format!(
                "view {}: guidance is {}x{} but the HR camera renders {w}x{h}",
                v.view_id, v.guidance.external_image.width, v.guidance.external_image.height
            )));
        }
        v.guidance.validate().map_err(Error::Config)?;
        tasks.push(ViewTask {
            camera: hr_cam,
            supervision: Supervision::Guided {
                set: &v.guidance,
                mask,
            },
        });
    }
    run_training(internal_scene, &tasks, holdout, cfg)
}
