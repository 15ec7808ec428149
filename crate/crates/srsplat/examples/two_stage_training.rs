//! The whole pipeline at desk scale: fit a low-resolution model, freeze
//! it, build both guidance sources at the target resolution, then train a
//! high-resolution model with mask-fused supervision and compare it on a
//! held-out view against simply splatting the frozen model larger.

use std::path::PathBuf;

use srsplat::camera::DEFAULT_NEAR_PLANE;
use srsplat::config::TrainConfig;
use srsplat::experiment::{build_guidance, ExternalSource};
use srsplat::gaussian::compute_sampling_sigmas;
use srsplat::io::{pngio, scene as scene_io};
use srsplat::metrics;
use srsplat::render::{render, RenderSettings};
use srsplat::scenegen::{generate_dataset, generate_gaussians, DatasetSpec, Layout};
use srsplat::train::{train_hr, train_internal, write_log_csv, TrainView};
use srsplat::Camera;

fn main() -> srsplat::Result<()> {
    let out = PathBuf::from("target/examples/two_stage_training");
    std::fs::create_dir_all(&out).map_err(|e| srsplat::Error::io(&out, e))?;

    // Synthetic scene: 32x32 training inputs downsampled from 128x128
    // renders of a known model, so the 4x ground truth is exact.
    let ds = generate_dataset(&DatasetSpec {
        n_train: 6,
        n_holdout: 1,
        ..DatasetSpec::default()
    })?;
    let factor = ds.factor;
    println!(
        "dataset: {} train views at {}x{}, factor {factor}",
        ds.train_views.len(),
        ds.train_views[0].lr_image.width,
        ds.train_views[0].lr_image.height,
    );

    // Stage 1: plain photometric fit of the low-resolution views from a
    // random initialization. scale_factor 1 means cameras are used as-is.
    let stage1_cfg = TrainConfig {
        iterations: 500,
        scale_factor: 1.0,
        log_interval: 100,
        ..TrainConfig::default()
    };
    let init = generate_gaussians(1, 120, Layout::Cluster);
    let as_train_view = |v: &srsplat::scenegen::ViewData| TrainView {
        view_id: v.view_id.clone(),
        camera: v.camera.clone(),
        target: v.lr_image.clone(),
    };
    let lr_views: Vec<TrainView> = ds.train_views.iter().map(as_train_view).collect();
    let lr_holdout: Vec<TrainView> = ds.holdout_views.iter().map(as_train_view).collect();
    let stage1 = train_internal(&init, &lr_views, &lr_holdout, &stage1_cfg)?;
    let last = stage1.log.last().expect("training always logs");
    println!(
        "stage 1: {} steps, loss {:.4}, LR holdout psnr {:.2} dB, {} gaussians",
        last.step, last.loss_total, last.psnr_holdout, last.num_gaussians
    );
    scene_io::save_scene(&out.join("stage1_scene.txt"), &stage1.scene)?;
    write_log_csv(&out.join("stage1_log.csv"), &stage1.log)?;

    // Guidance at the target resolution: external upscaled images and
    // depth (ground-truth files here; swap in any upscaler's output via a
    // manifest), plus internal renders of the frozen stage-1 model at HR
    // intrinsics.
    let guidance = build_guidance(
        &stage1.scene,
        &ds.train_views,
        factor,
        &ExternalSource::GroundTruth,
        &stage1_cfg,
        &out.join("guidance"),
    )?;
    println!(
        "guidance: {} views under {}",
        guidance.hr_views.len(),
        out.join("guidance").display()
    );

    // Stage 2: warm-start from the stage-1 model and train at HR. The
    // default loss mask-fuses the two texture sources per pixel and mixes
    // both geometric terms.
    let stage2_cfg = TrainConfig {
        iterations: 300,
        scale_factor: factor as f64,
        log_interval: 100,
        ..TrainConfig::default()
    };
    let hr_holdout: Vec<(Camera, srsplat::ImageBuffer)> = ds
        .holdout_views
        .iter()
        .map(|v| (v.camera.scaled(factor as f64), v.hr_image.clone()))
        .collect();
    let stage2 = train_hr(&stage1.scene, &guidance.hr_views, &hr_holdout, &stage2_cfg)?;
    let last = stage2.log.last().expect("training always logs");
    println!(
        "stage 2: {} steps, loss {:.4}, HR holdout psnr {:.2} dB, {} gaussians",
        last.step, last.loss_total, last.psnr_holdout, last.num_gaussians
    );
    scene_io::save_scene(&out.join("stage2_scene.txt"), &stage2.scene)?;
    write_log_csv(&out.join("stage2_log.csv"), &stage2.log)?;

    // Head-to-head on the held-out view: the frozen stage-1 model splatted
    // at 4x versus the stage-2 model.
    let settings = RenderSettings::default();
    let (holdout_cam, holdout_gt) = &hr_holdout[0];
    let hr_train_cams: Vec<Camera> = ds
        .train_views
        .iter()
        .map(|v| v.camera.scaled(factor as f64))
        .collect();
    let baseline = render(
        &stage1.scene,
        holdout_cam,
        Some(&guidance.stage1_sigmas),
        &settings,
    );
    let sigmas2 = compute_sampling_sigmas(
        &stage2.scene,
        &hr_train_cams,
        stage2_cfg.sampling_k,
        DEFAULT_NEAR_PLANE,
        stage2_cfg.sampling_fallback_sigma,
    );
    let fused = render(&stage2.scene, holdout_cam, Some(&sigmas2), &settings);

    let p_base = metrics::psnr(&baseline.image, holdout_gt)?;
    let p_fused = metrics::psnr(&fused.image, holdout_gt)?;
    let s_base = metrics::ssim(&baseline.image, holdout_gt)?;
    let s_fused = metrics::ssim(&fused.image, holdout_gt)?;
    println!("holdout {}x{}:", holdout_cam.width, holdout_cam.height);
    println!("  stage-1 splatted at 4x: psnr {p_base:.2} dB, ssim {s_base:.4}");
    println!("  stage-2 fused:          psnr {p_fused:.2} dB, ssim {s_fused:.4}");
    println!("  delta                   {:+.2} dB", p_fused - p_base);
    assert!(
        p_fused > p_base,
        "HR training must beat rendering the LR model larger"
    );

    pngio::write_png(&out.join("holdout_baseline.png"), &baseline.image)?;
    pngio::write_png(&out.join("holdout_fused.png"), &fused.image)?;
    pngio::write_png(&out.join("holdout_gt.png"), holdout_gt)?;
    println!("output in {}", out.display());
    Ok(())
}
