//! Scratch probe for stage-2 configuration tuning. Not part of the crate.

use std::time::Instant;

use srsplat::buffer::ImageBuffer;
use srsplat::camera::{Camera, DEFAULT_NEAR_PLANE};
use srsplat::config::TrainConfig;
use srsplat::experiment::{build_guidance, ExternalSource};
use srsplat::gaussian::{compute_sampling_sigmas, Gaussian3D};
use srsplat::loss::{binary_mask, discrepancy_map, TextureMode};
use srsplat::metrics;
use srsplat::render::{render, RenderSettings};
use srsplat::scenegen::{generate_dataset, generate_gaussians, DatasetSpec, Layout};
use srsplat::train::{train_hr, train_internal, TrainView};

fn holdout_psnr(scene: &[Gaussian3D], sigmas: &[f64], holdout: &[(Camera, ImageBuffer)]) -> f64 {
    let settings = RenderSettings::default();
    let sum: f64 = holdout
        .iter()
        .map(|(cam, gt)| {
            metrics::psnr(&render(scene, cam, Some(sigmas), &settings).image, gt).unwrap()
        })
        .sum();
    sum / holdout.len() as f64
}

fn main() -> srsplat::Result<()> {
    let seed = 0u64;
    let out = std::env::temp_dir().join("srsplat_probe");

    let ds = generate_dataset(&DatasetSpec {
        seed,
        n_gaussians: 100,
        layout: Layout::PackedGrid,
        n_train: 8,
        n_holdout: 2,
        lr_width: 32,
        lr_height: 32,
        factor: 4,
    })?;

    let as_view = |v: &srsplat::scenegen::ViewData| TrainView {
        view_id: v.view_id.clone(),
        camera: v.camera.clone(),
        target: v.lr_image.clone(),
    };
    let lr_views: Vec<TrainView> = ds.train_views.iter().map(as_view).collect();
    let lr_holdout: Vec<TrainView> = ds.holdout_views.iter().map(as_view).collect();

    let hr_holdout: Vec<(Camera, ImageBuffer)> = ds
        .holdout_views
        .iter()
        .map(|v| (v.camera.scaled(4.0), v.hr_image.clone()))
        .collect();
    let hr_train_cams: Vec<Camera> =
        ds.train_views.iter().map(|v| v.camera.scaled(4.0)).collect();
    let lr_train_cams: Vec<Camera> = ds.train_views.iter().map(|v| v.camera.clone()).collect();

    for (s1_iters, s1_init) in [(600usize, 120usize)] {
        let t0 = Instant::now();
        let _ = std::fs::remove_dir_all(&out);
        let init = generate_gaussians(seed.wrapping_add(500), s1_init, Layout::Cluster);
        let stage1_cfg = TrainConfig {
            iterations: s1_iters,
            scale_factor: 1.0,
            seed,
            log_interval: 400,
            ..TrainConfig::default()
        };
        let stage1 = train_internal(&init, &lr_views, &lr_holdout, &stage1_cfg)?;
        let cfg0 = TrainConfig::default();
        let stage1_sigmas = compute_sampling_sigmas(
            &stage1.scene,
            &lr_train_cams,
            cfg0.sampling_k,
            DEFAULT_NEAR_PLANE,
            cfg0.sampling_fallback_sigma,
        );
        let baseline = holdout_psnr(&stage1.scene, &stage1_sigmas, &hr_holdout);
        println!(
            "stage1 {s1_iters} iters init {s1_init}: {} gaussians, baseline {baseline:.2} dB, {:.0}s",
            stage1.scene.len(),
            t0.elapsed().as_secs_f64()
        );

        let gt = build_guidance(
            &stage1.scene,
            &ds.train_views,
            4,
            &ExternalSource::GroundTruth,
            &stage1_cfg,
            &out.join("gt"),
        )?;
        let d = discrepancy_map(
            &gt.hr_views[0].guidance.internal_image,
            &gt.hr_views[0].guidance.external_image,
            1e-6,
        );
        let m = binary_mask(&d, 0.6);
        let frac =
            m.data.iter().map(|&v| v as usize).sum::<usize>() as f64 / m.data.len() as f64;
        println!("  view 0 masked fraction at T=0.6 = {:.1}%", 100.0 * frac);

        let eval = |label: &str, cfg: &TrainConfig| -> srsplat::Result<f64> {
            let t = Instant::now();
            let outc = train_hr(&stage1.scene, &gt.hr_views, &hr_holdout, cfg)?;
            let sigmas = compute_sampling_sigmas(
                &outc.scene,
                &hr_train_cams,
                cfg.sampling_k,
                DEFAULT_NEAR_PLANE,
                cfg.sampling_fallback_sigma,
            );
            let p = holdout_psnr(&outc.scene, &sigmas, &hr_holdout);
            println!(
                "  {label}: {p:.2} dB ({:+.2} vs baseline), {} gaussians, {:.0}s",
                p - baseline,
                outc.scene.len(),
                t.elapsed().as_secs_f64()
            );
            Ok(p)
        };

        let train_pairs: Vec<(Camera, ImageBuffer)> = ds
            .train_views
            .iter()
            .map(|v| (v.camera.scaled(4.0), v.hr_image.clone()))
            .collect();
        let eval2 = |label: &str, cfg: &TrainConfig| -> srsplat::Result<()> {
            let t = Instant::now();
            let outc = train_hr(&stage1.scene, &gt.hr_views, &hr_holdout, cfg)?;
            for r in &outc.log {
                println!(
                    "    step {} loss {:.4} holdout {:.2} n {}",
                    r.step, r.loss_total, r.psnr_holdout, r.num_gaussians
                );
            }
            let sigmas = compute_sampling_sigmas(
                &outc.scene,
                &hr_train_cams,
                cfg.sampling_k,
                DEFAULT_NEAR_PLANE,
                cfg.sampling_fallback_sigma,
            );
            let p_h = holdout_psnr(&outc.scene, &sigmas, &hr_holdout);
            let p_t = holdout_psnr(&outc.scene, &sigmas, &train_pairs);
            println!(
                "  {label}: holdout {p_h:.2} dB ({:+.2}), train {p_t:.2} dB, {} gaussians, {:.0}s",
                p_h - baseline,
                outc.scene.len(),
                t.elapsed().as_secs_f64()
            );
            Ok(())
        };
        let corrupt = build_guidance(
            &stage1.scene,
            &ds.train_views,
            4,
            &ExternalSource::CorruptedGroundTruth {
                seed: seed.wrapping_add(77),
                n_blobs: 3,
                strength: 0.9,
                radius_frac: 0.12,
            },
            &stage1_cfg,
            &out.join("corrupt"),
        )?;
        let dc = discrepancy_map(
            &corrupt.hr_views[0].guidance.internal_image,
            &corrupt.hr_views[0].guidance.external_image,
            1e-6,
        );
        let mc = binary_mask(&dc, 0.6);
        let fracc =
            mc.data.iter().map(|&v| v as usize).sum::<usize>() as f64 / mc.data.len() as f64;
        println!("  corrupt view 0 masked fraction at T=0.6 = {:.1}%", 100.0 * fracc);

        let evalg = |label: &str, cfg: &TrainConfig, views: &[srsplat::train::HrView], curve: bool| -> srsplat::Result<()> {
            let t = Instant::now();
            let outc = train_hr(&stage1.scene, views, &hr_holdout, cfg)?;
            if curve {
                for r in &outc.log {
                    println!("    step {} loss {:.4} holdout {:.2}", r.step, r.loss_total, r.psnr_holdout);
                }
            }
            let sigmas = compute_sampling_sigmas(
                &outc.scene,
                &hr_train_cams,
                cfg.sampling_k,
                DEFAULT_NEAR_PLANE,
                cfg.sampling_fallback_sigma,
            );
            let p_h = holdout_psnr(&outc.scene, &sigmas, &hr_holdout);
            println!("  {label}: holdout {p_h:.2} dB ({:+.2}), {:.0}s", p_h - baseline, t.elapsed().as_secs_f64());
            Ok(())
        };
        let corrupt_mid = build_guidance(
            &stage1.scene,
            &ds.train_views,
            4,
            &ExternalSource::CorruptedGroundTruth {
                seed: seed.wrapping_add(77),
                n_blobs: 5,
                strength: 1.0,
                radius_frac: 0.17,
            },
            &stage1_cfg,
            &out.join("corrupt_mid"),
        )?;
        let dcm = discrepancy_map(
            &corrupt_mid.hr_views[0].guidance.internal_image,
            &corrupt_mid.hr_views[0].guidance.external_image,
            1e-6,
        );
        for t in [0.3, 0.6, 0.9, 1.0] {
            let m = binary_mask(&dcm, t);
            let f = m.data.iter().map(|&v| v as usize).sum::<usize>() as f64 / m.data.len() as f64;
            println!("  corrupt_mid view 0 masked fraction at T={t} = {:.1}%", 100.0 * f);
        }

        let base2 = TrainConfig {
            iterations: 300,
            scale_factor: 4.0,
            seed,
            log_interval: 50,
            densify_start: 100,
            densify_end: 250,
            ..TrainConfig::default()
        };
        evalg("gt  fused (c07 cfg)", &base2, &gt.hr_views, true)?;
        let mut a1 = base2.clone();
        a1.loss.texture_mode = TextureMode::External;
        a1.loss.lambda_i = 0.0;
        a1.loss.lambda_e = 0.0;
        evalg("mid A1 ext", &a1, &corrupt_mid.hr_views, false)?;
        let mut a2 = base2.clone();
        a2.loss.texture_mode = TextureMode::External;
        a2.loss.lambda_i = 0.0;
        evalg("mid A2 ext+pearson", &a2, &corrupt_mid.hr_views, true)?;
        let mut a3 = base2.clone();
        a3.loss.texture_mode = TextureMode::Both;
        evalg("mid A3 both+geom", &a3, &corrupt_mid.hr_views, false)?;
        evalg("mid A4 fused T=0.6", &base2, &corrupt_mid.hr_views, false)?;
        for t in [0.0f64, 0.3, 0.9, 1.0] {
            let mut c = base2.clone();
            c.loss.threshold = t;
            let label = format!("mid sweep T={t}");
            evalg(&label, &c, &corrupt_mid.hr_views, t == 1.0)?;
        }
    }
    Ok(())
}
