//! Sensitivity of the fusion threshold. The mask sends pixels whose
//! internal/external discrepancy is at or above T back to the internal
//! reference, so T=0 distrusts the external guidance everywhere and T
//! past the discrepancy range trusts it everywhere. With partially
//! corrupted external guidance the useful settings are in between.

use std::path::PathBuf;

use srsplat::config::TrainConfig;
use srsplat::experiment::{
    read_sweep, sweep_threshold, ExperimentSpec, ExternalSource, SceneSource, VariantSpec,
};
use srsplat::scenegen::DatasetSpec;

fn main() -> srsplat::Result<()> {
    let out = PathBuf::from("target/examples/threshold_sweep");

    let dataset = DatasetSpec {
        n_gaussians: 80,
        n_train: 5,
        n_holdout: 1,
        lr_width: 24,
        lr_height: 24,
        ..DatasetSpec::default()
    };
    let stage2 = TrainConfig {
        iterations: 200,
        log_interval: 100,
        ..TrainConfig::default()
    };
    let spec = ExperimentSpec {
        source: SceneSource::Generated(dataset),
        // Blobs of damage in the external images give the mask something
        // real to catch.
        external: ExternalSource::CorruptedGroundTruth {
            seed: 9,
            n_blobs: 3,
            strength: 0.9,
            radius_frac: 0.12,
        },
        holdout_ids: Vec::new(),
        metrics: vec!["psnr".parse()?, "ssim".parse()?],
        stage1: TrainConfig {
            iterations: 400,
            log_interval: 100,
            ..TrainConfig::default()
        },
        init_gaussians: 100,
        variants: vec![VariantSpec {
            name: "fused".into(),
            train: Some(stage2),
        }],
        out_dir: out.clone(),
    };

    let thresholds = [0.0, 0.3, 0.6, 0.9, 1.0];
    println!("training one stage-2 model per threshold, shared stage-1 model...");
    let rows = sweep_threshold(&spec, &thresholds)?;

    println!("{:>9}  {:>9}  {:>7}", "threshold", "psnr", "ssim");
    for r in &rows {
        println!("{:>9.2}  {:>9.3}  {:>7.4}", r.threshold, r.psnr, r.ssim);
        assert!(r.psnr.is_finite() && r.ssim.is_finite());
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.psnr.total_cmp(&b.psnr))
        .expect("sweep produced rows");
    println!("best holdout psnr at threshold {:.2}", best.threshold);

    // The curve lands in sweep.csv and parses back exactly.
    let reread = read_sweep(&out.join("sweep.csv"))?;
    assert_eq!(reread.len(), rows.len());
    for (a, b) in rows.iter().zip(&reread) {
        assert_eq!(a.psnr, b.psnr);
        assert_eq!(a.ssim, b.ssim);
    }
    println!("curve written to {}", out.join("sweep.csv").display());
    Ok(())
}
