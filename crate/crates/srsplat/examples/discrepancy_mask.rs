//! Where internal and external guidance disagree, and how the binary
//! reliability mask carves that disagreement out. External guidance is
//! simulated by corrupting a clean render with multiplicative blobs, so
//! the mask should light up inside the blobs and stay quiet elsewhere.

use std::path::PathBuf;

use srsplat::io::{fimg, pngio};
use srsplat::loss::{binary_mask, discrepancy_map, LossConfig};
use srsplat::render::{render, RenderSettings};
use srsplat::scenegen::{corrupt_image, generate_gaussians, ring_cameras, Layout};
use srsplat::ImageBuffer;

fn main() -> srsplat::Result<()> {
    let out = PathBuf::from("target/examples/discrepancy_mask");
    std::fs::create_dir_all(&out).map_err(|e| srsplat::Error::io(&out, e))?;

    let scene = generate_gaussians(11, 120, Layout::TexturedGrid);
    let cam = &ring_cameras(4, 96, 96, 2.4)[0];
    let internal = render(&scene, cam, None, &RenderSettings::default()).image;
    let external = corrupt_image(&internal, 42, 3, 0.9, 0.12);

    let cfg = LossConfig::default();
    let d = discrepancy_map(&internal, &external, cfg.epsilon);
    let dmax = d.data.iter().cloned().fold(0.0_f64, f64::max);
    println!("discrepancy: max {dmax:.3}, mean {:.4}", d.data.iter().sum::<f64>() / d.data.len() as f64);

    pngio::write_png(&out.join("internal.png"), &internal)?;
    pngio::write_png(&out.join("external.png"), &external)?;
    fimg::write_image(&out.join("discrepancy.fimg"), &d)?;
    let d_vis = ImageBuffer::from_data(
        d.width,
        d.height,
        1,
        d.data.iter().map(|v| (v / dmax.max(1e-12)).min(1.0)).collect(),
    );
    pngio::write_png(&out.join("discrepancy.png"), &d_vis)?;

    // Raising the threshold can only shrink the mask. The default 0.6
    // keeps the blob cores and drops the agreement region.
    let mut prev = usize::MAX;
    for t in [0.1, 0.3, 0.6, 0.9] {
        let m = binary_mask(&d, t);
        let frac = m.count_ones() as f64 / m.data.len() as f64;
        println!("threshold {t}: {:.1}% of pixels masked as unreliable", 100.0 * frac);
        assert!(m.count_ones() <= prev);
        prev = m.count_ones();

        let vis = ImageBuffer::from_data(
            m.width,
            m.height,
            1,
            m.data.iter().map(|&v| v as f64).collect(),
        );
        pngio::write_png(&out.join(format!("mask_t{t}.png")), &vis)?;
    }

    let m = binary_mask(&d, cfg.threshold);
    assert!(m.count_ones() > 0, "the blobs must trip the default threshold");
    assert!(m.count_ones() < m.data.len(), "agreement regions must survive");
    println!("output in {}", out.display());
    Ok(())
}
