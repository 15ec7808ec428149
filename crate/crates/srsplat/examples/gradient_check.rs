//! Central finite differences against the analytic backward pass, per
//! parameter group. Uses smooth render settings (no opacity cutoff, no
//! transmittance early-out) because the default thresholds make the
//! forward pass piecewise and FD meaningless at the seams.

use nalgebra::Vector3;

use srsplat::gaussian::Gaussian3D;
use srsplat::render::{render, render_backward, RenderSettings};
use srsplat::scenegen::{generate_gaussians, ring_cameras, Layout};
use srsplat::{Camera, DepthBuffer, ImageBuffer};

/// 0.5 |I - T|^2 + 0.05 |D - Td|^2 against fixed targets.
fn objective(
    scene: &[Gaussian3D],
    cam: &Camera,
    settings: &RenderSettings,
    t_img: &ImageBuffer,
    t_depth: &DepthBuffer,
) -> f64 {
    let out = render(scene, cam, None, settings);
    let img: f64 = out
        .image
        .data
        .iter()
        .zip(&t_img.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dep: f64 = out
        .depth
        .depth
        .iter()
        .zip(&t_depth.depth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * img + 0.05 * dep
}

fn main() {
    let scene = generate_gaussians(5, 4, Layout::Cluster);
    let cam = &ring_cameras(4, 24, 24, 2.4)[0];
    let settings = RenderSettings::smooth();

    // Targets come from a nudged copy of the scene so residuals are
    // nonzero everywhere the splats land.
    let mut shifted = scene.clone();
    for g in &mut shifted {
        g.position += Vector3::new(0.02, -0.015, 0.01);
        g.opacity = (g.opacity * 0.9).min(1.0);
    }
    let target = render(&shifted, cam, None, &settings);

    let out = render(&scene, cam, None, &settings);
    let mut d_image = out.image.clone();
    for (d, t) in d_image.data.iter_mut().zip(&target.image.data) {
        *d -= t;
    }
    let d_depth: Vec<f64> = out
        .depth
        .depth
        .iter()
        .zip(&target.depth.depth)
        .map(|(a, b)| 0.1 * (a - b))
        .collect();
    let grads = render_backward(&scene, cam, None, &settings, &d_image, Some(&d_depth));

    let h = 1e-5;
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut group = |name: &'static str, entries: Vec<(usize, usize, f64)>| {
        let mut max_rel = 0.0_f64;
        for (gi, k, got) in entries {
            let bump = |scene: &mut [Gaussian3D], d: f64| {
                let g = &mut scene[gi];
                match name {
                    "position" => g.position[k] += d,
                    "scale" => g.scale[k] += d,
                    "rotation" => g.rotation[k] += d,
                    "color" => g.color[k] += d,
                    "opacity" => g.opacity += d,
                    _ => unreachable!(),
                }
            };
            let mut hi = scene.clone();
            bump(&mut hi, h);
            let mut lo = scene.clone();
            bump(&mut lo, -h);
            let fd = (objective(&hi, cam, &settings, &target.image, &target.depth)
                - objective(&lo, cam, &settings, &target.image, &target.depth))
                / (2.0 * h);
            let rel = (fd - got).abs() / fd.abs().max(got.abs()).max(1e-6);
            assert!(
                rel < 1e-3 || (fd - got).abs() < 1e-8,
                "{name} gaussian {gi} component {k}: analytic {got:.6e} vs fd {fd:.6e}"
            );
            max_rel = max_rel.max(rel);
        }
        worst.push((name, max_rel));
    };

    let n = scene.len();
    group(
        "position",
        (0..n)
            .flat_map(|gi| (0..3).map(move |k| (gi, k)))
            .map(|(gi, k)| (gi, k, grads.position[gi][k]))
            .collect(),
    );
    group(
        "scale",
        (0..n)
            .flat_map(|gi| (0..3).map(move |k| (gi, k)))
            .map(|(gi, k)| (gi, k, grads.scale[gi][k]))
            .collect(),
    );
    group(
        "rotation",
        (0..n)
            .flat_map(|gi| (0..4).map(move |k| (gi, k)))
            .map(|(gi, k)| (gi, k, grads.rotation[gi][k]))
            .collect(),
    );
    group(
        "color",
        (0..n)
            .flat_map(|gi| (0..3).map(move |k| (gi, k)))
            .map(|(gi, k)| (gi, k, grads.color[gi][k]))
            .collect(),
    );
    group(
        "opacity",
        (0..n).map(|gi| (gi, 0, grads.opacity[gi])).collect(),
    );

    println!("{n} gaussians, 24x24 view, step {h:.0e}, image+depth objective");
    for (name, rel) in &worst {
        println!("  {name:<9} max relative error {rel:.3e}");
    }
    println!("all parameter groups agree with finite differences");
}
