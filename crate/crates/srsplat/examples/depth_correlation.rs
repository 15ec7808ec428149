//! Pearson-correlation depth supervision. The loss compares shapes, not
//! values: any positive affine map of the depth scores zero, so relative
//! depth from an upstream estimator can supervise metric rendered depth
//! without alignment. Patch mode trades global shape for local shape.

use srsplat::loss::{pearson_depth_loss, PearsonStatus, DEPTH_COVERAGE_MIN};
use srsplat::render::{render, RenderSettings};
use srsplat::scenegen::{generate_gaussians, ring_cameras, Layout};

fn main() {
    let scene = generate_gaussians(3, 120, Layout::TexturedGrid);
    let cam = &ring_cameras(4, 96, 96, 2.4)[0];
    let r = render(&scene, cam, None, &RenderSettings::default()).depth;

    // Positive affine transforms are invisible to the loss.
    let mut affine = r.clone();
    for d in &mut affine.depth {
        *d = 0.37 * *d + 1.9;
    }
    let l = pearson_depth_loss(&r, &affine, None);
    println!("affine (0.37 d + 1.9): loss {:.2e}", l.loss);
    assert_eq!(l.status, PearsonStatus::Ok);
    assert!(l.loss < 1e-6);

    // Negation is the worst case, the top of the [0, 2] range.
    let mut negated = r.clone();
    for d in &mut negated.depth {
        *d = -*d;
    }
    let l = pearson_depth_loss(&r, &negated, None);
    println!("negated: loss {:.6}", l.loss);
    assert!((l.loss - 2.0).abs() < 1e-6);

    // A per-tile offset staircase keeps every 16x16 tile perfectly
    // correlated while the global correlation degrades, which is what
    // patch mode is for.
    let mut staircase = r.clone();
    for y in 0..r.height {
        for x in 0..r.width {
            let tile = (y / 16) * (r.width / 16) + x / 16;
            staircase.depth[y * r.width + x] += 3.0 * tile as f64;
        }
    }
    let global = pearson_depth_loss(&r, &staircase, None);
    let patched = pearson_depth_loss(&r, &staircase, Some(16));
    println!(
        "staircase: global loss {:.4}, patch-16 loss {:.2e}",
        global.loss, patched.loss
    );
    assert!(patched.loss < 1e-6);
    assert!(global.loss > 10.0 * patched.loss.max(1e-9));

    // Pixels the renderer barely covered are excluded, so garbage there
    // cannot leak into the loss.
    let uncovered: Vec<usize> = (0..r.depth.len())
        .filter(|&i| r.coverage[i] < DEPTH_COVERAGE_MIN)
        .collect();
    if !uncovered.is_empty() {
        let clean = pearson_depth_loss(&r, &affine, None);
        let mut vandalized = affine.clone();
        for &i in &uncovered {
            vandalized.depth[i] = 1e12;
        }
        let l = pearson_depth_loss(&r, &vandalized, None);
        println!(
            "{} uncovered pixels vandalized: loss {:.2e} (unchanged)",
            uncovered.len(),
            l.loss
        );
        assert_eq!(l.loss, clean.loss);
    }

    // Constant maps carry no shape; the loss reports that instead of
    // dividing by zero.
    let flat = {
        let mut e = r.clone();
        e.depth.fill(5.0);
        e
    };
    let l = pearson_depth_loss(&r, &flat, None);
    println!("constant external: loss {} status {:?}", l.loss, l.status);
    assert_eq!(l.status, PearsonStatus::ConstantInput);
    assert!(l.grad.iter().all(|&g| g == 0.0));
}
