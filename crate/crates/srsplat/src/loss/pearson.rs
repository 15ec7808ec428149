//! Depth supervision by Pearson correlation: invariant to positive affine
//! transforms of either map, so relative (monocular-style) depth can
//! supervise metric rendered depth.

use crate::buffer::DepthBuffer;

/// Pixels with rendered coverage below this carry unreliable composited
/// depth and are excluded from depth losses.
pub const DEPTH_COVERAGE_MIN: f64 = 0.05;

/// Variance floor added inside each variance before the square root.
const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PearsonStatus {
    Ok,
    /// Either map was exactly constant over the valid pixels; the loss is
    /// the uninformative 1 with zero gradient.
    ConstantInput,
    /// Fewer than 2 valid pixels; the loss is 0 with zero gradient.
    InsufficientPixels,
}

#[derive(Debug, Clone)]
pub struct PearsonLoss {
    pub loss: f64,
    /// Gradient w.r.t. the rendered depth, length width*height, zero on
    /// excluded pixels.
    pub grad: Vec<f64>,
    pub status: PearsonStatus,
}

/// 1 - Cov(r,e)/sqrt(Var(r) Var(e)) over all valid pixels jointly.
/// Range [0, 2]: 0 for positively affinely related maps, 2 under negation.
/// `patch` switches to averaging one coefficient per non-overlapping
/// patch-by-patch square instead of a single global one.
pub fn pearson_depth_loss(r: &DepthBuffer, e: &DepthBuffer, patch: Option<usize>) -> PearsonLoss {
    assert_eq!(r.width, e.width, "depth dimensions must match");
    assert_eq!(r.height, e.height, "depth dimensions must match");
    match patch {
        None => {
            let idx: Vec<usize> = (0..r.depth.len())
                .filter(|&i| r.coverage[i] >= DEPTH_COVERAGE_MIN)
                .collect();
            let mut grad = vec![0.0; r.depth.len()];
            let (loss, status) = pearson_over(&idx, &r.depth, &e.depth, 1.0, &mut grad);
            PearsonLoss { loss, grad, status }
        }
        Some(p) => pearson_patches(r, e, p),
    }
}

/// One Pearson term over the pixels in `idx`, with gradients scaled by
/// `weight` and accumulated into `grad`.
fn pearson_over(
    idx: &[usize],
    r: &[f64],
    e: &[f64],
    weight: f64,
    grad: &mut [f64],
) -> (f64, PearsonStatus) {
    let n = idx.len();
    if n < 2 {
        return (0.0, PearsonStatus::InsufficientPixels);
    }
    let nf = n as f64;
    let r_mean = idx.iter().map(|&i| r[i]).sum::<f64>() / nf;
    let e_mean = idx.iter().map(|&i| e[i]).sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_r = 0.0;
    let mut var_e = 0.0;
    for &i in idx {
        let dr = r[i] - r_mean;
        let de = e[i] - e_mean;
        cov += dr * de;
        var_r += dr * dr;
        var_e += de * de;
    }
    cov /= nf;
    var_r /= nf;
    var_e /= nf;
    if var_r == 0.0 || var_e == 0.0 {
        return (1.0, PearsonStatus::ConstantInput);
    }
    let u = var_r + VARIANCE_FLOOR;
    let v = var_e + VARIANCE_FLOOR;
    let denom = (u * v).sqrt();
    let loss = 1.0 - cov / denom;
    for &i in idx {
        let dr = r[i] - r_mean;
        let de = e[i] - e_mean;
        grad[i] += weight * (-de / (nf * denom) + cov * dr / (nf * u * denom));
    }
    (loss * weight, PearsonStatus::Ok)
}

fn pearson_patches(r: &DepthBuffer, e: &DepthBuffer, p: usize) -> PearsonLoss {
    assert!(p >= 2, "patch edge must be at least 2 pixels");
    let mut grad = vec![0.0; r.depth.len()];
    // First count the patches that qualify so per-patch weights are known
    // before gradients are accumulated.
    let mut patches: Vec<Vec<usize>> = Vec::new();
    for py in (0..r.height).step_by(p) {
        for px in (0..r.width).step_by(p) {
            let mut idx = Vec::new();
            for y in py..(py + p).min(r.height) {
                for x in px..(px + p).min(r.width) {
                    let i = y * r.width + x;
                    if r.coverage[i] >= DEPTH_COVERAGE_MIN {
                        idx.push(i);
                    }
                }
            }
            if idx.len() >= 2 {
                patches.push(idx);
            }
        }
    }
    if patches.is_empty() {
        return PearsonLoss {
            loss: 0.0,
            grad,
            status: PearsonStatus::InsufficientPixels,
        };
    }
    let weight = 1.0 / patches.len() as f64;
    let mut total = 0.0;
    for idx in &patches {
        let (l, status) = pearson_over(idx, &r.depth, &e.depth, weight, &mut grad);
        total += match status {
            PearsonStatus::ConstantInput => weight, // the uninformative 1, weighted
            _ => l,
        };
    }
    PearsonLoss {
        loss: total,
        grad,
        status: PearsonStatus::Ok,
    }
}
