//! Scalar training objectives and their per-pixel gradients.
//!
//! Texture terms blend L1 with structural dissimilarity; geometry terms
//! blend an absolute depth error against the internal reference with a
//! correlation loss against the external one. The discrepancy mask routes
//! each pixel's texture supervision to whichever guidance source is
//! trustworthy there.

pub mod mask;
pub mod pearson;
pub mod ssim;

pub use mask::{binary_mask, discrepancy_map, invert_mask};
pub use pearson::{pearson_depth_loss, PearsonLoss, PearsonStatus, DEPTH_COVERAGE_MIN};

use crate::buffer::{DepthBuffer, ImageBuffer, MaskBuffer};
use crate::guidance::GuidanceSet;

/// Which reference supervises texture during high-resolution training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureMode {
    /// Internal renders only.
    Internal,
    /// External upscaled images only.
    External,
    /// Unmasked sum of both texture losses.
    Both,
    /// Discrepancy-mask routing between the two.
    MaskFused,
}

/// How the mask interacts with the windowed structural term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskedSsimMode {
    /// Replace masked-out pixels of the rendered image by the reference
    /// before windowed SSIM, so those regions contribute zero structural
    /// error.
    Substitute,
    /// Weight the per-pixel SSIM map by the mask and renormalize.
    MapWeight,
}

#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Structural-dissimilarity weight in the texture blend.
    pub lambda_ds: f64,
    /// Weight of the internal geometric (absolute depth) term.
    pub lambda_i: f64,
    /// Weight of the external geometric (depth correlation) term.
    pub lambda_e: f64,
    /// Discrepancy threshold for the binary mask, in [0, 1].
    pub threshold: f64,
    /// Stabilizer in the discrepancy denominator.
    pub epsilon: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub texture_mode: TextureMode,
    pub masked_ssim: MaskedSsimMode,
    /// Depth-correlation granularity: one global coefficient (`None`) or
    /// one per non-overlapping square patch of this edge length.
    pub pearson_patch: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_ds: 0.2,
            lambda_i: 0.001,
            lambda_e: 0.0001,
            threshold: 0.6,
            epsilon: 1e-6,
            ssim_window: 11,
            ssim_sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            texture_mode: TextureMode::MaskFused,
            masked_ssim: MaskedSsimMode::Substitute,
            pearson_patch: None,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda_ds) {
            return Err(format!("lambda_ds must be in [0,1], got {}", self.lambda_ds));
        }
        if self.lambda_i < 0.0 || self.lambda_e < 0.0 {
            return Err("lambda_i and lambda_e must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("threshold must be in [0,1], got {}", self.threshold));
        }
        if self.epsilon <= 0.0 {
            return Err("epsilon must be positive".into());
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(format!("ssim_window must be odd and >= 3, got {}", self.ssim_window));
        }
        if self.ssim_sigma <= 0.0 {
            return Err("ssim_sigma must be positive".into());
        }
        if let Some(p) = self.pearson_patch {
            if p < 2 {
                return Err("pearson_patch must be at least 2".into());
            }
        }
        Ok(())
    }
}

/// Mean absolute error over unmasked pixels, gradient w.r.t. `a`:
/// sign(a-b)/count on included entries, zero elsewhere. Fully masked input
/// yields 0 with zero gradient.
pub fn l1_loss(
    a: &ImageBuffer,
    b: &ImageBuffer,
    weight: Option<&MaskBuffer>,
) -> (f64, ImageBuffer) {
    assert!(a.same_shape(b), "l1 inputs must share dimensions");
    if let Some(m) = weight {
        assert_eq!(m.width, a.width);
        assert_eq!(m.height, a.height);
    }
    let mut grad = ImageBuffer::new(a.width, a.height, a.channels);
    let included = weight.map_or(a.width * a.height, MaskBuffer::count_ones);
    if included == 0 {
        return (0.0, grad);
    }
    let count = (included * a.channels) as f64;
    let mut sum = 0.0;
    for p in 0..a.width * a.height {
        if let Some(m) = weight {
            if m.data[p] == 0 {
                continue;
            }
        }
        for ch in 0..a.channels {
            let i = p * a.channels + ch;
            let d = a.data[i] - b.data[i];
            sum += d.abs();
            grad.data[i] = if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            };
        }
    }
    (sum / count, grad)
}

/// (1 - SSIM)/2 averaged over pixels and channels, gradient w.r.t. `a`.
pub fn dssim_loss(a: &ImageBuffer, b: &ImageBuffer, cfg: &LossConfig) -> (f64, ImageBuffer) {
    let map = ssim::ssim_map(a, b, cfg.ssim_window, cfg.ssim_sigma, cfg.c1, cfg.c2);
    let n = map.data.len() as f64;
    let mean = map.data.iter().sum::<f64>() / n;
    let upstream = ImageBuffer::filled(a.width, a.height, a.channels, -0.5 / n);
    let grad = ssim::ssim_map_vjp(
        a,
        b,
        cfg.ssim_window,
        cfg.ssim_sigma,
        cfg.c1,
        cfg.c2,
        &upstream,
    );
    ((1.0 - mean) / 2.0, grad)
}

/// (1-lambda) L1 + lambda D-SSIM of `rendered` against `reference`,
/// gradient w.r.t. `rendered`. With a mask, only mask=1 pixels are
/// supervised: L1 restricts its mean to them, and the structural term
/// either substitutes reference pixels into the rest (`Substitute`) or
/// reweights its per-pixel map (`MapWeight`).
pub fn texture_loss(
    reference: &ImageBuffer,
    rendered: &ImageBuffer,
    cfg: &LossConfig,
    weight: Option<&MaskBuffer>,
) -> (f64, ImageBuffer) {
    let (l1, g1) = l1_loss(rendered, reference, weight);
    let (ds, g2) = match weight {
        None => dssim_loss(rendered, reference, cfg),
        Some(m) => masked_dssim(reference, rendered, cfg, m),
    };
    let mut grad = g1;
    for (g, d) in grad.data.iter_mut().zip(&g2.data) {
        *g = (1.0 - cfg.lambda_ds) * *g + cfg.lambda_ds * d;
    }
    ((1.0 - cfg.lambda_ds) * l1 + cfg.lambda_ds * ds, grad)
}

fn masked_dssim(
    reference: &ImageBuffer,
    rendered: &ImageBuffer,
    cfg: &LossConfig,
    m: &MaskBuffer,
) -> (f64, ImageBuffer) {
    match cfg.masked_ssim {
        MaskedSsimMode::Substitute => {
            let mut sub = rendered.clone();
            for p in 0..m.data.len() {
                if m.data[p] == 0 {
                    for ch in 0..sub.channels {
                        sub.data[p * sub.channels + ch] = reference.data[p * sub.channels + ch];
                    }
                }
            }
            let (loss, mut grad) = dssim_loss(&sub, reference, cfg);
            for p in 0..m.data.len() {
                if m.data[p] == 0 {
                    for ch in 0..grad.channels {
                        grad.data[p * grad.channels + ch] = 0.0;
                    }
                }
            }
            (loss, grad)
        }
        MaskedSsimMode::MapWeight => {
            let included = m.count_ones();
            if included == 0 {
                return (0.0, ImageBuffer::new(rendered.width, rendered.height, rendered.channels));
            }
            let map = ssim::ssim_map(rendered, reference, cfg.ssim_window, cfg.ssim_sigma, cfg.c1, cfg.c2);
            let norm = (included * rendered.channels) as f64;
            let mut loss = 0.0;
            let mut upstream = ImageBuffer::new(rendered.width, rendered.height, rendered.channels);
            for p in 0..m.data.len() {
                if m.data[p] == 1 {
                    for ch in 0..map.channels {
                        loss += (1.0 - map.data[p * map.channels + ch]) / 2.0;
                        upstream.data[p * map.channels + ch] = -0.5 / norm;
                    }
                }
            }
            let grad = ssim::ssim_map_vjp(
                rendered,
                reference,
                cfg.ssim_window,
                cfg.ssim_sigma,
                cfg.c1,
                cfg.c2,
                &upstream,
            );
            (loss / norm, grad)
        }
    }
}

/// Mask-routed texture supervision: pixels whose internal/external
/// discrepancy is at or above the threshold follow the internal reference,
/// the rest follow the external one. Returns the loss and the gradient
/// w.r.t. `rendered`.
pub fn fused_texture_loss(
    rendered: &ImageBuffer,
    internal: &ImageBuffer,
    external: &ImageBuffer,
    cfg: &LossConfig,
) -> (f64, ImageBuffer) {
    let m = binary_mask(&discrepancy_map(internal, external, cfg.epsilon), cfg.threshold);
    fused_texture_loss_with_mask(rendered, internal, external, &m, cfg)
}

/// As `fused_texture_loss` with a precomputed mask (the mask depends only
/// on the two guidance images, so callers cache it per view).
///
/// The mask routes each pixel to one reference; pixels keep their uniform
/// 1/N weight. Summing two independently averaged masked losses instead
/// would renormalize each side over its own count, handing a near-empty
/// side an outsized per-pixel gradient.
pub fn fused_texture_loss_with_mask(
    rendered: &ImageBuffer,
    internal: &ImageBuffer,
    external: &ImageBuffer,
    m: &MaskBuffer,
    cfg: &LossConfig,
) -> (f64, ImageBuffer) {
    let mut routed = external.clone();
    for p in 0..m.data.len() {
        if m.data[p] == 1 {
            for ch in 0..routed.channels {
                routed.data[p * routed.channels + ch] =
                    internal.data[p * routed.channels + ch];
            }
        }
    }
    let (l1, g1) = l1_loss(rendered, &routed, None);
    let (di, gi) = masked_dssim(internal, rendered, cfg, m);
    let inv = invert_mask(m);
    let (de, ge) = masked_dssim(external, rendered, cfg, &inv);
    let mut grad = g1;
    for (i, g) in grad.data.iter_mut().enumerate() {
        *g = (1.0 - cfg.lambda_ds) * *g + cfg.lambda_ds * (gi.data[i] + ge.data[i]);
    }
    (
        (1.0 - cfg.lambda_ds) * l1 + cfg.lambda_ds * (di + de),
        grad,
    )
}

/// Mean absolute depth error over pixels adequately covered in both
/// buffers; gradient w.r.t. `r`'s depth.
pub fn internal_geom_loss(r: &DepthBuffer, i: &DepthBuffer) -> (f64, Vec<f64>) {
    assert_eq!(r.width, i.width, "depth dimensions must match");
    assert_eq!(r.height, i.height, "depth dimensions must match");
    let mut grad = vec![0.0; r.depth.len()];
    let valid: Vec<usize> = (0..r.depth.len())
        .filter(|&p| r.coverage[p] >= DEPTH_COVERAGE_MIN && i.coverage[p] >= DEPTH_COVERAGE_MIN)
        .collect();
    if valid.is_empty() {
        return (0.0, grad);
    }
    let count = valid.len() as f64;
    let mut sum = 0.0;
    for &p in &valid {
        let d = r.depth[p] - i.depth[p];
        sum += d.abs();
        grad[p] = if d > 0.0 {
            1.0 / count
        } else if d < 0.0 {
            -1.0 / count
        } else {
            0.0
        };
    }
    (sum / count, grad)
}

/// lambda_i * absolute internal depth error + lambda_e * external depth
/// correlation loss; gradient w.r.t. `r`'s depth. Terms with zero weight
/// are skipped.
pub fn fused_geometry_loss(
    r: &DepthBuffer,
    i: &DepthBuffer,
    e: &DepthBuffer,
    cfg: &LossConfig,
) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; r.depth.len()];
    if cfg.lambda_i != 0.0 {
        let (l, g) = internal_geom_loss(r, i);
        total += cfg.lambda_i * l;
        for (o, v) in grad.iter_mut().zip(&g) {
            *o += cfg.lambda_i * v;
        }
    }
    if cfg.lambda_e != 0.0 {
        let p = pearson_depth_loss(r, e, cfg.pearson_patch);
        total += cfg.lambda_e * p.loss;
        for (o, v) in grad.iter_mut().zip(&p.grad) {
            *o += cfg.lambda_e * v;
        }
    }
    (total, grad)
}

/// The complete per-view objective with its gradient split by render
/// output.
#[derive(Debug, Clone)]
pub struct FinalLoss {
    pub total: f64,
    pub texture: f64,
    pub geometry: f64,
    /// Gradient w.r.t. the rendered image.
    pub d_image: ImageBuffer,
    /// Gradient w.r.t. the composited depth, length width*height.
    pub d_depth: Vec<f64>,
}

/// Texture term (per `cfg.texture_mode`) plus the weighted geometry term,
/// evaluated against one view's guidance.
pub fn final_loss(
    rendered: &ImageBuffer,
    depth: &DepthBuffer,
    guidance: &GuidanceSet,
    mask: Option<&MaskBuffer>,
    cfg: &LossConfig,
) -> FinalLoss {
    let (texture, d_image) = match cfg.texture_mode {
        TextureMode::Internal => texture_loss(&guidance.internal_image, rendered, cfg, None),
        TextureMode::External => texture_loss(&guidance.external_image, rendered, cfg, None),
        TextureMode::Both => {
            let (li, gi) = texture_loss(&guidance.internal_image, rendered, cfg, None);
            let (le, ge) = texture_loss(&guidance.external_image, rendered, cfg, None);
            let mut g = gi;
            for (a, b) in g.data.iter_mut().zip(&ge.data) {
                *a += b;
            }
            (li + le, g)
        }
        TextureMode::MaskFused => match mask {
            Some(m) => fused_texture_loss_with_mask(
                rendered,
                &guidance.internal_image,
                &guidance.external_image,
                m,
                cfg,
            ),
            None => fused_texture_loss(
                rendered,
                &guidance.internal_image,
                &guidance.external_image,
                cfg,
            ),
        },
    };
    let (geometry, d_depth) =
        fused_geometry_loss(depth, &guidance.internal_depth, &guidance.external_depth, cfg);
    FinalLoss {
        total: texture + geometry,
        texture,
        geometry,
        d_image,
        d_depth,
    }
}
