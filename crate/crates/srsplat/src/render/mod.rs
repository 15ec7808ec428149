//! Differentiable rasterization of 3D Gaussians by depth-sorted alpha
//! compositing, tiled for locality, plus rendering at scaled intrinsics
//! (the same model splatted onto a finer pixel grid).

mod backward;

pub use backward::{render_backward, RenderGradients};

use nalgebra::{Vector2, Vector3};

use crate::buffer::{DepthBuffer, ImageBuffer};
use crate::camera::{project, Camera, DEFAULT_DILATION, DEFAULT_NEAR_PLANE};
use crate::error::Error;
use crate::gaussian::{apply_3d_smoothing, Gaussian3D};
use crate::Result;

/// Rasterizer settings. The defaults match the training pipeline; tests
/// that compare against finite differences disable the influence cutoff and
/// the transmittance early-exit, which are the only non-smooth switches.
#[derive(Debug, Clone)]
pub struct RenderSettings {
    /// Composited behind all splats.
    pub background: Vector3<f64>,
    /// Splats at or behind this camera-space depth are culled.
    pub near_plane: f64,
    /// Screen-space covariance dilation in squared pixels.
    pub dilation: f64,
    /// Influence cutoff in standard deviations; pixels with squared
    /// Mahalanobis distance above cutoff^2 skip the splat.
    pub cutoff: f64,
    /// Per-pixel compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    /// Edge length of rasterization tiles, in pixels.
    pub tile_size: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            background: Vector3::zeros(),
            near_plane: DEFAULT_NEAR_PLANE,
            dilation: DEFAULT_DILATION,
            cutoff: 3.0,
            min_transmittance: 1e-4,
            tile_size: 16,
        }
    }
}

impl RenderSettings {
    /// Settings with every non-smooth switch disabled, making the rendered
    /// image a smooth function of all parameters (used by gradient checks).
    pub fn smooth() -> Self {
        RenderSettings {
            cutoff: f64::INFINITY,
            min_transmittance: 0.0,
            ..Self::default()
        }
    }
}

/// Rendered color plus composited depth and coverage.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ImageBuffer,
    pub depth: DepthBuffer,
}

/// One visible splat after projection, in compositing order.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSplat {
    /// Index into the input scene.
    pub idx: usize,
    pub mean2d: Vector2<f64>,
    /// Inverse of cov2d as the quadratic form q = a dx^2 + 2 b dx dy + c dy^2.
    pub inv_a: f64,
    pub inv_b: f64,
    pub inv_c: f64,
    pub depth: f64,
    pub color: Vector3<f64>,
    /// Opacity after the smoothing compensation.
    pub alpha_eff: f64,
    /// Camera-space center (needed by the backward pass).
    pub p_cam: Vector3<f64>,
    /// Smoothing width this splat was rendered with.
    pub sigma: f64,
    /// Bounding radius of the influence region in pixels; infinite when the
    /// cutoff is disabled.
    pub radius: f64,
}

/// Projects, culls, and depth-sorts the scene. Splats behind the near plane
/// or with a degenerate projected covariance are dropped; ties in depth
/// keep input order.
pub(crate) fn prepare_splats(
    scene: &[Gaussian3D],
    cam: &Camera,
    smoothing: Option<&[f64]>,
    settings: &RenderSettings,
) -> Vec<PreparedSplat> {
    if let Some(s) = smoothing {
        assert_eq!(s.len(), scene.len(), "one smoothing width per gaussian");
    }
    let mut out = Vec::with_capacity(scene.len());
    for (idx, g) in scene.iter().enumerate() {
        let sigma = smoothing.map_or(0.0, |s| s[idx]);
        let sm = apply_3d_smoothing(g, sigma);
        let pr = project(&sm, cam, settings.near_plane, settings.dilation);
        if !pr.visible {
            continue;
        }
        let (a, b, c) = (pr.cov2d[(0, 0)], pr.cov2d[(0, 1)], pr.cov2d[(1, 1)]);
        let det = a * c - b * b;
        if !(det > 0.0) || !det.is_finite() {
            continue;
        }
        let lam_max = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        out.push(PreparedSplat {
            idx,
            mean2d: pr.mean2d,
            inv_a: c / det,
            inv_b: -b / det,
            inv_c: a / det,
            depth: pr.depth,
            color: sm.color,
            alpha_eff: sm.opacity,
            p_cam: cam.world_to_camera(&g.position),
            sigma,
            radius: settings.cutoff * lam_max.sqrt(),
        });
    }
    out.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .expect("depths are finite")
            .then(a.idx.cmp(&b.idx))
    });
    out
}

/// Splat indices per tile, preserving compositing order within each tile.
pub(crate) fn bin_splats(
    splats: &[PreparedSplat],
    width: usize,
    height: usize,
    tile_size: usize,
) -> (usize, usize, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let (tx0, tx1, ty0, ty1) = if s.radius.is_finite() {
            // Influence is confined to |dx| <= r and |dy| <= r around the
            // center; one extra pixel of slack absorbs rounding.
            let x0 = (s.mean2d.x - s.radius - 1.0).floor().max(0.0) as usize;
            let y0 = (s.mean2d.y - s.radius - 1.0).floor().max(0.0) as usize;
            let x1 = (s.mean2d.x + s.radius + 1.0).ceil().min(width as f64) as usize;
            let y1 = (s.mean2d.y + s.radius + 1.0).ceil().min(height as f64) as usize;
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            (
                x0 / tile_size,
                (x1 - 1) / tile_size,
                y0 / tile_size,
                (y1 - 1) / tile_size,
            )
        } else {
            (0, tiles_x - 1, 0, tiles_y - 1)
        };
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tiles[ty * tiles_x + tx].push(si as u32);
            }
        }
    }
    (tiles_x, tiles_y, tiles)
}

#[inline]
pub(crate) fn gaussian_weight(s: &PreparedSplat, px: f64, py: f64, cutoff: f64) -> Option<f64> {
    let dx = px - s.mean2d.x;
    let dy = py - s.mean2d.y;
    let q = s.inv_a * dx * dx + 2.0 * s.inv_b * dx * dy + s.inv_c * dy * dy;
    if q > cutoff * cutoff {
        return None;
    }
    Some((-0.5 * q).exp())
}

/// Renders the scene into an image and a depth buffer. `smoothing` supplies
/// one low-pass width per Gaussian (`None` disables smoothing).
///
/// Per pixel, splats composite front to back: each contributes its color
/// and depth weighted by alpha times remaining transmittance; compositing
/// stops early once transmittance drops below the configured floor, and the
/// background fills whatever transmittance remains. Depth is composited
/// with the same weights and left unnormalized; the coverage plane records
/// one minus the final transmittance.
pub fn render(
    scene: &[Gaussian3D],
    cam: &Camera,
    smoothing: Option<&[f64]>,
    settings: &RenderSettings,
) -> RenderOutput {
    let splats = prepare_splats(scene, cam, smoothing, settings);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let (tiles_x, _tiles_y, tiles) = bin_splats(&splats, w, h, settings.tile_size);
    let mut image = ImageBuffer::new(w, h, 3);
    let mut depth = DepthBuffer::new(w, h);

    for (tile_idx, list) in tiles.iter().enumerate() {
        let tx = tile_idx % tiles_x;
        let ty = tile_idx / tiles_x;
        let x_end = (tx * settings.tile_size + settings.tile_size).min(w);
        let y_end = (ty * settings.tile_size + settings.tile_size).min(h);
        for y in ty * settings.tile_size..y_end {
            for x in tx * settings.tile_size..x_end {
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;
                let mut color = Vector3::zeros();
                let mut d = 0.0;
                let mut t = 1.0;
                for &si in list {
                    let s = &splats[si as usize];
                    let Some(g) = gaussian_weight(s, px, py, settings.cutoff) else {
                        continue;
                    };
                    let alpha = s.alpha_eff * g;
                    let weight = alpha * t;
                    color += s.color * weight;
                    d += s.depth * weight;
                    t *= 1.0 - alpha;
                    if t < settings.min_transmittance {
                        break;
                    }
                }
                color += settings.background * t;
                let pi = y * w + x;
                for ch in 0..3 {
                    image.data[pi * 3 + ch] = color[ch];
                }
                depth.depth[pi] = d;
                depth.coverage[pi] = 1.0 - t;
            }
        }
    }
    RenderOutput { image, depth }
}

/// Per-pixel reference rasterizer: every pixel walks the full depth-sorted
/// splat list with no tiling and no bounding boxes. Slow; exists as the
/// independent check for the tiled path.
pub fn render_reference(
    scene: &[Gaussian3D],
    cam: &Camera,
    smoothing: Option<&[f64]>,
    settings: &RenderSettings,
) -> RenderOutput {
    let splats = prepare_splats(scene, cam, smoothing, settings);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut image = ImageBuffer::new(w, h, 3);
    let mut depth = DepthBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let mut color = Vector3::zeros();
            let mut d = 0.0;
            let mut t = 1.0;
            for s in &splats {
                let Some(g) = gaussian_weight(s, px, py, settings.cutoff) else {
                    continue;
                };
                let alpha = s.alpha_eff * g;
                let weight = alpha * t;
                color += s.color * weight;
                d += s.depth * weight;
                t *= 1.0 - alpha;
                if t < settings.min_transmittance {
                    break;
                }
            }
            color += settings.background * t;
            let pi = y * w + x;
            for ch in 0..3 {
                image.data[pi * 3 + ch] = color[ch];
            }
            depth.depth[pi] = d;
            depth.coverage[pi] = 1.0 - t;
        }
    }
    RenderOutput { image, depth }
}

/// Renders the scene through the camera scaled to `factor` times its pixel
/// grid: focal lengths, principal point, and dimensions all scale together,
/// so the view frustum is unchanged and only the sampling rate rises.
/// Factors below 1 are rejected.
pub fn sr_splat(
    scene: &[Gaussian3D],
    cam: &Camera,
    factor: f64,
    smoothing: Option<&[f64]>,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    if !(factor >= 1.0) {
        return Err(Error::Config(format!(
            "super-resolution factor must be >= 1, got {factor}"
        )));
    }
    Ok(render(scene, &cam.scaled(factor), smoothing, settings))
}
