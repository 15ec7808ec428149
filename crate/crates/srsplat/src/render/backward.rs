//! Analytic gradients of the rasterizer.
//!
//! The forward pass composites front to back; the backward pass walks each
//! pixel's contributions in reverse, maintaining the back-to-front
//! composite of everything behind the current splat, then chains
//! screen-space gradients through the projection to world-space parameters.
//! Gradients are exact for the function the forward pass computes,
//! including its influence cutoff and transmittance early-exit (both
//! introduce step discontinuities; inside a smooth region the gradient
//! matches finite differences).

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::buffer::ImageBuffer;
use crate::camera::Camera;
use crate::gaussian::{quat_norm, quat_to_rotation, Gaussian3D};

use super::{bin_splats, prepare_splats, PreparedSplat, RenderSettings};

/// Per-parameter gradients, one entry per scene Gaussian. Splats that were
/// culled or never touched a pixel hold zeros.
#[derive(Debug, Clone)]
pub struct RenderGradients {
    pub position: Vec<Vector3<f64>>,
    pub scale: Vec<Vector3<f64>>,
    pub rotation: Vec<[f64; 4]>,
    pub color: Vec<Vector3<f64>>,
    pub opacity: Vec<f64>,
}

impl RenderGradients {
    pub fn zeros(n: usize) -> Self {
        RenderGradients {
            position: vec![Vector3::zeros(); n],
            scale: vec![Vector3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            color: vec![Vector3::zeros(); n],
            opacity: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity.is_empty()
    }

    pub fn add(&mut self, other: &RenderGradients) {
        assert_eq!(self.len(), other.len());
        for i in 0..self.len() {
            self.position[i] += other.position[i];
            self.scale[i] += other.scale[i];
            for k in 0..4 {
                self.rotation[i][k] += other.rotation[i][k];
            }
            self.color[i] += other.color[i];
            self.opacity[i] += other.opacity[i];
        }
    }

    /// Replaces non-finite entries with zero; returns how many gaussians
    /// were affected.
    pub fn sanitize(&mut self) -> usize {
        let mut hit = 0;
        for i in 0..self.len() {
            let bad = !self.position[i].iter().all(|v| v.is_finite())
                || !self.scale[i].iter().all(|v| v.is_finite())
                || !self.rotation[i].iter().all(|v| v.is_finite())
                || !self.color[i].iter().all(|v| v.is_finite())
                || !self.opacity[i].is_finite();
            if bad {
                self.position[i] = Vector3::zeros();
                self.scale[i] = Vector3::zeros();
                self.rotation[i] = [0.0; 4];
                self.color[i] = Vector3::zeros();
                self.opacity[i] = 0.0;
                hit += 1;
            }
        }
        hit
    }
}

/// Screen-space gradient accumulators for one prepared splat.
#[derive(Clone)]
struct SplatAccum {
    mean2d: Vector2<f64>,
    /// dL/d(inv_a, inv_b, inv_c), the parameters of the quadratic form.
    lam: [f64; 3],
    alpha_eff: f64,
    color: Vector3<f64>,
    depth: f64,
    touched: bool,
}

impl SplatAccum {
    fn zero() -> Self {
        SplatAccum {
            mean2d: Vector2::zeros(),
            lam: [0.0; 3],
            alpha_eff: 0.0,
            color: Vector3::zeros(),
            depth: 0.0,
            touched: false,
        }
    }
}

/// Backpropagates per-pixel gradients on the rendered image (`d_image`,
/// 3-channel) and on the unnormalized composited depth (`d_depth`, length
/// width*height, `None` for zero) to all Gaussian parameters. Coverage
/// carries no gradient.
///
/// Must be called with the same scene, camera, smoothing, and settings as
/// the forward pass whose outputs the upstream gradients refer to.
pub fn render_backward(
    scene: &[Gaussian3D],
    cam: &Camera,
    smoothing: Option<&[f64]>,
    settings: &RenderSettings,
    d_image: &ImageBuffer,
    d_depth: Option<&[f64]>,
) -> RenderGradients {
    let (w, h) = (cam.width as usize, cam.height as usize);
    assert_eq!(d_image.width, w);
    assert_eq!(d_image.height, h);
    assert_eq!(d_image.channels, 3);
    if let Some(dd) = d_depth {
        assert_eq!(dd.len(), w * h);
    }

    let splats = prepare_splats(scene, cam, smoothing, settings);
    let (tiles_x, _tiles_y, tiles) = bin_splats(&splats, w, h, settings.tile_size);
    let mut accum = vec![SplatAccum::zero(); splats.len()];
    // Contributions of one pixel, front to back: (splat, alpha, gaussian
    // weight, transmittance before the splat).
    let mut contribs: Vec<(u32, f64, f64, f64)> = Vec::new();

    for (tile_idx, list) in tiles.iter().enumerate() {
        let tx = tile_idx % tiles_x;
        let ty = tile_idx / tiles_x;
        let x_end = (tx * settings.tile_size + settings.tile_size).min(w);
        let y_end = (ty * settings.tile_size + settings.tile_size).min(h);
        for y in ty * settings.tile_size..y_end {
            for x in tx * settings.tile_size..x_end {
                let pi = y * w + x;
                let u_c = Vector3::new(
                    d_image.data[pi * 3],
                    d_image.data[pi * 3 + 1],
                    d_image.data[pi * 3 + 2],
                );
                let u_d = d_depth.map_or(0.0, |dd| dd[pi]);
                if u_c == Vector3::zeros() && u_d == 0.0 {
                    continue;
                }
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;

                // Replay the forward composite to collect contributions.
                contribs.clear();
                let mut t = 1.0;
                for &si in list {
                    let s = &splats[si as usize];
                    let Some(g) = super::gaussian_weight(s, px, py, settings.cutoff) else {
                        continue;
                    };
                    let alpha = s.alpha_eff * g;
                    contribs.push((si, alpha, g, t));
                    t *= 1.0 - alpha;
                    if t < settings.min_transmittance {
                        break;
                    }
                }

                // Reverse sweep: r_c / r_d are the back-to-front composites
                // of everything behind the current splat.
                let mut r_c = settings.background;
                let mut r_d = 0.0;
                for &(si, alpha, g, t_before) in contribs.iter().rev() {
                    let s = &splats[si as usize];
                    let acc = &mut accum[si as usize];
                    acc.touched = true;

                    let d_alpha = u_c.dot(&((s.color - r_c) * t_before))
                        + u_d * t_before * (s.depth - r_d);
                    acc.color += u_c * (alpha * t_before);
                    acc.depth += u_d * alpha * t_before;
                    acc.alpha_eff += d_alpha * g;

                    let d_g = d_alpha * s.alpha_eff;
                    let dx = px - s.mean2d.x;
                    let dy = py - s.mean2d.y;
                    let vx = s.inv_a * dx + s.inv_b * dy;
                    let vy = s.inv_b * dx + s.inv_c * dy;
                    // dG/dmean = G * Lambda d; dG/d(form params) = -G/2 *
                    // (dx^2, 2 dx dy, dy^2).
                    acc.mean2d += Vector2::new(vx, vy) * (d_g * g);
                    let half_g = -0.5 * d_g * g;
                    acc.lam[0] += half_g * dx * dx;
                    acc.lam[1] += half_g * 2.0 * dx * dy;
                    acc.lam[2] += half_g * dy * dy;

                    r_c = s.color * alpha + r_c * (1.0 - alpha);
                    r_d = s.depth * alpha + r_d * (1.0 - alpha);
                }
            }
        }
    }

    let mut grads = RenderGradients::zeros(scene.len());
    for (s, acc) in splats.iter().zip(&accum) {
        if !acc.touched {
            continue;
        }
        chain_to_world(scene, cam, s, acc, &mut grads);
    }
    grads
}

/// Chains one splat's screen-space gradient accumulators to its world-space
/// parameters.
fn chain_to_world(
    scene: &[Gaussian3D],
    cam: &Camera,
    s: &PreparedSplat,
    acc: &SplatAccum,
    grads: &mut RenderGradients,
) {
    let g = &scene[s.idx];
    let (fx, fy) = (cam.focal.x, cam.focal.y);
    let p = s.p_cam;
    let inv_z = 1.0 / p.z;

    // Inverse covariance parameters back to the covariance parameters:
    // d(inv A) = -inv(A) dA inv(A) in matrix form, with the off-diagonal
    // parameter carrying both symmetric slots.
    let lam = Matrix2::new(s.inv_a, s.inv_b, s.inv_b, s.inv_c);
    let g_lam = Matrix2::new(acc.lam[0], acc.lam[1] / 2.0, acc.lam[1] / 2.0, acc.lam[2]);
    let g_cov_m = -lam * g_lam * lam;
    let (ga, gb, gc) = (g_cov_m[(0, 0)], 2.0 * g_cov_m[(0, 1)], g_cov_m[(1, 1)]);

    // cov2d = J V J^T + dilation I with V the camera-space 3D covariance.
    let j0 = Vector3::new(fx * inv_z, 0.0, -fx * p.x * inv_z * inv_z);
    let j1 = Vector3::new(0.0, fy * inv_z, -fy * p.y * inv_z * inv_z);
    let smoothed = crate::gaussian::apply_3d_smoothing(g, s.sigma);
    let cov3d = smoothed.covariance();
    let v = cam.rotation * cov3d * cam.rotation.transpose();

    // Gradient w.r.t. V, entries treated as independent.
    let mut g_v = Matrix3::zeros();
    for i in 0..3 {
        for k in 0..3 {
            g_v[(i, k)] = ga * j0[i] * j0[k] + gb * j0[i] * j1[k] + gc * j1[i] * j1[k];
        }
    }
    // Gradient w.r.t. the Jacobian rows.
    let vj0 = v * j0;
    let vj1 = v * j1;
    let d_j0 = vj0 * (2.0 * ga) + vj1 * gb;
    let d_j1 = vj0 * gb + vj1 * (2.0 * gc);

    // V = W Sigma W^T.
    let g_sigma3 = cam.rotation.transpose() * g_v * cam.rotation;

    // Sigma = R diag(s'^2) R^T with s' the smoothed scales.
    let rot = quat_to_rotation(g.rotation);
    let mut d_scale_sm = Vector3::zeros();
    for k in 0..3 {
        let rk = rot.column(k);
        d_scale_sm[k] = 2.0 * smoothed.scale[k] * (rk.transpose() * g_sigma3 * rk)[0];
    }
    let s2 = Matrix3::from_diagonal(&smoothed.scale.component_mul(&smoothed.scale));
    let d_rot = (g_sigma3 + g_sigma3.transpose()) * rot * s2;

    // Rotation matrix to quaternion, through the internal normalization.
    let n = quat_norm(g.rotation);
    let qh = [
        g.rotation[0] / n,
        g.rotation[1] / n,
        g.rotation[2] / n,
        g.rotation[3] / n,
    ];
    let d_qh = rotation_quat_vjp(qh, &d_rot);
    let dot: f64 = (0..4).map(|k| qh[k] * d_qh[k]).sum();
    let mut d_q = [0.0; 4];
    for k in 0..4 {
        d_q[k] = (d_qh[k] - qh[k] * dot) / n;
    }

    // Screen mean and Jacobian entries back to the camera-space center,
    // then to the world position.
    let mut d_p = Vector3::zeros();
    d_p.x = acc.mean2d.x * fx * inv_z + d_j0.z * (-fx * inv_z * inv_z);
    d_p.y = acc.mean2d.y * fy * inv_z + d_j1.z * (-fy * inv_z * inv_z);
    d_p.z = -acc.mean2d.x * fx * p.x * inv_z * inv_z
        - acc.mean2d.y * fy * p.y * inv_z * inv_z
        + d_j0.x * (-fx * inv_z * inv_z)
        + d_j0.z * (2.0 * fx * p.x * inv_z * inv_z * inv_z)
        + d_j1.y * (-fy * inv_z * inv_z)
        + d_j1.z * (2.0 * fy * p.y * inv_z * inv_z * inv_z)
        + acc.depth;
    let d_pos = cam.rotation.transpose() * d_p;

    // Smoothing chain: s' = sqrt(s^2 + sigma^2) and the opacity
    // compensation prod_k s_k / s'_k.
    let sig2 = s.sigma * s.sigma;
    let comp = if s.sigma == 0.0 {
        1.0
    } else {
        (0..3).map(|k| g.scale[k] / smoothed.scale[k]).product()
    };
    let mut d_scale = Vector3::zeros();
    for k in 0..3 {
        let sk = g.scale[k];
        let spk = smoothed.scale[k];
        d_scale[k] = d_scale_sm[k] * (sk / spk)
            + acc.alpha_eff * g.opacity * comp * sig2 / (sk * spk * spk);
    }
    let d_opacity = acc.alpha_eff * comp;

    grads.position[s.idx] += d_pos;
    grads.scale[s.idx] += d_scale;
    for k in 0..4 {
        grads.rotation[s.idx][k] += d_q[k];
    }
    grads.color[s.idx] += acc.color;
    grads.opacity[s.idx] += d_opacity;
}

/// Frobenius product of `d_rot` with each of the four rotation-matrix
/// derivatives w.r.t. the unit quaternion components.
fn rotation_quat_vjp(q: [f64; 4], d_rot: &Matrix3<f64>) -> [f64; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    [
        dw.component_mul(d_rot).sum(),
        dx.component_mul(d_rot).sum(),
        dy.component_mul(d_rot).sum(),
        dz.component_mul(d_rot).sum(),
    ]
}
