//! Structural similarity with a separable Gaussian window and reflect
//! padding, plus the exact adjoint used for analytic gradients.
//!
//! Images smaller than the window are handled by the same reflection rule
//! (indices fold back without repeating the edge sample), so SSIM is
//! defined for any size >= 1.

use crate::buffer::ImageBuffer;

/// Reflects an out-of-range index into [0, n); the extension has period
/// 2(n-1) and does not repeat edge samples.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Normalized 1D Gaussian window.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1 && size >= 3, "window must be odd and >= 3");
    let r = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable blur of one channel plane (length w*h).
fn blur_plane(src: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let r = win.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - r as isize, w);
                acc += wk * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r as isize, h);
                acc += wk * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Exact transpose of `blur_plane`: scatters with the same reflected
/// indices, so <blur(x), y> = <x, blur_adjoint(y)> holds to rounding.
fn blur_adjoint_plane(src: &[f64], w: usize, h: usize, win: &[f64]) -> Vec<f64> {
    let r = win.len() / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = src[y * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, &wk) in win.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - r as isize, h);
                tmp[sy * w + x] += wk * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = tmp[y * w + x];
            if v == 0.0 {
                continue;
            }
            for (k, &wk) in win.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - r as isize, w);
                out[y * w + sx] += wk * v;
            }
        }
    }
    out
}

/// Per-pixel-per-channel SSIM between `a` and `b`.
pub fn ssim_map(
    a: &ImageBuffer,
    b: &ImageBuffer,
    window: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
) -> ImageBuffer {
    assert!(a.same_shape(b), "ssim inputs must share dimensions");
    let win = gaussian_window(window, sigma);
    let (w, h) = (a.width, a.height);
    let mut out = ImageBuffer::new(w, h, a.channels);
    for ch in 0..a.channels {
        let x: Vec<f64> = plane(a, ch);
        let y: Vec<f64> = plane(b, ch);
        let stats = WindowStats::new(&x, &y, w, h, &win);
        for i in 0..w * h {
            out.data[i * a.channels + ch] = stats.value(i, c1, c2);
        }
    }
    out
}

/// Windowed first and second moments shared by the value and the VJP.
struct WindowStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

impl WindowStats {
    fn new(x: &[f64], y: &[f64], w: usize, h: usize, win: &[f64]) -> Self {
        let mu_x = blur_plane(x, w, h, win);
        let mu_y = blur_plane(y, w, h, win);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        let mut sxx = blur_plane(&xx, w, h, win);
        let mut syy = blur_plane(&yy, w, h, win);
        let mut sxy = blur_plane(&xy, w, h, win);
        for i in 0..w * h {
            sxx[i] -= mu_x[i] * mu_x[i];
            syy[i] -= mu_y[i] * mu_y[i];
            sxy[i] -= mu_x[i] * mu_y[i];
        }
        WindowStats {
            mu_x,
            mu_y,
            sxx,
            syy,
            sxy,
        }
    }

    #[inline]
    fn value(&self, i: usize, c1: f64, c2: f64) -> f64 {
        let a1 = 2.0 * self.mu_x[i] * self.mu_y[i] + c1;
        let a2 = 2.0 * self.sxy[i] + c2;
        let b1 = self.mu_x[i] * self.mu_x[i] + self.mu_y[i] * self.mu_y[i] + c1;
        let b2 = self.sxx[i] + self.syy[i] + c2;
        (a1 * a2) / (b1 * b2)
    }
}

/// Gradient of `sum_i upstream_i * ssim_map(a,b)_i` with respect to `a`.
pub fn ssim_map_vjp(
    a: &ImageBuffer,
    b: &ImageBuffer,
    window: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
    upstream: &ImageBuffer,
) -> ImageBuffer {
    assert!(a.same_shape(b) && a.same_shape(upstream));
    let win = gaussian_window(window, sigma);
    let (w, h) = (a.width, a.height);
    let mut out = ImageBuffer::new(w, h, a.channels);
    for ch in 0..a.channels {
        let x = plane(a, ch);
        let y = plane(b, ch);
        let stats = WindowStats::new(&x, &y, w, h, &win);

        // Per-window-position partials of S, folded with the upstream
        // weights into three fields that each pass through one adjoint blur.
        let mut f_mu = vec![0.0; w * h];
        let mut f_sxx = vec![0.0; w * h];
        let mut f_sxy = vec![0.0; w * h];
        for i in 0..w * h {
            let u = upstream.data[i * a.channels + ch];
            if u == 0.0 {
                continue;
            }
            let a1 = 2.0 * stats.mu_x[i] * stats.mu_y[i] + c1;
            let a2 = 2.0 * stats.sxy[i] + c2;
            let b1 = stats.mu_x[i] * stats.mu_x[i] + stats.mu_y[i] * stats.mu_y[i] + c1;
            let b2 = stats.sxx[i] + stats.syy[i] + c2;
            let s = (a1 * a2) / (b1 * b2);
            let d_a1 = a2 / (b1 * b2);
            let d_a2 = a1 / (b1 * b2);
            let d_b1 = -s / b1;
            let d_b2 = -s / b2;
            let d_mu = d_a1 * 2.0 * stats.mu_y[i] + d_b1 * 2.0 * stats.mu_x[i];
            let d_sxx = d_b2;
            let d_sxy = d_a2 * 2.0;
            // sxx and sxy subtract mu products, so their mu-dependence folds
            // into the mu field.
            f_mu[i] = u * (d_mu - 2.0 * stats.mu_x[i] * d_sxx - stats.mu_y[i] * d_sxy);
            f_sxx[i] = u * d_sxx;
            f_sxy[i] = u * d_sxy;
        }
        let g_mu = blur_adjoint_plane(&f_mu, w, h, &win);
        let g_xx = blur_adjoint_plane(&f_sxx, w, h, &win);
        let g_xy = blur_adjoint_plane(&f_sxy, w, h, &win);
        for i in 0..w * h {
            out.data[i * a.channels + ch] = g_mu[i] + 2.0 * x[i] * g_xx[i] + y[i] * g_xy[i];
        }
    }
    out
}

fn plane(img: &ImageBuffer, ch: usize) -> Vec<f64> {
    (0..img.width * img.height)
        .map(|i| img.data[i * img.channels + ch])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize, c: usize) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect();
        ImageBuffer::from_data(w, h, c, data)
    }

    #[test]
    fn reflect_folds_without_edge_repeat() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(2, 5), 2);
        assert_eq!(reflect(-1, 2), 1);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let w = gaussian_window(11, 1.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..5 {
            assert_eq!(w[k], w[10 - k]);
        }
        assert!(w[5] > w[4]);
    }

    #[test]
    fn blur_preserves_constants() {
        let win = gaussian_window(11, 1.5);
        let src = vec![0.5; 7 * 9];
        let out = blur_plane(&src, 7, 9, &win);
        for v in out {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        let win = gaussian_window(7, 1.2);
        let (w, h) = (9, 6);
        let x = random_image(1, w, h, 1).data;
        let y = random_image(2, w, h, 1).data;
        let bx = blur_plane(&x, w, h, &win);
        let aty = blur_adjoint_plane(&y, w, h, &win);
        let lhs: f64 = bx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn identical_images_have_unit_ssim() {
        let img = random_image(3, 16, 16, 3);
        let map = ssim_map(&img, &img, 11, 1.5, 0.01 * 0.01, 0.03 * 0.03);
        for v in map.data {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_images_still_evaluate() {
        let a = random_image(4, 3, 2, 1);
        let b = random_image(5, 3, 2, 1);
        let map = ssim_map(&a, &b, 11, 1.5, 0.01 * 0.01, 0.03 * 0.03);
        assert!(map.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let a = random_image(6, 10, 8, 3);
        let b = random_image(7, 10, 8, 3);
        let (win, sg, c1, c2) = (7, 1.5, 1e-4, 9e-4);
        let upstream = random_image(8, 10, 8, 3);
        let grad = ssim_map_vjp(&a, &b, win, sg, c1, c2, &upstream);
        let objective = |img: &ImageBuffer| {
            ssim_map(img, &b, win, sg, c1, c2)
                .data
                .iter()
                .zip(&upstream.data)
                .map(|(s, u)| s * u)
                .sum::<f64>()
        };
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let i = rng.random_range(0..a.data.len());
            let mut hi = a.clone();
            hi.data[i] += h;
            let mut lo = a.clone();
            lo.data[i] -= h;
            let fd = (objective(&hi) - objective(&lo)) / (2.0 * h);
            let got = grad.data[i];
            assert!(
                (fd - got).abs() < 1e-5 * fd.abs().max(got.abs()).max(1.0),
                "index {i}: analytic {got} vs fd {fd}"
            );
        }
    }
}
