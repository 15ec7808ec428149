//! Separable Catmull-Rom bicubic resampling, used to synthesize fallback
//! external guidance and to build low-resolution training inputs from
//! high-resolution ground truth.
//!
//! Upsampling evaluates the 4-tap kernel at the source phase; downsampling
//! stretches the same kernel by the inverse scale so it prefilters
//! area-correctly. Both directions normalize by the weight sum and clamp
//! source indices at the edges.

use crate::buffer::ImageBuffer;

/// Catmull-Rom kernel (cubic with a = -0.5), support |t| < 2.
pub fn catmull_rom(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Tap weights for one output coordinate along one axis.
struct Taps {
    start: isize,
    weights: Vec<f64>,
}

fn axis_taps(src_n: usize, dst_n: usize) -> Vec<Taps> {
    let scale = dst_n as f64 / src_n as f64;
    // When shrinking, the kernel is stretched by 1/scale to prefilter.
    let filter_scale = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let radius = 2.0 * filter_scale;
    (0..dst_n)
        .map(|d| {
            let center = (d as f64 + 0.5) / scale - 0.5;
            let start = (center - radius).ceil() as isize;
            let end = (center + radius).floor() as isize;
            let mut weights: Vec<f64> = (start..=end)
                .map(|s| catmull_rom((s as f64 - center) / filter_scale))
                .collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            Taps { start, weights }
        })
        .collect()
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Resizes to the given dimensions, channels independently.
pub fn resize(img: &ImageBuffer, dst_w: usize, dst_h: usize) -> ImageBuffer {
    assert!(dst_w >= 1 && dst_h >= 1);
    let xt = axis_taps(img.width, dst_w);
    let yt = axis_taps(img.height, dst_h);
    let c = img.channels;

    // Horizontal pass.
    let mut mid = vec![0.0; dst_w * img.height * c];
    for y in 0..img.height {
        for (x, t) in xt.iter().enumerate() {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &w) in t.weights.iter().enumerate() {
                    let sx = clamp_index(t.start + k as isize, img.width);
                    acc += w * img.data[(y * img.width + sx) * c + ch];
                }
                mid[(y * dst_w + x) * c + ch] = acc;
            }
        }
    }
    // Vertical pass.
    let mut out = ImageBuffer::new(dst_w, dst_h, c);
    for (y, t) in yt.iter().enumerate() {
        for x in 0..dst_w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, &w) in t.weights.iter().enumerate() {
                    let sy = clamp_index(t.start + k as isize, img.height);
                    acc += w * mid[(sy * dst_w + x) * c + ch];
                }
                out.data[(y * dst_w + x) * c + ch] = acc;
            }
        }
    }
    out
}

/// Integer-factor upsample.
pub fn upsample(img: &ImageBuffer, factor: usize) -> ImageBuffer {
    assert!(factor >= 1);
    resize(img, img.width * factor, img.height * factor)
}

/// Integer-factor downsample; dimensions must divide evenly.
pub fn downsample(img: &ImageBuffer, factor: usize) -> ImageBuffer {
    assert!(factor >= 1);
    assert!(
        img.width % factor == 0 && img.height % factor == 0,
        "dimensions {}x{} not divisible by {factor}",
        img.width,
        img.height
    );
    resize(img, img.width / factor, img.height / factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_interpolates_and_vanishes_at_integers() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert_eq!(catmull_rom(1.0), 0.0);
        assert_eq!(catmull_rom(2.0), 0.0);
        assert_eq!(catmull_rom(2.5), 0.0);
        assert_eq!(catmull_rom(-0.75), catmull_rom(0.75));
    }

    #[test]
    fn kernel_partition_of_unity() {
        for phase in [0.0, 0.1, 0.25, 0.5, 0.9] {
            let s: f64 = (-2..=2).map(|k| catmull_rom(phase - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12, "phase {phase}: {s}");
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(5, 4, 3, 0.5);
        let up = upsample(&img, 4);
        assert!(up.data.iter().all(|&v| v == 0.5), "0.5 reproduces exactly");
        let img = ImageBuffer::filled(8, 8, 1, 0.371);
        for v in resize(&img, 20, 6).data {
            assert!((v - 0.371).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_matches_kernel_values() {
        // 2x upsample: output centers land at source phases 0.25 and 0.75,
        // so the response is the kernel evaluated at distance to the spike.
        let mut img = ImageBuffer::new(9, 9, 1);
        img.set(4, 4, 0, 1.0);
        let up = upsample(&img, 2);
        for dx in 0..6 {
            let out_x = 5 + dx; // interior outputs around the spike
            let center = (out_x as f64 + 0.5) / 2.0 - 0.5;
            let want_row: f64 = catmull_rom(center - 4.0);
            // Sample along the spike row at the spike's vertical phase.
            let out_y = 8usize;
            let cy = (out_y as f64 + 0.5) / 2.0 - 0.5;
            let want = want_row * catmull_rom(cy - 4.0);
            let got = up.get(out_x, out_y, 0);
            assert!((got - want).abs() < 1e-12, "dx={dx}: {got} vs {want}");
        }
    }

    #[test]
    fn round_trip_is_close_on_smooth_images() {
        // Smooth 2D ramp-plus-sine test image.
        let n = 32;
        let mut img = ImageBuffer::new(n, n, 1);
        for y in 0..n {
            for x in 0..n {
                let v = 0.4 + 0.3 * (x as f64 / n as f64)
                    + 0.2 * ((y as f64 / n as f64) * std::f64::consts::PI).sin();
                img.set(x, y, 0, v);
            }
        }
        let up = upsample(&img, 4);
        let back = downsample(&up, 4);
        let mae = img
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / img.data.len() as f64;
        assert!(mae < 0.02, "round-trip mean absolute error {mae}");
    }

    #[test]
    fn integer_shift_equivariance_in_the_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 16;
        let data: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let img = ImageBuffer::from_data(n, n, 1, data);
        let mut shifted = ImageBuffer::new(n, n, 1);
        for y in 0..n {
            for x in 1..n {
                shifted.set(x, y, 0, img.get(x - 1, y, 0));
            }
        }
        let a = upsample(&img, 2);
        let b = upsample(&shifted, 2);
        for y in 0..2 * n {
            for x in 8..2 * n - 8 {
                let d = (a.get(x, y, 0) - b.get(x + 2, y, 0)).abs();
                assert!(d < 1e-12, "({x},{y}): {d}");
            }
        }
    }
}
