//! Image quality metrics over [0,1] float buffers.

use crate::buffer::ImageBuffer;
use crate::error::Error;
use crate::loss::ssim::ssim_map;
use crate::Result;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Config(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let n = a.data.len() as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio with peak 1.0. Identical inputs give
/// positive infinity, printed as the sentinel `inf` by `format_metric`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

/// Mean structural similarity with the standard 11-tap sigma-1.5 window
/// and stabilizers (0.01², 0.03²).
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Config(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let map = ssim_map(a, b, 11, 1.5, 0.01 * 0.01, 0.03 * 0.03);
    Ok(map.data.iter().sum::<f64>() / map.data.len() as f64)
}

/// CSV rendering of a metric value; infinities become the `inf` sentinel.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.12}")
    }
}

pub fn parse_metric(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_are_perfect() {
        let img = ImageBuffer::filled(8, 8, 3, 0.3);
        assert!(psnr(&img, &img).unwrap().is_infinite());
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_has_closed_form_psnr() {
        let a = ImageBuffer::filled(8, 8, 3, 0.0);
        let b = ImageBuffer::filled(8, 8, 3, 0.1);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn psnr_matches_direct_formula_on_random_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = ImageBuffer::from_data(
            8,
            8,
            3,
            (0..192).map(|_| rng.random_range(0.0..1.0)).collect(),
        );
        let b = ImageBuffer::from_data(
            8,
            8,
            3,
            (0..192).map(|_| rng.random_range(0.0..1.0)).collect(),
        );
        let direct = {
            let s: f64 = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            10.0 * (192.0 / s).log10()
        };
        assert!((psnr(&a, &b).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = ImageBuffer::filled(8, 8, 3, 0.0);
        let b = ImageBuffer::filled(4, 4, 3, 0.0);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn metric_formatting_round_trips() {
        assert_eq!(format_metric(f64::INFINITY), "inf");
        assert_eq!(parse_metric("inf"), Some(f64::INFINITY));
        let v = 26.4321987;
        let back = parse_metric(&format_metric(v)).unwrap();
        assert!((back - v).abs() < 1e-9);
    }
}
