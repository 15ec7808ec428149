//! PNG import/export. Conversion between float buffers and 8-bit samples
//! is value/255 with no gamma transform; out-of-range floats clamp.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::buffer::{DepthBuffer, ImageBuffer, MaskBuffer};
use crate::error::Error;
use crate::Result;

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let dynimg = match img.channels {
        1 => {
            let mut out = GrayImage::new(w, h);
            for (i, p) in out.pixels_mut().enumerate() {
                p.0 = [to_u8(img.data[i])];
            }
            DynamicImage::ImageLuma8(out)
        }
        3 => {
            let mut out = RgbImage::new(w, h);
            for (i, p) in out.pixels_mut().enumerate() {
                p.0 = [
                    to_u8(img.data[i * 3]),
                    to_u8(img.data[i * 3 + 1]),
                    to_u8(img.data[i * 3 + 2]),
                ];
            }
            DynamicImage::ImageRgb8(out)
        }
        c => unreachable!("image buffers are 1- or 3-channel, got {c}"),
    };
    dynimg
        .save(path)
        .map_err(|e| Error::format(path, format!("png write failed: {e}")))
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let dynimg = image::open(path).map_err(|e| Error::format(path, format!("png read failed: {e}")))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let out = match dynimg {
        DynamicImage::ImageLuma8(g) => ImageBuffer::from_data(
            w,
            h,
            1,
            g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        ),
        other => {
            let rgb = other.to_rgb8();
            let mut data = Vec::with_capacity(w * h * 3);
            for p in rgb.pixels() {
                data.extend(p.0.iter().map(|&v| v as f64 / 255.0));
            }
            ImageBuffer::from_data(w, h, 3, data)
        }
    };
    Ok(out)
}

/// Mask visualization: 1 renders white, 0 black.
pub fn write_mask_png(path: &Path, m: &MaskBuffer) -> Result<()> {
    let img = ImageBuffer::from_data(
        m.width,
        m.height,
        1,
        m.data.iter().map(|&v| v as f64).collect(),
    );
    write_png(path, &img)
}

/// Depth visualization normalized to the covered pixels' range (near is
/// dark); uncovered pixels render black.
pub fn write_depth_png(path: &Path, d: &DepthBuffer) -> Result<()> {
    let covered: Vec<f64> = d
        .depth
        .iter()
        .zip(&d.coverage)
        .filter(|(_, &c)| c >= crate::loss::DEPTH_COVERAGE_MIN)
        .map(|(&v, _)| v)
        .collect();
    let (lo, hi) = covered
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = ImageBuffer::from_data(
        d.width,
        d.height,
        1,
        d.depth
            .iter()
            .zip(&d.coverage)
            .map(|(&v, &c)| {
                if c >= crate::loss::DEPTH_COVERAGE_MIN {
                    (v - lo) / span
                } else {
                    0.0
                }
            })
            .collect(),
    );
    write_png(path, &img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let dir = std::env::temp_dir().join("srsplat_png_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.png");
        let mut img = ImageBuffer::new(4, 3, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        write_png(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert!(img.same_shape(&back));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn gray_png_reads_as_single_channel() {
        let dir = std::env::temp_dir().join("srsplat_png_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gray.png");
        let img = ImageBuffer::filled(5, 5, 1, 0.5);
        write_png(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.channels, 1);
        assert!((back.data[0] - 0.5).abs() < 1e-2);
    }
}
