//! Catmull-Rom bicubic resampling: the interpolation kernel, exactness on
//! constants, and how much a downsample/upsample round trip loses on a
//! smooth image. This is the resampler behind low-resolution training
//! inputs and the fallback external guidance.

use srsplat::resample::{catmull_rom, downsample, resize, upsample};
use srsplat::ImageBuffer;

fn main() {
    // The kernel interpolates (weight 1 at 0, weight 0 at other integers)
    // and has negative lobes, which is what keeps edges from smearing the
    // way bilinear does.
    println!("catmull_rom(0)    = {}", catmull_rom(0.0));
    println!("catmull_rom(1)    = {}", catmull_rom(1.0));
    println!("catmull_rom(0.5)  = {}", catmull_rom(0.5));
    println!("catmull_rom(1.5)  = {}", catmull_rom(1.5));
    assert_eq!(catmull_rom(0.0), 1.0);
    assert_eq!(catmull_rom(1.0), 0.0);
    assert!(catmull_rom(1.5) < 0.0);

    // Normalized tap weights reproduce constants exactly at any size ratio,
    // including non-integer ones.
    let flat = ImageBuffer::filled(13, 9, 3, 0.37);
    for (w, h) in [(26, 18), (52, 36), (7, 5), (19, 11)] {
        let r = resize(&flat, w, h);
        let max_err = r
            .data
            .iter()
            .map(|v| (v - 0.37).abs())
            .fold(0.0_f64, f64::max);
        println!("resize 13x9 -> {w}x{h}: max deviation from constant {max_err:.2e}");
        assert!(max_err < 1e-12);
    }

    // A smooth test card survives a 2x round trip nearly intact; the loss
    // is what the prefilter genuinely cannot recover.
    let (w, h) = (64, 48);
    let mut card = ImageBuffer::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 / (w - 1) as f64;
            let v = y as f64 / (h - 1) as f64;
            card.set(x, y, 0, 0.5 + 0.5 * (6.0 * u).sin() * (4.0 * v).cos());
            card.set(x, y, 1, u * v);
            card.set(x, y, 2, 0.5 + 0.3 * (3.0 * (u + v)).sin());
        }
    }
    let down = downsample(&card, 2);
    let back = upsample(&down, 2);
    assert_eq!(back.width, card.width);
    assert_eq!(back.height, card.height);
    let mae = card
        .data
        .iter()
        .zip(back.data.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / card.data.len() as f64;
    println!("2x round trip on {w}x{h} smooth card: MAE {mae:.6}");
    assert!(mae < 0.01);

    // An impulse upsampled shows the kernel footprint: a 4x4 neighborhood
    // of mostly-positive weights with the negative ring around it.
    let mut impulse = ImageBuffer::new(8, 8, 1);
    impulse.set(4, 4, 0, 1.0);
    let up = upsample(&impulse, 4);
    let min = up.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = up.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("impulse response after 4x upsample: min {min:.4}, max {max:.4}");
    assert!(min < 0.0, "overshoot is part of the kernel");
    assert!(max <= 1.0 + 1e-12);
}
