//! Discrepancy between internal and external guidance, and the binary mask
//! that routes per-pixel supervision between them.

use crate::buffer::{ImageBuffer, MaskBuffer};

/// Per-pixel relative discrepancy |i - e| / (i + epsilon), averaged over
/// channels. Output is 1-channel, values >= 0.
pub fn discrepancy_map(i: &ImageBuffer, e: &ImageBuffer, epsilon: f64) -> ImageBuffer {
    assert!(i.same_shape(e), "discrepancy inputs must share dimensions");
    assert!(epsilon > 0.0);
    let mut out = ImageBuffer::new(i.width, i.height, 1);
    let c = i.channels as f64;
    for p in 0..i.width * i.height {
        let mut acc = 0.0;
        for ch in 0..i.channels {
            let iv = i.data[p * i.channels + ch];
            let ev = e.data[p * i.channels + ch];
            acc += (iv - ev).abs() / (iv + epsilon);
        }
        out.data[p] = acc / c;
    }
    out
}

/// M(p) = 1 iff D(p) >= threshold. A pixel at 1 is supervised by the
/// internal reference, at 0 by the external one.
pub fn binary_mask(d: &ImageBuffer, threshold: f64) -> MaskBuffer {
    assert_eq!(d.channels, 1, "discrepancy maps are 1-channel");
    assert!(threshold >= 0.0);
    let mut m = MaskBuffer::new(d.width, d.height);
    for (out, &v) in m.data.iter_mut().zip(&d.data) {
        *out = (v >= threshold) as u8;
    }
    m
}

/// Complement mask (1 - M).
pub fn invert_mask(m: &MaskBuffer) -> MaskBuffer {
    MaskBuffer {
        width: m.width,
        height: m.height,
        data: m.data.iter().map(|v| 1 - v).collect(),
    }
}
