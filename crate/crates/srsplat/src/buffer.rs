//! Dense pixel buffers shared by the renderer, losses, and file IO.
//!
//! All buffers are row-major with interleaved channels and use f64 in
//! memory; file interchange quantizes to f32.

/// Row-major interleaved image, 1 or 3 channels, values nominally in [0, 1]
/// for color data (losses and metrics do not clamp).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(
            channels == 1 || channels == 3,
            "image buffers are 1- or 3-channel, got {channels}"
        );
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        let mut b = Self::new(width, height, channels);
        b.data.fill(value);
        b
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert!(channels == 1 || channels == 3);
        assert_eq!(data.len(), width * height * channels, "data length mismatch");
        ImageBuffer {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, ch: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && ch < self.channels);
        (y * self.width + x) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[self.index(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, v: f64) {
        let i = self.index(x, y, ch);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// One channel as a standalone 1-channel buffer.
    pub fn channel(&self, ch: usize) -> ImageBuffer {
        assert!(ch < self.channels);
        let mut out = ImageBuffer::new(self.width, self.height, 1);
        for i in 0..self.width * self.height {
            out.data[i] = self.data[i * self.channels + ch];
        }
        out
    }

    /// Quantize every sample through f32, matching a round trip through
    /// the on-disk representation.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Per-pixel alpha-composited depth plus coverage (one minus the final
/// transmittance). Pixels with low coverage carry unreliable depth and are
/// excluded from depth losses.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub coverage: Vec<f64>,
}

impl DepthBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        DepthBuffer {
            width,
            height,
            depth: vec![0.0; width * height],
            coverage: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn quantize_f32(&mut self) {
        for v in &mut self.depth {
            *v = *v as f32 as f64;
        }
        for v in &mut self.coverage {
            *v = *v as f32 as f64;
        }
    }

    /// Depth plane as a 1-channel image (coverage dropped), for resampling
    /// and file export.
    pub fn depth_image(&self) -> ImageBuffer {
        ImageBuffer::from_data(self.width, self.height, 1, self.depth.clone())
    }

    /// Treat a plain depth image as fully covered (external guidance depth
    /// has no transmittance record).
    pub fn from_depth_image(img: &ImageBuffer) -> Self {
        assert_eq!(img.channels, 1, "depth images are 1-channel");
        DepthBuffer {
            width: img.width,
            height: img.height,
            depth: img.data.clone(),
            coverage: vec![1.0; img.width * img.height],
        }
    }
}

/// Binary per-pixel mask; 1 routes a pixel to internal-guidance
/// supervision, 0 to external.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl MaskBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        MaskBuffer {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(value <= 1);
        MaskBuffer {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Fraction of pixels set to 1.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.count_ones() as f64 / self.data.len() as f64
    }
}
