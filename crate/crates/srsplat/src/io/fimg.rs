//! FIMG: the float-image interchange format.
//!
//! Layout: magic `FIMG`, then little-endian u32 width, height, channels,
//! then width*height*channels little-endian f32 samples, row-major with
//! interleaved channels. In-memory f64 buffers quantize to f32 on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::buffer::{DepthBuffer, ImageBuffer};
use crate::error::Error;
use crate::Result;

const MAGIC: &[u8; 4] = b"FIMG";

pub fn write_raw(path: &Path, width: u32, height: u32, channels: u32, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), (width * height * channels) as usize);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    for v in [width, height, channels] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_raw(path: &Path) -> Result<(u32, u32, u32, Vec<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected FIMG")));
    }
    let mut u32buf = [0u8; 4];
    let mut dims = [0u32; 3];
    for d in &mut dims {
        r.read_exact(&mut u32buf).map_err(io_err)?;
        *d = u32::from_le_bytes(u32buf);
    }
    let [width, height, channels] = dims;
    let count = width as usize * height as usize * channels as usize;
    if count == 0 || count > (1 << 30) {
        return Err(Error::format(
            path,
            format!("implausible dimensions {width}x{height}x{channels}"),
        ));
    }
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(io_err)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((width, height, channels, data))
}

pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    let data: Vec<f32> = img.data.iter().map(|&v| v as f32).collect();
    write_raw(
        path,
        img.width as u32,
        img.height as u32,
        img.channels as u32,
        &data,
    )
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let (w, h, c, data) = read_raw(path)?;
    if c != 1 && c != 3 {
        return Err(Error::format(path, format!("expected 1 or 3 channels, got {c}")));
    }
    Ok(ImageBuffer::from_data(
        w as usize,
        h as usize,
        c as usize,
        data.into_iter().map(f64::from).collect(),
    ))
}

/// Depth with coverage as a 2-channel FIMG.
pub fn write_depth(path: &Path, d: &DepthBuffer) -> Result<()> {
    let mut data = Vec::with_capacity(d.depth.len() * 2);
    for i in 0..d.depth.len() {
        data.push(d.depth[i] as f32);
        data.push(d.coverage[i] as f32);
    }
    write_raw(path, d.width as u32, d.height as u32, 2, &data)
}

/// Reads a depth buffer: 2-channel files carry (depth, coverage);
/// 1-channel files (external estimator outputs) are treated as fully
/// covered.
pub fn read_depth(path: &Path) -> Result<DepthBuffer> {
    let (w, h, c, data) = read_raw(path)?;
    let n = (w * h) as usize;
    match c {
        1 => Ok(DepthBuffer {
            width: w as usize,
            height: h as usize,
            depth: data.into_iter().map(f64::from).collect(),
            coverage: vec![1.0; n],
        }),
        2 => {
            let mut depth = Vec::with_capacity(n);
            let mut coverage = Vec::with_capacity(n);
            for pair in data.chunks_exact(2) {
                depth.push(pair[0] as f64);
                coverage.push(pair[1] as f64);
            }
            Ok(DepthBuffer {
                width: w as usize,
                height: h as usize,
                depth,
                coverage,
            })
        }
        other => Err(Error::format(
            path,
            format!("depth files have 1 or 2 channels, got {other}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_is_exact_at_f32() {
        let dir = std::env::temp_dir().join("srsplat_fimg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.fimg");
        let mut img = ImageBuffer::new(3, 2, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f64) * 0.1234567 + 0.01;
        }
        write_image(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        let mut quantized = img.clone();
        quantized.quantize_f32();
        assert_eq!(back, quantized);
    }

    #[test]
    fn depth_round_trip_keeps_coverage() {
        let dir = std::env::temp_dir().join("srsplat_fimg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("depth.fimg");
        let d = DepthBuffer {
            width: 2,
            height: 2,
            depth: vec![1.5, 2.5, 3.5, 4.5],
            coverage: vec![1.0, 0.5, 0.25, 0.0],
        };
        write_depth(&path, &d).unwrap();
        let back = read_depth(&path).unwrap();
        assert_eq!(back.depth, d.depth);
        assert_eq!(back.coverage, d.coverage);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = std::env::temp_dir().join("srsplat_fimg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.fimg");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(read_raw(&path).is_err());
    }
}
