//! Versioned binary container for optimizer state and other float arrays.
//!
//! Layout, all little-endian: magic `IESR`, u32 version, u32 field count,
//! then per field a u16 name length, the UTF-8 name, a u32 element count,
//! and that many f32 values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::Result;

pub const MAGIC: &[u8; 4] = b"IESR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub version: u32,
    pub fields: Vec<(String, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            version: VERSION,
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, data: Vec<f32>) {
        self.fields.push((name.to_string(), data));
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
    }

    pub fn require(&self, path: &Path, name: &str) -> Result<&[f32]> {
        self.get(name)
            .ok_or_else(|| Error::format(path, format!("checkpoint missing field '{name}'")))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&ckpt.version.to_le_bytes());
    buf.extend_from_slice(&(ckpt.fields.len() as u32).to_le_bytes());
    for (name, data) in &ckpt.fields {
        assert!(name.len() <= u16::MAX as usize, "field name too long");
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(data.len() as u32).to_le_bytes());
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;

    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::format(path, "truncated checkpoint"));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let magic = take(&mut pos, 4)?;
    if magic != MAGIC {
        return Err(Error::format(path, "bad magic, not a checkpoint file"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let n_fields = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;

    let mut ckpt = Checkpoint {
        version,
        fields: Vec::with_capacity(n_fields),
    };
    for _ in 0..n_fields {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(&mut pos, name_len)?)
            .map_err(|_| Error::format(path, "field name is not UTF-8"))?
            .to_string();
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let bytes = take(&mut pos, count * 4)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ckpt.fields.push((name, data));
    }
    if pos != buf.len() {
        return Err(Error::format(path, "trailing bytes after last field"));
    }
    Ok(ckpt)
}
