//! File formats: float-image interchange (FIMG), PNG import/export, scene
//! and camera text files, the binary checkpoint container, and the external
//! guidance manifest.

pub mod checkpoint;
pub mod fimg;
pub mod manifest;
pub mod pngio;
pub mod scene;

/// FNV-1a over bytes; used for content-addressed cache directories.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_input_sensitive() {
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
        assert_ne!(content_hash(b""), content_hash(b"\0"));
    }
}
