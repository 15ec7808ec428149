//! Guidance manifest: a TSV mapping view ids to external image and depth
//! paths. Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub view_id: String,
    pub image_path: PathBuf,
    pub depth_path: PathBuf,
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            e.view_id,
            e.image_path.display(),
            e.depth_path.display()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        if cols[0].is_empty() {
            return Err(Error::parse(path, line_no, "empty view id"));
        }
        entries.push(ManifestEntry {
            view_id: cols[0].to_string(),
            image_path: resolve(cols[1]),
            depth_path: resolve(cols[2]),
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_relative_resolution() {
        let dir = std::env::temp_dir().join("srsplat_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.tsv");
        let entries = vec![
            ManifestEntry {
                view_id: "view_000".into(),
                image_path: "images/view_000.png".into(),
                depth_path: "depth/view_000.fimg".into(),
            },
            ManifestEntry {
                view_id: "view_001".into(),
                image_path: "/abs/view_001.png".into(),
                depth_path: "/abs/view_001.fimg".into(),
            },
        ];
        save_manifest(&path, &entries).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].view_id, "view_000");
        assert_eq!(back[0].image_path, dir.join("images/view_000.png"));
        assert_eq!(back[1].image_path, PathBuf::from("/abs/view_001.png"));
    }

    #[test]
    fn manifest_bad_column_count_reports_line() {
        let dir = std::env::temp_dir().join("srsplat_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.tsv");
        std::fs::write(&path, "a\timg.png\td.fimg\nb\tonly_two\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("bad.tsv:2:"));
    }
}
