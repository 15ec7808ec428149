//! Per-view guidance assembly.
//!
//! Each training view gets a GuidanceSet holding two image/depth pairs at
//! the target resolution: an external pair ingested from disk (or
//! synthesized by bicubic upsampling when no files are supplied) and an
//! internal pair produced by super-resolution splatting of a frozen scene.
//! All four buffers must agree in dimensions before training may start.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::buffer::{DepthBuffer, ImageBuffer};
use crate::camera::Camera;
use crate::error::Error;
use crate::gaussian::Gaussian3D;
use crate::io::{content_hash, fimg, manifest::ManifestEntry, pngio};
use crate::render::{sr_splat, RenderSettings};
use crate::resample;
use crate::Result;

#[derive(Debug, Clone)]
pub struct GuidanceSet {
    pub view_id: String,
    pub external_image: ImageBuffer,
    pub external_depth: DepthBuffer,
    pub internal_image: ImageBuffer,
    pub internal_depth: DepthBuffer,
}

impl GuidanceSet {
    /// All four buffers share one resolution and the images are 3-channel.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let (w, h) = (self.external_image.width, self.external_image.height);
        let dims = [
            ("external depth", self.external_depth.width, self.external_depth.height),
            ("internal image", self.internal_image.width, self.internal_image.height),
            ("internal depth", self.internal_depth.width, self.internal_depth.height),
        ];
        for (name, dw, dh) in dims {
            if (dw, dh) != (w, h) {
                return Err(format!(
                    "view {}: {name} is {dw}x{dh}, external image is {w}x{h}",
                    self.view_id
                ));
            }
        }
        if self.external_image.channels != 3 || self.internal_image.channels != 3 {
            return Err(format!("view {}: guidance images must be 3-channel", self.view_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Ingested,
    BicubicFallback,
}

#[derive(Debug, Clone)]
pub struct GuidanceManifest {
    pub entries: Vec<ManifestEntry>,
    pub factor: usize,
    pub provenance: Provenance,
}

impl GuidanceManifest {
    pub fn load(path: &Path, factor: usize) -> Result<Self> {
        Ok(GuidanceManifest {
            entries: crate::io::manifest::load_manifest(path)?,
            factor,
            provenance: Provenance::Ingested,
        })
    }
}

/// Loads every external image/depth pair named by the manifest, checking
/// that each matches `expected` (the HR resolution, LR times factor) and is
/// free of non-finite values. All failing views are reported together so a
/// bad batch surfaces in one pass.
pub fn ingest_external(
    manifest: &GuidanceManifest,
    expected: (usize, usize),
) -> Result<BTreeMap<String, (ImageBuffer, DepthBuffer)>> {
    let mut out = BTreeMap::new();
    let mut problems = String::new();
    let mut complain = |view: &str, path: &Path, msg: &str| {
        writeln!(problems, "view {view}: {} {msg}", path.display()).expect("string write");
    };

    for e in &manifest.entries {
        let image = match load_external_image(&e.image_path) {
            Ok(img) => img,
            Err(err) => {
                complain(&e.view_id, &e.image_path, &err.to_string());
                continue;
            }
        };
        let depth = match fimg::read_depth(&e.depth_path) {
            Ok(d) => d,
            Err(err) => {
                complain(&e.view_id, &e.depth_path, &err.to_string());
                continue;
            }
        };
        let mut bad = false;
        if (image.width, image.height) != expected {
            complain(
                &e.view_id,
                &e.image_path,
                &format!(
                    "is {}x{}, expected {}x{}",
                    image.width, image.height, expected.0, expected.1
                ),
            );
            bad = true;
        }
        if (depth.width, depth.height) != expected {
            complain(
                &e.view_id,
                &e.depth_path,
                &format!(
                    "is {}x{}, expected {}x{}",
                    depth.width, depth.height, expected.0, expected.1
                ),
            );
            bad = true;
        }
        if !image.is_finite() {
            complain(&e.view_id, &e.image_path, "contains non-finite values");
            bad = true;
        }
        if depth.depth.iter().any(|v| !v.is_finite()) {
            complain(&e.view_id, &e.depth_path, "contains non-finite depth values");
            bad = true;
        }
        if !bad {
            out.insert(e.view_id.clone(), (image, depth));
        }
    }

    if !problems.is_empty() {
        return Err(Error::Config(format!("external guidance rejected:\n{problems}")));
    }
    Ok(out)
}

fn load_external_image(path: &Path) -> Result<ImageBuffer> {
    let is_fimg = path.extension().is_some_and(|e| e == "fimg");
    let img = if is_fimg {
        fimg::read_image(path)?
    } else {
        pngio::read_png(path)?
    };
    if img.channels == 1 {
        let mut rgb = ImageBuffer::new(img.width, img.height, 3);
        for (i, &v) in img.data.iter().enumerate() {
            rgb.data[i * 3] = v;
            rgb.data[i * 3 + 1] = v;
            rgb.data[i * 3 + 2] = v;
        }
        Ok(rgb)
    } else {
        Ok(img)
    }
}

/// Catmull-Rom upsampling of an LR view, the stand-in used when no
/// externally super-resolved images are supplied.
pub fn bicubic_fallback(lr: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor < 2 {
        return Err(Error::Config(format!(
            "bicubic fallback factor must be >= 2, got {factor}"
        )));
    }
    Ok(resample::upsample(lr, factor))
}

/// Cache identity for internal guidance: any change to the scene, the
/// smoothing, the cameras, or the factor must miss the cache.
fn internal_cache_key(
    scene: &[Gaussian3D],
    smoothing: Option<&[f64]>,
    views: &[(String, Camera)],
    factor: f64,
    settings: &RenderSettings,
) -> u64 {
    fn push(bytes: &mut Vec<u8>, v: f64) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut bytes = Vec::new();
    for g in scene {
        for v in [
            g.position.x, g.position.y, g.position.z,
            g.scale.x, g.scale.y, g.scale.z,
            g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
            g.color.x, g.color.y, g.color.z,
            g.opacity,
        ] {
            push(&mut bytes, v);
        }
    }
    match smoothing {
        Some(s) => {
            push(&mut bytes, 1.0);
            for &v in s {
                push(&mut bytes, v);
            }
        }
        None => push(&mut bytes, 0.0),
    }
    for (id, cam) in views {
        bytes.extend_from_slice(id.as_bytes());
        push(&mut bytes, cam.focal.x);
        push(&mut bytes, cam.focal.y);
        push(&mut bytes, cam.principal_point.x);
        push(&mut bytes, cam.principal_point.y);
        push(&mut bytes, cam.width as f64);
        push(&mut bytes, cam.height as f64);
        for r in 0..3 {
            for c in 0..3 {
                push(&mut bytes, cam.rotation[(r, c)]);
            }
            push(&mut bytes, cam.translation[r]);
        }
    }
    push(&mut bytes, factor);
    for v in [
        settings.background.x,
        settings.background.y,
        settings.background.z,
        settings.near_plane,
        settings.dilation,
        settings.cutoff,
        settings.min_transmittance,
    ] {
        push(&mut bytes, v);
    }
    content_hash(&bytes)
}

/// Renders HR internal guidance for every view by super-resolution
/// splatting of the frozen scene, caching results on disk. Buffers pass
/// through f32 before being returned so a warm cache read reproduces the
/// cold path bit for bit. A stale or unreadable cache is regenerated in
/// place with a logged notice.
pub fn build_internal_guidance(
    scene: &[Gaussian3D],
    smoothing: Option<&[f64]>,
    views: &[(String, Camera)],
    factor: f64,
    settings: &RenderSettings,
    cache_dir: Option<&Path>,
) -> Result<BTreeMap<String, (ImageBuffer, DepthBuffer)>> {
    let key = internal_cache_key(scene, smoothing, views, factor, settings);

    if let Some(dir) = cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let key_path = dir.join("cache.key");
        let warm = std::fs::read_to_string(&key_path)
            .ok()
            .is_some_and(|s| s.trim() == format!("{key:016x}"));
        if warm {
            match read_internal_cache(dir, views) {
                Ok(map) => return Ok(map),
                Err(err) => {
                    log::warn!("internal guidance cache unreadable ({err}); regenerating");
                }
            }
        }
    }

    let mut out = BTreeMap::new();
    for (id, cam) in views {
        let mut rendered = sr_splat(scene, cam, factor, smoothing, settings)?;
        rendered.image.quantize_f32();
        rendered.depth.quantize_f32();
        if let Some(dir) = cache_dir {
            fimg::write_image(&dir.join(format!("{id}.fimg")), &rendered.image)?;
            fimg::write_depth(&dir.join(format!("{id}_depth.fimg")), &rendered.depth)?;
        }
        out.insert(id.clone(), (rendered.image, rendered.depth));
    }
    if let Some(dir) = cache_dir {
        let key_path = dir.join("cache.key");
        std::fs::write(&key_path, format!("{key:016x}\n")).map_err(|e| Error::io(&key_path, e))?;
    }
    Ok(out)
}

fn read_internal_cache(
    dir: &Path,
    views: &[(String, Camera)],
) -> Result<BTreeMap<String, (ImageBuffer, DepthBuffer)>> {
    let mut out = BTreeMap::new();
    for (id, _) in views {
        let image = fimg::read_image(&dir.join(format!("{id}.fimg")))?;
        let depth = fimg::read_depth(&dir.join(format!("{id}_depth.fimg")))?;
        out.insert(id.clone(), (image, depth));
    }
    Ok(out)
}

/// Joins the external and internal maps into per-view GuidanceSets,
/// verifying view coverage and buffer dimensions up front.
pub fn assemble(
    mut external: BTreeMap<String, (ImageBuffer, DepthBuffer)>,
    mut internal: BTreeMap<String, (ImageBuffer, DepthBuffer)>,
) -> Result<Vec<GuidanceSet>> {
    let ext_ids: Vec<&String> = external.keys().collect();
    let int_ids: Vec<&String> = internal.keys().collect();
    if ext_ids != int_ids {
        return Err(Error::Config(format!(
            "external views {ext_ids:?} and internal views {int_ids:?} differ"
        )));
    }
    let ids: Vec<String> = external.keys().cloned().collect();
    let mut sets = Vec::with_capacity(ids.len());
    for id in ids {
        let (external_image, external_depth) = external.remove(&id).expect("key came from map");
        let (internal_image, internal_depth) = internal.remove(&id).expect("checked equal ids");
        let set = GuidanceSet {
            view_id: id,
            external_image,
            external_depth,
            internal_image,
            internal_depth,
        };
        set.validate().map_err(Error::Config)?;
        sets.push(set);
    }
    Ok(sets)
}

/// Standard on-disk layout rooted at a work directory.
pub struct GuidanceLayout {
    pub root: PathBuf,
}

impl GuidanceLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        GuidanceLayout { root: root.into() }
    }

    pub fn external_dir(&self) -> PathBuf {
        self.root.join("external")
    }

    pub fn internal_dir(&self) -> PathBuf {
        self.root.join("internal")
    }

    pub fn external_image(&self, view: &str) -> PathBuf {
        self.external_dir().join(format!("{view}.png"))
    }

    pub fn external_depth(&self, view: &str) -> PathBuf {
        self.external_dir().join(format!("{view}_depth.fimg"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.external_dir().join("manifest.tsv")
    }
}
