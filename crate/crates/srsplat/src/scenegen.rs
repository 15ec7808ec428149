//! Synthetic scene and dataset generation.
//!
//! A dataset is a random Gaussian scene, a ring of inward-looking cameras
//! split into training and holdout views, per-view HR ground-truth renders
//! with depth, and LR inputs produced by bicubic-downsampling the HR
//! renders. An artifact generator stamps seeded localized corruption into
//! images, standing in for the blemishes real upscalers leave behind.

use std::path::Path;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::buffer::{DepthBuffer, ImageBuffer};
use crate::camera::Camera;
use crate::error::Error;
use crate::gaussian::{quat_normalize, Gaussian3D};
use crate::io::{fimg, pngio, scene as scene_io};
use crate::render::{render, RenderSettings};
use crate::resample;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Cluster,
    Shell,
    TexturedGrid,
    PackedGrid,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Layout::Cluster),
            "shell" => Ok(Layout::Shell),
            "textured-grid" => Ok(Layout::TexturedGrid),
            "packed-grid" => Ok(Layout::PackedGrid),
            other => Err(Error::Config(format!(
                "layout must be cluster|shell|textured-grid|packed-grid, got '{other}'"
            ))),
        }
    }
}

impl Layout {
    pub fn name(&self) -> &'static str {
        match self {
            Layout::Cluster => "cluster",
            Layout::Shell => "shell",
            Layout::TexturedGrid => "textured-grid",
            Layout::PackedGrid => "packed-grid",
        }
    }
}

fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    quat_normalize([
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ])
}

/// Random Gaussians inside a unit-ish volume arranged per the layout.
pub fn generate_gaussians(seed: u64, n: usize, layout: Layout) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Vec::with_capacity(n);
    match layout {
        Layout::Cluster => {
            for _ in 0..n {
                scene.push(Gaussian3D {
                    position: Vector3::new(
                        rng.random_range(-0.6..0.6),
                        rng.random_range(-0.6..0.6),
                        rng.random_range(-0.6..0.6),
                    ),
                    scale: Vector3::new(
                        rng.random_range(0.03..0.10),
                        rng.random_range(0.03..0.10),
                        rng.random_range(0.03..0.10),
                    ),
                    rotation: random_quat(&mut rng),
                    color: Vector3::new(
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                    ),
                    opacity: rng.random_range(0.4..0.95),
                });
            }
        }
        Layout::Shell => {
            for _ in 0..n {
                let dir = loop {
                    let v = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let norm = v.norm();
                    if norm > 1e-3 {
                        break v / norm;
                    }
                };
                let radius = 0.7 + rng.random_range(-0.05..0.05);
                scene.push(Gaussian3D {
                    position: dir * radius,
                    scale: Vector3::new(
                        rng.random_range(0.02..0.08),
                        rng.random_range(0.02..0.08),
                        rng.random_range(0.02..0.08),
                    ),
                    rotation: random_quat(&mut rng),
                    color: Vector3::new(
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                    ),
                    opacity: rng.random_range(0.4..0.95),
                });
            }
        }
        Layout::TexturedGrid => {
            // Lattice with parity-alternating colors: high-frequency detail
            // that LR views cannot resolve, the regime SR targets.
            let side = (n as f64).cbrt().ceil() as usize;
            let mut count = 0usize;
            'outer: for ix in 0..side {
                for iy in 0..side {
                    for iz in 0..side {
                        if count == n {
                            break 'outer;
                        }
                        let cell = 1.2 / side as f64;
                        let at = |i: usize| -0.6 + cell * (i as f64 + 0.5);
                        let parity = (ix + iy + iz) % 2 == 0;
                        let base: f64 = if parity { 0.85 } else { 0.15 };
                        scene.push(Gaussian3D {
                            position: Vector3::new(
                                at(ix) + rng.random_range(-0.1..0.1) * cell,
                                at(iy) + rng.random_range(-0.1..0.1) * cell,
                                at(iz) + rng.random_range(-0.1..0.1) * cell,
                            ),
                            scale: Vector3::new(
                                cell * rng.random_range(0.25..0.45),
                                cell * rng.random_range(0.25..0.45),
                                cell * rng.random_range(0.25..0.45),
                            ),
                            rotation: random_quat(&mut rng),
                            color: Vector3::new(
                                (base + rng.random_range(-0.1..0.1)).clamp(0.05, 0.95),
                                (base + rng.random_range(-0.1..0.1)).clamp(0.05, 0.95),
                                (base + rng.random_range(-0.1..0.1)).clamp(0.05, 0.95),
                            ),
                            opacity: rng.random_range(0.6..0.95),
                        });
                        count += 1;
                    }
                }
            }
        }
        Layout::PackedGrid => {
            // Same parity texture as TexturedGrid, but the lattice spans
            // the ring cameras' whole field of view and splats overlap
            // their neighbors, so no ray escapes into empty background.
            // Relative image discrepancies stay bounded everywhere, which
            // the mask-guided fusion regime assumes. Splats are near
            // opaque so rays saturate on the visible crust; a translucent
            // packed volume is ambiguous under a handful of views and
            // fits them without generalizing. Cells fill in seeded
            // shuffle order: a partial fill leaves scattered holes that
            // neighbor overlap covers, not a missing face.
            let side = (n as f64).cbrt().ceil() as usize;
            let mut cells = Vec::with_capacity(side * side * side);
            for ix in 0..side {
                for iy in 0..side {
                    for iz in 0..side {
                        cells.push((ix, iy, iz));
                    }
                }
            }
            for i in (1..cells.len()).rev() {
                let j = rng.random_range(0..=i);
                cells.swap(i, j);
            }
            let cell = 2.3 / side as f64;
            let at = |i: usize| -1.15 + cell * (i as f64 + 0.5);
            for &(ix, iy, iz) in cells.iter().take(n) {
                let parity = (ix + iy + iz) % 2 == 0;
                let base: f64 = if parity { 0.8 } else { 0.3 };
                scene.push(Gaussian3D {
                    position: Vector3::new(
                        at(ix) + rng.random_range(-0.1..0.1) * cell,
                        at(iy) + rng.random_range(-0.1..0.1) * cell,
                        at(iz) + rng.random_range(-0.1..0.1) * cell,
                    ),
                    scale: Vector3::new(
                        cell * rng.random_range(0.45..0.7),
                        cell * rng.random_range(0.45..0.7),
                        cell * rng.random_range(0.45..0.7),
                    ),
                    rotation: random_quat(&mut rng),
                    color: Vector3::new(
                        (base + rng.random_range(-0.12..0.12)).clamp(0.1, 0.95),
                        (base + rng.random_range(-0.12..0.12)).clamp(0.1, 0.95),
                        (base + rng.random_range(-0.12..0.12)).clamp(0.1, 0.95),
                    ),
                    opacity: rng.random_range(0.92..0.99),
                });
            }
        }
    }
    scene
}

/// Cameras evenly spaced on a ring of the given radius, looking at the
/// origin, with alternating small elevation offsets so views are not
/// coplanar. Focal length is 1.2x the image width.
pub fn ring_cameras(n: usize, width: u32, height: u32, radius: f64) -> Vec<Camera> {
    (0..n)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / n as f64;
            let elevation = if i % 2 == 0 { 0.35 } else { -0.25 };
            let eye = Vector3::new(radius * angle.cos(), elevation, radius * angle.sin());
            let f = width as f64 * 1.2;
            Camera::look_at(
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
                Vector2::new(f, f),
                width,
                height,
            )
        })
        .collect()
}

/// One view's worth of data at both resolutions. The camera is the LR one;
/// HR buffers correspond to `camera.scaled(factor)`.
#[derive(Debug, Clone)]
pub struct ViewData {
    pub view_id: String,
    pub camera: Camera,
    pub lr_image: ImageBuffer,
    pub hr_image: ImageBuffer,
    pub hr_depth: DepthBuffer,
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub scene: Vec<Gaussian3D>,
    pub factor: usize,
    pub train_views: Vec<ViewData>,
    pub holdout_views: Vec<ViewData>,
}

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub seed: u64,
    pub n_gaussians: usize,
    pub layout: Layout,
    pub n_train: usize,
    pub n_holdout: usize,
    pub lr_width: u32,
    pub lr_height: u32,
    pub factor: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            seed: 0,
            n_gaussians: 100,
            layout: Layout::TexturedGrid,
            n_train: 8,
            n_holdout: 2,
            lr_width: 32,
            lr_height: 32,
            factor: 4,
        }
    }
}

/// Renders ground truth from the true scene at HR (scaled intrinsics, no
/// 3D smoothing) and bicubic-downsamples it to make the LR inputs.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<GeneratedDataset> {
    if spec.n_gaussians < 1 {
        return Err(Error::Config("n_gaussians must be >= 1".into()));
    }
    if spec.factor < 1 {
        return Err(Error::Config("factor must be >= 1".into()));
    }
    let scene = generate_gaussians(spec.seed, spec.n_gaussians, spec.layout);
    let cameras = ring_cameras(
        spec.n_train + spec.n_holdout,
        spec.lr_width,
        spec.lr_height,
        3.0,
    );
    let settings = RenderSettings::default();

    let make_view = |idx: usize, cam: &Camera| -> ViewData {
        let hr = render(&scene, &cam.scaled(spec.factor as f64), None, &settings);
        let lr_image = if spec.factor == 1 {
            hr.image.clone()
        } else {
            resample::downsample(&hr.image, spec.factor)
        };
        ViewData {
            view_id: format!("view_{idx:03}"),
            camera: cam.clone(),
            lr_image,
            hr_image: hr.image,
            hr_depth: hr.depth,
        }
    };

    let train_views = cameras[..spec.n_train]
        .iter()
        .enumerate()
        .map(|(i, c)| make_view(i, c))
        .collect();
    let holdout_views = cameras[spec.n_train..]
        .iter()
        .enumerate()
        .map(|(i, c)| make_view(spec.n_train + i, c))
        .collect();

    Ok(GeneratedDataset {
        scene,
        factor: spec.factor,
        train_views,
        holdout_views,
    })
}

/// Stamps `n_blobs` multiplicative dark blotches into a copy of `img`.
/// Each blob is a near-flat disc of relative strength `strength` with a
/// steep falloff, so almost all affected pixels sit at the full strength
/// and the partially corrupted rim stays narrow.
pub fn corrupt_image(
    img: &ImageBuffer,
    seed: u64,
    n_blobs: usize,
    strength: f64,
    radius_frac: f64,
) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let (w, h) = (img.width as f64, img.height as f64);
    for _ in 0..n_blobs {
        let cx = rng.random_range(0.2 * w..0.8 * w);
        let cy = rng.random_range(0.2 * h..0.8 * h);
        let r = radius_frac * w * rng.random_range(0.7..1.3);
        let x0 = ((cx - 3.0 * r).floor().max(0.0)) as usize;
        let x1 = ((cx + 3.0 * r).ceil().min(w - 1.0)) as usize;
        let y0 = ((cy - 3.0 * r).floor().max(0.0)) as usize;
        let y1 = ((cy + 3.0 * r).ceil().min(h - 1.0)) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (r * r);
                let falloff = (-d2 * d2).exp();
                let gain = 1.0 - strength * falloff;
                for ch in 0..out.channels {
                    let idx = out.index(x, y, ch);
                    out.data[idx] *= gain;
                }
            }
        }
    }
    out
}

const DATASET_META: &str = "dataset.txt";

pub fn save_dataset(dir: &Path, ds: &GeneratedDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    scene_io::save_scene(&dir.join("scene_true.txt"), &ds.scene)?;
    let meta = format!(
        "factor = {}\nn_train = {}\nn_holdout = {}\n",
        ds.factor,
        ds.train_views.len(),
        ds.holdout_views.len()
    );
    std::fs::write(dir.join(DATASET_META), meta).map_err(|e| Error::io(dir, e))?;

    let save_views = |views: &[ViewData], sub: &str, cams: &Path| -> Result<()> {
        let vdir = dir.join(sub);
        std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        let cameras: Vec<Camera> = views.iter().map(|v| v.camera.clone()).collect();
        scene_io::save_cameras(cams, &cameras)?;
        for v in views {
            fimg::write_image(&vdir.join(format!("{}_lr.fimg", v.view_id)), &v.lr_image)?;
            fimg::write_image(&vdir.join(format!("{}_hr.fimg", v.view_id)), &v.hr_image)?;
            fimg::write_depth(
                &vdir.join(format!("{}_hr_depth.fimg", v.view_id)),
                &v.hr_depth,
            )?;
            pngio::write_png(&vdir.join(format!("{}_lr.png", v.view_id)), &v.lr_image)?;
            pngio::write_png(&vdir.join(format!("{}_hr.png", v.view_id)), &v.hr_image)?;
        }
        Ok(())
    };
    save_views(&ds.train_views, "train", &dir.join("cameras_train.txt"))?;
    save_views(&ds.holdout_views, "holdout", &dir.join("cameras_holdout.txt"))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<GeneratedDataset> {
    let scene = scene_io::load_scene(&dir.join("scene_true.txt"))?;
    let meta_path = dir.join(DATASET_META);
    let mut factor = None;
    let mut n_train = None;
    let mut n_holdout = None;
    for (key, value) in crate::config::parse_config_file(&meta_path)? {
        let v: usize = value
            .parse()
            .map_err(|_| Error::format(&meta_path, format!("bad value for '{key}'")))?;
        match key.as_str() {
            "factor" => factor = Some(v),
            "n_train" => n_train = Some(v),
            "n_holdout" => n_holdout = Some(v),
            other => return Err(Error::format(&meta_path, format!("unknown key '{other}'"))),
        }
    }
    let missing = |name: &str| Error::format(&meta_path, format!("missing key '{name}'"));
    let factor = factor.ok_or_else(|| missing("factor"))?;
    let n_train = n_train.ok_or_else(|| missing("n_train"))?;
    let n_holdout = n_holdout.ok_or_else(|| missing("n_holdout"))?;

    let load_views = |sub: &str, cams: &Path, first: usize, count: usize| -> Result<Vec<ViewData>> {
        let cameras = scene_io::load_cameras(cams)?;
        if cameras.len() != count {
            return Err(Error::format(
                cams,
                format!("expected {count} cameras, found {}", cameras.len()),
            ));
        }
        let vdir = dir.join(sub);
        cameras
            .into_iter()
            .enumerate()
            .map(|(i, camera)| {
                let view_id = format!("view_{:03}", first + i);
                Ok(ViewData {
                    lr_image: fimg::read_image(&vdir.join(format!("{view_id}_lr.fimg")))?,
                    hr_image: fimg::read_image(&vdir.join(format!("{view_id}_hr.fimg")))?,
                    hr_depth: fimg::read_depth(&vdir.join(format!("{view_id}_hr_depth.fimg")))?,
                    view_id,
                    camera,
                })
            })
            .collect()
    };
    let train_views = load_views("train", &dir.join("cameras_train.txt"), 0, n_train)?;
    let holdout_views = load_views(
        "holdout",
        &dir.join("cameras_holdout.txt"),
        n_train,
        n_holdout,
    )?;
    Ok(GeneratedDataset {
        scene,
        factor,
        train_views,
        holdout_views,
    })
}
