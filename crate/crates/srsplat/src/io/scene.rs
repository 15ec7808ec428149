//! Text formats for Gaussian scenes and camera rigs.
//!
//! Scene files hold one Gaussian per line, whitespace-separated:
//! `px py pz sx sy sz qw qx qy qz r g b a`. Camera files hold one block per
//! camera: a `camera <id>` header, labeled intrinsics (`fx fy cx cy w h`),
//! and a 3x4 row-major world-to-camera `[R|t]` matrix. Both allow `#`
//! comments and blank lines.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::camera::Camera;
use crate::error::Error;
use crate::gaussian::{quat_normalize, Gaussian3D};
use crate::Result;

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("expected a number, got '{tok}'")))
}

pub fn save_scene(path: &Path, scene: &[Gaussian3D]) -> Result<()> {
    let mut out = String::new();
    out.push_str("# px py pz sx sy sz qw qx qy qz r g b a\n");
    for g in scene {
        writeln!(
            out,
            "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
            g.position.x,
            g.position.y,
            g.position.z,
            g.scale.x,
            g.scale.y,
            g.scale.z,
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
            g.color.x,
            g.color.y,
            g.color.z,
            g.opacity,
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Vec<Gaussian3D>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scene = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 14 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 14 fields, got {}", toks.len()),
            ));
        }
        let mut v = [0.0f64; 14];
        for (slot, tok) in v.iter_mut().zip(&toks) {
            *slot = parse_f64(path, line_no, tok)?;
        }
        // Renormalize only when the stored quaternion actually drifted, so
        // saving and reloading a unit quaternion is bitwise lossless.
        let q = [v[6], v[7], v[8], v[9]];
        let rotation = if (crate::gaussian::quat_norm(q) - 1.0).abs() > 1e-12 {
            quat_normalize(q)
        } else {
            q
        };
        let g = Gaussian3D {
            position: Vector3::new(v[0], v[1], v[2]),
            scale: Vector3::new(v[3], v[4], v[5]),
            rotation,
            color: Vector3::new(v[10], v[11], v[12]),
            opacity: v[13],
        };
        g.validate()
            .map_err(|msg| Error::parse(path, line_no, msg))?;
        scene.push(g);
    }
    Ok(scene)
}

pub fn save_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let mut out = String::new();
    for (i, cam) in cameras.iter().enumerate() {
        writeln!(out, "camera {i}").expect("string write");
        writeln!(out, "fx {:.17e}", cam.focal.x).expect("string write");
        writeln!(out, "fy {:.17e}", cam.focal.y).expect("string write");
        writeln!(out, "cx {:.17e}", cam.principal_point.x).expect("string write");
        writeln!(out, "cy {:.17e}", cam.principal_point.y).expect("string write");
        writeln!(out, "w {}", cam.width).expect("string write");
        writeln!(out, "h {}", cam.height).expect("string write");
        for r in 0..3 {
            writeln!(
                out,
                "{:.17e} {:.17e} {:.17e} {:.17e}",
                cam.rotation[(r, 0)],
                cam.rotation[(r, 1)],
                cam.rotation[(r, 2)],
                cam.translation[r],
            )
            .expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // Strip comments up front but remember original line numbers for errors.
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .map(|(i, raw)| (i + 1, raw.split('#').next().unwrap_or("").trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut cameras = Vec::new();
    let mut pos = 0usize;
    while pos < lines.len() {
        let (hdr_line, header) = (&lines[pos].0, &lines[pos].1);
        if !header.starts_with("camera") {
            return Err(Error::parse(path, *hdr_line, "expected 'camera <id>' header"));
        }
        let hdr_line = *hdr_line;
        pos += 1;

        let mut fx = None;
        let mut fy = None;
        let mut cx = None;
        let mut cy = None;
        let mut w = None;
        let mut h = None;
        while pos < lines.len() {
            let (ln, line) = &lines[pos];
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or("");
            let slot = match key {
                "fx" => &mut fx,
                "fy" => &mut fy,
                "cx" => &mut cx,
                "cy" => &mut cy,
                "w" => &mut w,
                "h" => &mut h,
                _ => break,
            };
            let tok = it
                .next()
                .ok_or_else(|| Error::parse(path, *ln, format!("missing value after '{key}'")))?;
            *slot = Some(parse_f64(path, *ln, tok)?);
            pos += 1;
        }
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::parse(path, hdr_line, format!("missing intrinsic '{name}'")))
        };
        let fx = need(fx, "fx")?;
        let fy = need(fy, "fy")?;
        let cx = need(cx, "cx")?;
        let cy = need(cy, "cy")?;
        let w = need(w, "w")?;
        let h = need(h, "h")?;

        let mut rotation = Matrix3::zeros();
        let mut translation = Vector3::zeros();
        for r in 0..3 {
            if pos >= lines.len() {
                return Err(Error::parse(path, hdr_line, "truncated extrinsic matrix"));
            }
            let (ln, line) = &lines[pos];
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 4 {
                return Err(Error::parse(
                    path,
                    *ln,
                    format!("expected 4 matrix entries, got {}", toks.len()),
                ));
            }
            for (c, tok) in toks.iter().enumerate() {
                let v = parse_f64(path, *ln, tok)?;
                if c < 3 {
                    rotation[(r, c)] = v;
                } else {
                    translation[r] = v;
                }
            }
            pos += 1;
        }

        if w <= 0.0 || h <= 0.0 || w.fract() != 0.0 || h.fract() != 0.0 {
            return Err(Error::parse(
                path,
                hdr_line,
                format!("image dimensions must be positive integers, got {w} x {h}"),
            ));
        }
        let cam = Camera {
            focal: Vector2::new(fx, fy),
            principal_point: Vector2::new(cx, cy),
            width: w as u32,
            height: h as u32,
            rotation,
            translation,
        };
        cam.validate()
            .map_err(|msg| Error::parse(path, hdr_line, msg))?;
        cameras.push(cam);
    }
    Ok(cameras)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::test_scenes::{axis_camera, random_scene};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("srsplat_scene_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn scene_round_trip_is_bitwise() {
        let scene = random_scene(9, 13);
        let path = tmp("rt.txt");
        save_scene(&path, &scene).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(scene.len(), back.len());
        for (a, b) in scene.iter().zip(&back) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.scale, b.scale);
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.color, b.color);
            assert_eq!(a.opacity, b.opacity);
        }
    }

    #[test]
    fn scene_comments_and_blank_lines_skip() {
        let path = tmp("comments.txt");
        std::fs::write(
            &path,
            "# header\n\n0 0 5 0.1 0.1 0.1 1 0 0 0 0.5 0.5 0.5 0.9 # trailing\n",
        )
        .unwrap();
        let scene = load_scene(&path).unwrap();
        assert_eq!(scene.len(), 1);
        assert_eq!(scene[0].position.z, 5.0);
    }

    #[test]
    fn scene_bad_field_count_reports_line() {
        let path = tmp("bad.txt");
        std::fs::write(&path, "# ok\n1 2 3\n").unwrap();
        let err = load_scene(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.txt:2:"), "{msg}");
    }

    #[test]
    fn loaded_quaternions_are_unit() {
        let path = tmp("quat.txt");
        std::fs::write(&path, "0 0 5 0.1 0.1 0.1 2 0 0 0 0.5 0.5 0.5 0.9\n").unwrap();
        let scene = load_scene(&path).unwrap();
        assert!((crate::gaussian::quat_norm(scene[0].rotation) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_round_trip_is_bitwise() {
        let cams = vec![
            axis_camera(32),
            Camera::look_at(
                Vector3::new(2.0, 1.0, -3.0),
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
                Vector2::new(55.0, 60.0),
                48,
                24,
            ),
        ];
        let path = tmp("cams.txt");
        save_cameras(&path, &cams).unwrap();
        let back = load_cameras(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in cams.iter().zip(&back) {
            assert_eq!(a.focal, b.focal);
            assert_eq!(a.principal_point, b.principal_point);
            assert_eq!((a.width, a.height), (b.width, b.height));
            assert_eq!(a.rotation, b.rotation);
            assert_eq!(a.translation, b.translation);
        }
    }

    #[test]
    fn camera_truncated_matrix_errors() {
        let path = tmp("trunc.txt");
        std::fs::write(
            &path,
            "camera 0\nfx 10\nfy 10\ncx 8\ncy 8\nw 16\nh 16\n1 0 0 0\n0 1 0 0\n",
        )
        .unwrap();
        assert!(load_cameras(&path).is_err());
    }
}
