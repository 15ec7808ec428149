//! Pinhole cameras and perspective projection of 3D Gaussians to screen
//! space.
//!
//! Conventions: world-to-camera extrinsics (p_cam = R p + t), camera looks
//! down +z, pixel (ix, iy) covers the unit square centered at
//! (ix + 0.5, iy + 0.5) in continuous image coordinates.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::gaussian::Gaussian3D;

/// Default near plane for visibility culling.
pub const DEFAULT_NEAR_PLANE: f64 = 0.01;
/// Default screen-space covariance dilation, in squared pixels. Models the
/// finite pixel footprint and keeps projected covariances invertible.
pub const DEFAULT_DILATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Focal lengths in pixels (fx, fy).
    pub focal: Vector2<f64>,
    /// Principal point in continuous image coordinates (cx, cy).
    pub principal_point: Vector2<f64>,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl Camera {
    /// Camera at `eye` looking toward `target`. `up` fixes the roll; if it
    /// is (anti)parallel to the view direction a fallback axis is used.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: Vector2<f64>,
        width: u32,
        height: u32,
    ) -> Camera {
        let z = (target - eye).normalize();
        let mut x = up.cross(&z);
        if x.norm() < 1e-9 {
            let alt = if z.x.abs() < 0.9 {
                Vector3::new(1.0, 0.0, 0.0)
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            };
            x = alt.cross(&z);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -rotation * eye;
        Camera {
            focal,
            principal_point: Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            width,
            height,
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera position in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Same pose viewing a `factor`-times finer (or coarser) pixel grid:
    /// focal lengths, principal point, and pixel dimensions all scale
    /// linearly, so projected positions scale linearly too.
    pub fn scaled(&self, factor: f64) -> Camera {
        assert!(factor > 0.0, "scale factor must be positive");
        Camera {
            focal: self.focal * factor,
            principal_point: self.principal_point * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.focal.x > 0.0 && self.focal.y > 0.0) {
            return Err(format!("focal lengths must be positive, got {:?}", self.focal));
        }
        if self.width == 0 || self.height == 0 {
            return Err("image dimensions must be at least 1x1".into());
        }
        if !self.principal_point.iter().all(|v| v.is_finite())
            || !self.rotation.iter().all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err("non-finite camera parameter".into());
        }
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity())
            .abs()
            .max();
        if err > 1e-9 {
            return Err(format!("rotation is not orthonormal (deviation {err:.2e})"));
        }
        if self.rotation.determinant() < 0.0 {
            return Err("rotation determinant is negative".into());
        }
        Ok(())
    }
}

/// A Gaussian projected to one camera's screen space.
#[derive(Debug, Clone)]
pub struct Projected2D {
    /// Center in continuous image coordinates.
    pub mean2d: Vector2<f64>,
    /// 2x2 screen-space covariance, dilation included.
    pub cov2d: Matrix2<f64>,
    /// Camera-space depth of the center.
    pub depth: f64,
    /// False when the center is at or behind the near plane; such splats
    /// contribute nothing and receive no gradients.
    pub visible: bool,
}

/// Perspective projection with a first-order (Jacobian) transform of the
/// covariance: cov2d = J W Sigma W^T J^T + dilation I.
pub fn project(g: &Gaussian3D, cam: &Camera, near: f64, dilation: f64) -> Projected2D {
    let p = cam.world_to_camera(&g.position);
    if p.z <= near {
        return Projected2D {
            mean2d: Vector2::zeros(),
            cov2d: Matrix2::identity() * dilation,
            depth: p.z,
            visible: false,
        };
    }
    let (fx, fy) = (cam.focal.x, cam.focal.y);
    let inv_z = 1.0 / p.z;
    let mean2d = Vector2::new(
        fx * p.x * inv_z + cam.principal_point.x,
        fy * p.y * inv_z + cam.principal_point.y,
    );
    let j = nalgebra::Matrix2x3::new(
        fx * inv_z,
        0.0,
        -fx * p.x * inv_z * inv_z,
        0.0,
        fy * inv_z,
        -fy * p.y * inv_z * inv_z,
    );
    let cov_cam = cam.rotation * g.covariance() * cam.rotation.transpose();
    let cov2d = j * cov_cam * j.transpose() + Matrix2::identity() * dilation;
    Projected2D {
        mean2d,
        cov2d,
        depth: p.z,
        visible: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::quat_normalize;
    use proptest::prelude::*;

    fn test_gaussian(pos: Vector3<f64>, scale: Vector3<f64>, q: [f64; 4]) -> Gaussian3D {
        Gaussian3D {
            position: pos,
            scale,
            rotation: quat_normalize(q),
            color: Vector3::new(0.5, 0.5, 0.5),
            opacity: 0.9,
        }
    }

    fn axis_cam(dist: f64, focal: f64, dim: u32) -> Camera {
        Camera::look_at(
            Vector3::new(0.0, 0.0, -dist),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            Vector2::new(focal, focal),
            dim,
            dim,
        )
    }

    #[test]
    fn on_axis_isotropic_cov2d_closed_form() {
        let (d, f, s) = (4.0, 60.0, 0.25);
        let cam = axis_cam(d, f, 32);
        let g = test_gaussian(Vector3::zeros(), Vector3::new(s, s, s), [1.0, 0.0, 0.0, 0.0]);
        let pr = project(&g, &cam, DEFAULT_NEAR_PLANE, DEFAULT_DILATION);
        assert!(pr.visible);
        let want = (f * s / d).powi(2) + DEFAULT_DILATION;
        assert!((pr.cov2d[(0, 0)] - want).abs() < 1e-9 * want);
        assert!((pr.cov2d[(1, 1)] - want).abs() < 1e-9 * want);
        assert!(pr.cov2d[(0, 1)].abs() < 1e-9);
        assert!((pr.depth - d).abs() < 1e-12);
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = axis_cam(3.0, 48.0, 24);
        let g = test_gaussian(
            Vector3::zeros(),
            Vector3::new(0.1, 0.1, 0.1),
            [1.0, 0.0, 0.0, 0.0],
        );
        let pr = project(&g, &cam, DEFAULT_NEAR_PLANE, DEFAULT_DILATION);
        assert!((pr.mean2d - cam.principal_point).norm() < 1e-12);
    }

    #[test]
    fn behind_camera_is_invisible() {
        let cam = axis_cam(2.0, 48.0, 24);
        let g = test_gaussian(
            Vector3::new(0.0, 0.0, -5.0),
            Vector3::new(0.1, 0.1, 0.1),
            [1.0, 0.0, 0.0, 0.0],
        );
        assert!(!project(&g, &cam, DEFAULT_NEAR_PLANE, DEFAULT_DILATION).visible);
    }

    #[test]
    fn look_at_rotation_is_valid() {
        let cam = Camera::look_at(
            Vector3::new(1.0, 2.0, -3.0),
            Vector3::new(0.2, -0.1, 0.4),
            Vector3::new(0.0, 1.0, 0.0),
            Vector2::new(50.0, 55.0),
            31,
            17,
        );
        cam.validate().unwrap();
        // The eye maps to the camera origin and the target sits on +z.
        assert!(cam.world_to_camera(&Vector3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
        let t = cam.world_to_camera(&Vector3::new(0.2, -0.1, 0.4));
        assert!(t.x.abs() < 1e-12 && t.y.abs() < 1e-12 && t.z > 0.0);
    }

    /// Finite-difference Jacobian of the pixel mapping; an independent
    /// route to the projected covariance.
    fn cov2d_fd_oracle(g: &Gaussian3D, cam: &Camera, dilation: f64) -> Matrix2<f64> {
        let pix = |p: &Vector3<f64>| {
            let c = cam.world_to_camera(p);
            Vector2::new(
                cam.focal.x * c.x / c.z + cam.principal_point.x,
                cam.focal.y * c.y / c.z + cam.principal_point.y,
            )
        };
        let h = 1e-6;
        let mut jac = nalgebra::Matrix2x3::zeros();
        for k in 0..3 {
            let mut hi = g.position;
            let mut lo = g.position;
            hi[k] += h;
            lo[k] -= h;
            let d = (pix(&hi) - pix(&lo)) / (2.0 * h);
            jac.set_column(k, &d);
        }
        jac * g.covariance() * jac.transpose() + Matrix2::identity() * dilation
    }

    proptest! {
        #[test]
        fn cov2d_matches_fd_jacobian_oracle(
            pos in prop::array::uniform3(-1.0f64..1.0),
            scale in prop::array::uniform3(0.05f64..0.8),
            q in prop::array::uniform4(-1.0f64..1.0)
                .prop_filter("nonzero", |q| crate::gaussian::quat_norm(*q) > 1e-3),
            eye_x in -2.0f64..2.0,
            eye_y in -1.0f64..1.0,
        ) {
            let cam = Camera::look_at(
                Vector3::new(eye_x, eye_y, -5.0),
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
                Vector2::new(40.0, 44.0),
                32,
                32,
            );
            let g = test_gaussian(
                Vector3::new(pos[0], pos[1], pos[2]),
                Vector3::new(scale[0], scale[1], scale[2]),
                q,
            );
            let pr = project(&g, &cam, DEFAULT_NEAR_PLANE, DEFAULT_DILATION);
            prop_assert!(pr.visible);
            let want = cov2d_fd_oracle(&g, &cam, DEFAULT_DILATION);
            let err = (pr.cov2d - want).abs().max();
            let scale_ref = want.abs().max().max(1.0);
            prop_assert!(err < 1e-4 * scale_ref, "err {err}");
        }

        #[test]
        fn scaled_camera_scales_projection_linearly(
            pos in prop::array::uniform3(-0.8f64..0.8),
            factor in 1.0f64..6.0,
        ) {
            let cam = axis_cam(4.0, 50.0, 32);
            let g = test_gaussian(
                Vector3::new(pos[0], pos[1], pos[2]),
                Vector3::new(0.1, 0.1, 0.1),
                [1.0, 0.0, 0.0, 0.0],
            );
            let base = project(&g, &cam, DEFAULT_NEAR_PLANE, 0.0);
            let fine = project(&g, &cam.scaled(factor), DEFAULT_NEAR_PLANE, 0.0);
            prop_assert!((fine.mean2d - base.mean2d * factor).norm() < 1e-9 * factor);
            prop_assert!((fine.cov2d - base.cov2d * factor * factor).abs().max()
                < 1e-9 * factor * factor);
            prop_assert!((fine.depth - base.depth).abs() < 1e-12);
        }
    }
}
