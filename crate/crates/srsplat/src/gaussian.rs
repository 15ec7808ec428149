//! 3D anisotropic Gaussians: density evaluation, the 3D low-pass smoothing
//! filter, and per-Gaussian smoothing widths derived from camera sampling
//! rates.

use nalgebra::{Matrix3, Vector3};

use crate::camera::Camera;

/// Default constant relating a camera's sampling interval to the smoothing
/// filter width.
pub const DEFAULT_SAMPLING_K: f64 = 0.2;

/// One anisotropic Gaussian primitive. All fields are in activated
/// (world-space) form: `scale` components strictly positive, `rotation` a
/// unit quaternion stored as `[w, x, y, z]`, `color` and `opacity` in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: [f64; 4],
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl Gaussian3D {
    /// Full 3x3 covariance R diag(scale^2) R^T.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = quat_to_rotation(self.rotation);
        let s2 = Matrix3::from_diagonal(&self.scale.component_mul(&self.scale));
        r * s2 * r.transpose()
    }

    /// Checks the representation invariants; returns a description of the
    /// first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for v in self
            .position
            .iter()
            .chain(self.scale.iter())
            .chain(self.rotation.iter())
            .chain(self.color.iter())
            .chain(std::iter::once(&self.opacity))
        {
            if !v.is_finite() {
                return Err("non-finite component".into());
            }
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(format!("scale must be strictly positive, got {:?}", self.scale));
        }
        let n = quat_norm(self.rotation);
        if (n - 1.0).abs() > 1e-6 {
            return Err(format!("rotation quaternion norm {n} is not 1"));
        }
        if self.color.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(format!("color out of [0,1]: {:?}", self.color));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity out of [0,1]: {}", self.opacity));
        }
        Ok(())
    }
}

/// Unnormalized density exp(-0.5 (p-mu)^T Sigma^-1 (p-mu)).
///
/// Evaluated in the Gaussian's own frame, y = R^T (p - mu), where the
/// Mahalanobis form is a diagonal sum; this stays exact under extreme
/// anisotropy where forming Sigma^-1 would lose precision.
pub fn evaluate_density(g: &Gaussian3D, p: &Vector3<f64>) -> f64 {
    let r = quat_to_rotation(g.rotation);
    let y = r.transpose() * (p - g.position);
    let m = (y.x / g.scale.x).powi(2) + (y.y / g.scale.y).powi(2) + (y.z / g.scale.z).powi(2);
    (-0.5 * m).exp()
}

/// 3D low-pass filter: convolves the Gaussian with an isotropic kernel of
/// width `sigma`, yielding covariance Sigma + sigma^2 I. The opacity is
/// rescaled by prod_k s_k / sqrt(s_k^2 + sigma^2) so the integral of
/// opacity-weighted density is preserved.
///
/// `sigma == 0` returns the input unchanged (bit-identical).
pub fn apply_3d_smoothing(g: &Gaussian3D, sigma: f64) -> Gaussian3D {
    assert!(sigma >= 0.0, "smoothing width must be non-negative");
    if sigma == 0.0 {
        return g.clone();
    }
    let s2 = sigma * sigma;
    let mut out = g.clone();
    let mut comp = 1.0;
    for k in 0..3 {
        let s = g.scale[k];
        let sp = (s * s + s2).sqrt();
        out.scale[k] = sp;
        comp *= s / sp;
    }
    out.opacity = g.opacity * comp;
    out
}

/// Smoothing widths from the maximal sampling rate each Gaussian is observed
/// at. A camera samples a point at depth d (camera space) at rate
/// max(fx, fy) / d; the filter width is k over the largest rate across all
/// cameras the Gaussian is in front of (depth > near). Gaussians behind
/// every camera get the fallback sigma.
pub fn compute_sampling_sigmas(
    scene: &[Gaussian3D],
    cameras: &[Camera],
    k: f64,
    near: f64,
    fallback: f64,
) -> Vec<f64> {
    scene
        .iter()
        .map(|g| {
            let mut best_rate = 0.0f64;
            for cam in cameras {
                let depth = cam.world_to_camera(&g.position).z;
                if depth > near {
                    let rate = cam.focal.x.max(cam.focal.y) / depth;
                    best_rate = best_rate.max(rate);
                }
            }
            if best_rate > 0.0 {
                k / best_rate
            } else {
                fallback
            }
        })
        .collect()
}

/// Rotation matrix of a (not necessarily unit) quaternion `[w, x, y, z]`;
/// the quaternion is normalized internally.
pub fn quat_to_rotation(q: [f64; 4]) -> Matrix3<f64> {
    let n = quat_norm(q);
    debug_assert!(n > 0.0, "degenerate quaternion");
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn quat_norm(q: [f64; 4]) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

pub fn quat_normalize(q: [f64; 4]) -> [f64; 4] {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}
