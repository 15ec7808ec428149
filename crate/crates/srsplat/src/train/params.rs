//! Raw (pre-activation) parameter storage for optimization.
//!
//! The optimizer works in an unconstrained space: positions are raw,
//! scales go through softplus, colors and opacities through sigmoid, and
//! quaternions are renormalized after every step (the renderer
//! differentiates through that normalization). All groups are flat f64
//! vectors so moment buffers and densify row operations stay uniform.

use nalgebra::Vector3;

use crate::gaussian::{quat_normalize, Gaussian3D};
use crate::render::RenderGradients;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softplus_inv(s: f64) -> f64 {
    debug_assert!(s > 0.0);
    if s > 20.0 {
        s
    } else {
        s.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(c: f64) -> f64 {
    let c = c.clamp(1e-12, 1.0 - 1e-12);
    (c / (1.0 - c)).ln()
}

/// One flat f64 vector per parameter group; used for parameters, raw-space
/// gradients, and optimizer moments alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVecs {
    /// 3 per Gaussian.
    pub position: Vec<f64>,
    /// 3 per Gaussian, softplus domain.
    pub scale: Vec<f64>,
    /// 4 per Gaussian (w, x, y, z).
    pub rotation: Vec<f64>,
    /// 3 per Gaussian, logit domain.
    pub color: Vec<f64>,
    /// 1 per Gaussian, logit domain.
    pub opacity: Vec<f64>,
}

impl ParamVecs {
    pub fn zeros(n: usize) -> Self {
        ParamVecs {
            position: vec![0.0; 3 * n],
            scale: vec![0.0; 3 * n],
            rotation: vec![0.0; 4 * n],
            color: vec![0.0; 3 * n],
            opacity: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity.is_empty()
    }

    pub fn from_scene(scene: &[Gaussian3D]) -> Self {
        let n = scene.len();
        let mut p = ParamVecs::zeros(n);
        for (i, g) in scene.iter().enumerate() {
            for k in 0..3 {
                p.position[3 * i + k] = g.position[k];
                p.scale[3 * i + k] = softplus_inv(g.scale[k]);
                p.color[3 * i + k] = logit(g.color[k]);
            }
            p.rotation[4 * i..4 * i + 4].copy_from_slice(&g.rotation);
            p.opacity[i] = logit(g.opacity);
        }
        p
    }

    pub fn to_scene(&self) -> Vec<Gaussian3D> {
        (0..self.len())
            .map(|i| Gaussian3D {
                position: Vector3::new(
                    self.position[3 * i],
                    self.position[3 * i + 1],
                    self.position[3 * i + 2],
                ),
                scale: Vector3::new(
                    softplus(self.scale[3 * i]),
                    softplus(self.scale[3 * i + 1]),
                    softplus(self.scale[3 * i + 2]),
                ),
                rotation: [
                    self.rotation[4 * i],
                    self.rotation[4 * i + 1],
                    self.rotation[4 * i + 2],
                    self.rotation[4 * i + 3],
                ],
                color: Vector3::new(
                    sigmoid(self.color[3 * i]),
                    sigmoid(self.color[3 * i + 1]),
                    sigmoid(self.color[3 * i + 2]),
                ),
                opacity: sigmoid(self.opacity[i]),
            })
            .collect()
    }

    /// Chains activated-space render gradients back to raw space. `scene`
    /// must be the activated scene the gradients were computed against.
    pub fn chain_grads(&self, scene: &[Gaussian3D], g: &RenderGradients) -> ParamVecs {
        assert_eq!(self.len(), scene.len());
        assert_eq!(self.len(), g.len());
        let mut out = ParamVecs::zeros(self.len());
        for i in 0..self.len() {
            for k in 0..3 {
                out.position[3 * i + k] = g.position[i][k];
                // d softplus(x)/dx = sigmoid(x)
                out.scale[3 * i + k] = g.scale[i][k] * sigmoid(self.scale[3 * i + k]);
                let c = scene[i].color[k];
                out.color[3 * i + k] = g.color[i][k] * c * (1.0 - c);
            }
            // The renderer differentiates through quaternion normalization,
            // so rotation gradients are already in stored-quat space.
            for k in 0..4 {
                out.rotation[4 * i + k] = g.rotation[i][k];
            }
            let a = scene[i].opacity;
            out.opacity[i] = g.opacity[i] * a * (1.0 - a);
        }
        out
    }

    pub fn renormalize_rotations(&mut self) {
        for i in 0..self.len() {
            let q = quat_normalize([
                self.rotation[4 * i],
                self.rotation[4 * i + 1],
                self.rotation[4 * i + 2],
                self.rotation[4 * i + 3],
            ]);
            self.rotation[4 * i..4 * i + 4].copy_from_slice(&q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::test_scenes::random_scene;

    #[test]
    fn activations_invert_to_high_precision() {
        for &(s, c) in &[(0.001, 0.01), (0.05, 0.5), (1.5, 0.99), (25.0, 0.3)] {
            assert!((softplus(softplus_inv(s)) - s).abs() < 1e-12 * s.max(1.0));
            assert!((sigmoid(logit(c)) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn scene_round_trip_through_raw_space() {
        let scene = random_scene(21, 12);
        let raw = ParamVecs::from_scene(&scene);
        let back = raw.to_scene();
        for (a, b) in scene.iter().zip(&back) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.rotation, b.rotation);
            for k in 0..3 {
                assert!((a.scale[k] - b.scale[k]).abs() < 1e-12);
                assert!((a.color[k] - b.color[k]).abs() < 1e-12);
            }
            assert!((a.opacity - b.opacity).abs() < 1e-12);
        }
    }

    #[test]
    fn chained_grads_match_finite_differences() {
        let scene = random_scene(22, 3);
        let raw = ParamVecs::from_scene(&scene);
        // Loss: sum of all activated parameters, so activated-space grads
        // are all ones and the chain rule is exercised alone.
        let mut g = RenderGradients::zeros(3);
        for i in 0..3 {
            g.position[i] = Vector3::new(1.0, 1.0, 1.0);
            g.scale[i] = Vector3::new(1.0, 1.0, 1.0);
            g.color[i] = Vector3::new(1.0, 1.0, 1.0);
            g.opacity[i] = 1.0;
        }
        let chained = raw.chain_grads(&scene, &g);

        let loss = |p: &ParamVecs| -> f64 {
            p.to_scene()
                .iter()
                .map(|g| {
                    g.position.sum() + g.scale.sum() + g.color.sum() + g.opacity
                })
                .sum()
        };
        let eps = 1e-6;
        for (get, grad) in [
            (
                (|p: &mut ParamVecs| &mut p.scale) as fn(&mut ParamVecs) -> &mut Vec<f64>,
                &chained.scale,
            ),
            (|p: &mut ParamVecs| &mut p.color, &chained.color),
            (|p: &mut ParamVecs| &mut p.opacity, &chained.opacity),
            (|p: &mut ParamVecs| &mut p.position, &chained.position),
        ] {
            for idx in 0..grad.len() {
                let mut hi = raw.clone();
                get(&mut hi)[idx] += eps;
                let mut lo = raw.clone();
                get(&mut lo)[idx] -= eps;
                let fd = (loss(&hi) - loss(&lo)) / (2.0 * eps);
                assert!(
                    (fd - grad[idx]).abs() < 1e-5,
                    "idx {idx}: fd {fd} vs analytic {}",
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn renormalize_makes_unit_quaternions() {
        let scene = random_scene(23, 4);
        let mut raw = ParamVecs::from_scene(&scene);
        for v in raw.rotation.iter_mut() {
            *v *= 3.0;
        }
        raw.renormalize_rotations();
        for i in 0..raw.len() {
            let n: f64 = raw.rotation[4 * i..4 * i + 4]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
