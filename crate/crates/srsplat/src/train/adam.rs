//! First-order adaptive-moment optimizer over the five parameter groups,
//! with bias correction and one shared step count.

use crate::train::params::ParamVecs;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct GroupLrs {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub color: f64,
    pub opacity: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub m: ParamVecs,
    pub v: ParamVecs,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: ParamVecs::zeros(n),
            v: ParamVecs::zeros(n),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamVecs, grads: &ParamVecs, lrs: &GroupLrs) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);

        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64| {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        };
        update(
            &mut params.position,
            &grads.position,
            &mut self.m.position,
            &mut self.v.position,
            lrs.position,
        );
        update(
            &mut params.scale,
            &grads.scale,
            &mut self.m.scale,
            &mut self.v.scale,
            lrs.scale,
        );
        update(
            &mut params.rotation,
            &grads.rotation,
            &mut self.m.rotation,
            &mut self.v.rotation,
            lrs.rotation,
        );
        update(
            &mut params.color,
            &grads.color,
            &mut self.m.color,
            &mut self.v.color,
            lrs.color,
        );
        update(
            &mut params.opacity,
            &grads.opacity,
            &mut self.m.opacity,
            &mut self.v.opacity,
            lrs.opacity,
        );
    }
}
