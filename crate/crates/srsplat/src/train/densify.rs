//! Adaptive density control: clone small high-gradient Gaussians, split
//! large ones, prune near-transparent ones, keeping optimizer moment rows
//! aligned with the live set throughout.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::gaussian::quat_to_rotation;
use crate::render::RenderGradients;
use crate::train::adam::Adam;
use crate::train::params::{softplus_inv, ParamVecs};

/// Positional-gradient magnitudes accumulated since the last density event.
#[derive(Debug, Clone)]
pub struct DensifyStats {
    accum: Vec<f64>,
    steps: u32,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats {
            accum: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn observe(&mut self, g: &RenderGradients) {
        assert_eq!(self.accum.len(), g.len());
        for (a, p) in self.accum.iter_mut().zip(&g.position) {
            *a += p.norm();
        }
        self.steps += 1;
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accum[i] / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub capped: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Decision {
    Keep,
    Prune,
    Clone,
    Split,
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn densify_and_prune(
    params: &mut ParamVecs,
    adam: &mut Adam,
    stats: &DensifyStats,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> DensifyReport {
    let n = params.len();
    let scene = params.to_scene();
    let mut report = DensifyReport::default();

    let mut decisions = vec![Decision::Keep; n];
    let mut projected = n as i64;
    for i in 0..n {
        if scene[i].opacity < cfg.prune_opacity {
            decisions[i] = Decision::Prune;
            projected -= 1;
            report.pruned += 1;
            continue;
        }
        if stats.mean(i) <= cfg.densify_grad_threshold {
            continue;
        }
        // Clone adds one row; split swaps one row for two.
        if projected + 1 > cfg.max_gaussians as i64 {
            report.capped = true;
            continue;
        }
        if scene[i].scale.max() > cfg.split_scale_threshold {
            decisions[i] = Decision::Split;
            report.split += 1;
        } else {
            decisions[i] = Decision::Clone;
            report.cloned += 1;
        }
        projected += 1;
    }
    if report.capped {
        log::warn!(
            "density control hit the {}-Gaussian cap; further growth suppressed",
            cfg.max_gaussians
        );
    }

    let new_n = projected.max(0) as usize;
    let mut out_params = ParamVecs::zeros(0);
    let mut out_m = ParamVecs::zeros(0);
    let mut out_v = ParamVecs::zeros(0);
    reserve(&mut out_params, new_n);
    reserve(&mut out_m, new_n);
    reserve(&mut out_v, new_n);

    let push_row = |dst_p: &mut ParamVecs, src: &ParamVecs, i: usize| {
        for k in 0..3 {
            dst_p.position.push(src.position[3 * i + k]);
            dst_p.scale.push(src.scale[3 * i + k]);
            dst_p.color.push(src.color[3 * i + k]);
        }
        for k in 0..4 {
            dst_p.rotation.push(src.rotation[4 * i + k]);
        }
        dst_p.opacity.push(src.opacity[i]);
    };

    // Survivors first (original order), then clones, then split children;
    // the generator is consumed only by the final group, in index order.
    for i in 0..n {
        if decisions[i] != Decision::Prune && decisions[i] != Decision::Split {
            push_row(&mut out_params, params, i);
            push_row(&mut out_m, &adam.m, i);
            push_row(&mut out_v, &adam.v, i);
        }
    }
    for i in 0..n {
        if decisions[i] == Decision::Clone {
            push_row(&mut out_params, params, i);
            push_row(&mut out_m, &adam.m, i);
            push_row(&mut out_v, &adam.v, i);
        }
    }
    for i in 0..n {
        if decisions[i] != Decision::Split {
            continue;
        }
        let g = &scene[i];
        let rot = quat_to_rotation(g.rotation);
        for _child in 0..2 {
            let xi = Vector3::new(
                sample_normal(rng),
                sample_normal(rng),
                sample_normal(rng),
            );
            let offset = rot * Vector3::new(g.scale.x * xi.x, g.scale.y * xi.y, g.scale.z * xi.z);
            let pos = g.position + offset;
            for k in 0..3 {
                out_params.position.push(pos[k]);
                out_params.scale.push(softplus_inv(g.scale[k] / 1.6));
                out_params.color.push(params.color[3 * i + k]);
                out_m.position.push(0.0);
                out_m.scale.push(0.0);
                out_m.color.push(0.0);
                out_v.position.push(0.0);
                out_v.scale.push(0.0);
                out_v.color.push(0.0);
            }
            for k in 0..4 {
                out_params.rotation.push(params.rotation[4 * i + k]);
                out_m.rotation.push(0.0);
                out_v.rotation.push(0.0);
            }
            out_params.opacity.push(params.opacity[i]);
            out_m.opacity.push(0.0);
            out_v.opacity.push(0.0);
        }
    }

    debug_assert_eq!(out_params.len(), new_n);
    *params = out_params;
    adam.m = out_m;
    adam.v = out_v;
    report
}

fn reserve(p: &mut ParamVecs, n: usize) {
    p.position.reserve(3 * n);
    p.scale.reserve(3 * n);
    p.rotation.reserve(4 * n);
    p.color.reserve(3 * n);
    p.opacity.reserve(n);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::test_scenes::{axis_camera, random_scene};
    use crate::render::{render, RenderSettings};
    use crate::train::params::{sigmoid, softplus};
    use rand_chacha::rand_core::SeedableRng;

    fn quiet_stats(n: usize) -> DensifyStats {
        let mut s = DensifyStats::new(n);
        s.steps = 10;
        s
    }

    fn hot_stats(n: usize, hot: usize) -> DensifyStats {
        let mut s = quiet_stats(n);
        s.accum[hot] = 10.0 * 10.0;
        s
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            densify_grad_threshold: 1.0,
            split_scale_threshold: 0.2,
            prune_opacity: 0.005,
            max_gaussians: 100,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn no_trigger_means_no_change() {
        let scene = random_scene(31, 6);
        let mut params = ParamVecs::from_scene(&scene);
        let before = params.clone();
        let mut adam = Adam::new(6);
        adam.m.position[2] = 0.5;
        let m_before = adam.m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            densify_and_prune(&mut params, &mut adam, &quiet_stats(6), &cfg(), &mut rng);
        assert_eq!(report, DensifyReport::default());
        assert_eq!(params, before);
        assert_eq!(adam.m, m_before);
    }

    #[test]
    fn small_hot_gaussian_clones_with_moment_rows() {
        let mut scene = random_scene(32, 4);
        scene[1].scale = Vector3::new(0.05, 0.05, 0.05);
        let mut params = ParamVecs::from_scene(&scene);
        let mut adam = Adam::new(4);
        adam.m.opacity[1] = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            densify_and_prune(&mut params, &mut adam, &hot_stats(4, 1), &cfg(), &mut rng);
        assert_eq!(report.cloned, 1);
        assert_eq!(report.split, 0);
        assert_eq!(params.len(), 5);
        // The clone lands at the end and copies the parent's rows.
        assert_eq!(params.opacity[4], params.opacity[1]);
        assert_eq!(adam.m.opacity[4], 0.25);
    }

    #[test]
    fn large_hot_gaussian_splits_into_two_children() {
        let mut scene = random_scene(33, 4);
        scene[2].scale = Vector3::new(0.5, 0.3, 0.4);
        let mut params = ParamVecs::from_scene(&scene);
        let mut adam = Adam::new(4);
        adam.m.opacity[2] = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report =
            densify_and_prune(&mut params, &mut adam, &hot_stats(4, 2), &cfg(), &mut rng);
        assert_eq!(report.split, 1);
        assert_eq!(params.len(), 5);
        let parent = &scene[2];
        for child in [3, 4] {
            let s = softplus(params.scale[3 * child]);
            assert!((s - parent.scale.x / 1.6).abs() < 1e-9);
            assert_eq!(adam.m.opacity[child], 0.0);
            let pos = Vector3::new(
                params.position[3 * child],
                params.position[3 * child + 1],
                params.position[3 * child + 2],
            );
            assert!((pos - parent.position).norm() < 5.0 * parent.scale.max());
            assert!((sigmoid(params.opacity[child]) - parent.opacity).abs() < 1e-12);
        }
    }

    #[test]
    fn transparent_gaussians_prune_without_changing_renders() {
        let mut scene = random_scene(34, 6);
        scene[3].opacity = 1e-9;
        let mut params = ParamVecs::from_scene(&scene);
        let mut adam = Adam::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report =
            densify_and_prune(&mut params, &mut adam, &quiet_stats(6), &cfg(), &mut rng);
        assert_eq!(report.pruned, 1);
        assert_eq!(params.len(), 5);
        assert_eq!(adam.m.len(), 5);

        let cam = axis_camera(16);
        let settings = RenderSettings::default();
        let before = render(&scene, &cam, None, &settings);
        let after = render(&params.to_scene(), &cam, None, &settings);
        for (a, b) in before.image.data.iter().zip(&after.image.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cap_suppresses_growth_with_report_flag() {
        let scene = random_scene(35, 4);
        let mut params = ParamVecs::from_scene(&scene);
        let mut adam = Adam::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let capped_cfg = TrainConfig {
            max_gaussians: 4,
            ..cfg()
        };
        let report =
            densify_and_prune(&mut params, &mut adam, &hot_stats(4, 0), &capped_cfg, &mut rng);
        assert!(report.capped);
        assert_eq!(params.len(), 4);
    }
}
