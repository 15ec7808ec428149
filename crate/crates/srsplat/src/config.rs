//! Training configuration and the flat `key = value` config file format.
//!
//! Precedence is flags > file > defaults: the CLI first applies a config
//! file (if given), then individual flag overrides, each through the same
//! `apply_kv` path so every field is reachable both ways.

use std::path::Path;

use crate::error::Error;
use crate::loss::{LossConfig, MaskedSsimMode, TextureMode};
use crate::Result;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Views sampled (without replacement) and summed per optimizer step.
    pub mv_views: usize,
    pub seed: u64,
    /// Super-resolution factor between the LR inputs and the HR outputs.
    pub scale_factor: f64,
    pub lr_position: f64,
    /// Position learning rate decays exponentially to this value at the
    /// final iteration.
    pub lr_position_final: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub densify_enabled: bool,
    pub densify_start: usize,
    pub densify_end: usize,
    pub densify_interval: usize,
    /// Window-mean positional gradient magnitude that triggers clone/split.
    pub densify_grad_threshold: f64,
    /// Gaussians larger than this (max activated scale, world units) split
    /// instead of cloning.
    pub split_scale_threshold: f64,
    pub prune_opacity: f64,
    pub max_gaussians: usize,
    /// Steps between recomputations of per-Gaussian smoothing sigmas.
    pub smoothing_update_interval: usize,
    pub sampling_k: f64,
    /// Sigma assigned to Gaussians behind every training camera.
    pub sampling_fallback_sigma: f64,
    /// Steps between training-log CSV rows (the final step always logs).
    pub log_interval: usize,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30000,
            mv_views: 3,
            seed: 0,
            scale_factor: 4.0,
            lr_position: 1.6e-4,
            lr_position_final: 1.6e-6,
            lr_scale: 5e-3,
            lr_rotation: 1e-3,
            lr_color: 2.5e-3,
            lr_opacity: 5e-2,
            densify_enabled: true,
            densify_start: 500,
            densify_end: 15000,
            densify_interval: 100,
            densify_grad_threshold: 1e-4,
            split_scale_threshold: 0.05,
            prune_opacity: 0.005,
            max_gaussians: 100_000,
            smoothing_update_interval: 100,
            sampling_k: crate::gaussian::DEFAULT_SAMPLING_K,
            sampling_fallback_sigma: 0.0,
            log_interval: 100,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mv_views < 1 {
            return Err(Error::Config("mv_views must be >= 1".into()));
        }
        if self.scale_factor < 1.0 {
            return Err(Error::Config(format!(
                "scale_factor must be >= 1, got {}",
                self.scale_factor
            )));
        }
        if self.lr_position <= 0.0 || self.lr_position_final <= 0.0 {
            return Err(Error::Config("position learning rates must be positive".into()));
        }
        if self.densify_interval == 0 || self.smoothing_update_interval == 0 {
            return Err(Error::Config("intervals must be nonzero".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be nonzero".into()));
        }
        self.loss.validate().map_err(Error::Config)?;
        Ok(())
    }

    /// Position learning rate at `step` of `total`: exponential decay from
    /// `lr_position` to `lr_position_final`.
    pub fn lr_position_at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.lr_position;
        }
        let t = step as f64 / (total - 1) as f64;
        self.lr_position * (self.lr_position_final / self.lr_position).powf(t)
    }

    /// Applies one config key. Unknown keys and malformed values error so a
    /// typo in a config file cannot silently fall back to a default.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse::<T>().map_err(|_| {
                Error::Config(format!("bad value '{value}' for key '{key}'"))
            })
        }
        let v = value.trim();
        match key {
            "iterations" => self.iterations = num(key, v)?,
            "mv_views" => self.mv_views = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "scale_factor" => self.scale_factor = num(key, v)?,
            "lr_position" => self.lr_position = num(key, v)?,
            "lr_position_final" => self.lr_position_final = num(key, v)?,
            "lr_scale" => self.lr_scale = num(key, v)?,
            "lr_rotation" => self.lr_rotation = num(key, v)?,
            "lr_color" => self.lr_color = num(key, v)?,
            "lr_opacity" => self.lr_opacity = num(key, v)?,
            "densify_enabled" => self.densify_enabled = parse_bool(key, v)?,
            "densify_start" => self.densify_start = num(key, v)?,
            "densify_end" => self.densify_end = num(key, v)?,
            "densify_interval" => self.densify_interval = num(key, v)?,
            "densify_grad_threshold" => self.densify_grad_threshold = num(key, v)?,
            "split_scale_threshold" => self.split_scale_threshold = num(key, v)?,
            "prune_opacity" => self.prune_opacity = num(key, v)?,
            "max_gaussians" => self.max_gaussians = num(key, v)?,
            "smoothing_update_interval" => self.smoothing_update_interval = num(key, v)?,
            "sampling_k" => self.sampling_k = num(key, v)?,
            "sampling_fallback_sigma" => self.sampling_fallback_sigma = num(key, v)?,
            "log_interval" => self.log_interval = num(key, v)?,
            "lambda_ds" => self.loss.lambda_ds = num(key, v)?,
            "lambda_i" => self.loss.lambda_i = num(key, v)?,
            "lambda_e" => self.loss.lambda_e = num(key, v)?,
            "threshold" => self.loss.threshold = num(key, v)?,
            "epsilon" => self.loss.epsilon = num(key, v)?,
            "ssim_window" => self.loss.ssim_window = num(key, v)?,
            "ssim_sigma" => self.loss.ssim_sigma = num(key, v)?,
            "texture_mode" => {
                self.loss.texture_mode = match v {
                    "internal" => TextureMode::Internal,
                    "external" => TextureMode::External,
                    "both" => TextureMode::Both,
                    "mask-fused" => TextureMode::MaskFused,
                    other => {
                        return Err(Error::Config(format!(
                            "texture_mode must be internal|external|both|mask-fused, got '{other}'"
                        )))
                    }
                }
            }
            "masked_ssim" => {
                self.loss.masked_ssim = match v {
                    "substitute" => MaskedSsimMode::Substitute,
                    "map-weight" => MaskedSsimMode::MapWeight,
                    other => {
                        return Err(Error::Config(format!(
                            "masked_ssim must be substitute|map-weight, got '{other}'"
                        )))
                    }
                }
            }
            "pearson_patch" => {
                self.loss.pearson_patch = match v {
                    "none" => None,
                    other => Some(num::<usize>(key, other)?),
                }
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        for (key, value) in parse_config_file(path)? {
            self.apply_kv(&key, &value)?;
        }
        Ok(())
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("bad boolean '{other}' for key '{key}'"))),
    }
}

/// Parses `key = value` lines; `#` comments and blank lines are skipped.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, idx + 1, "expected 'key = value'"));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
