//! Super-resolution 3D Gaussian splatting.
//!
//! Reconstructs a high-resolution Gaussian splat model from low-resolution
//! multi-view images by fusing two guidance sources at the target resolution:
//! externally upscaled images and depth maps (from files, or a bicubic
//! stand-in), and internal renders of a frozen low-resolution model splatted
//! directly at the target intrinsics. A per-pixel discrepancy mask decides,
//! pixel by pixel, which source supervises texture; depth is supervised by a
//! correlation loss that ignores affine ambiguity.
//!
//! The crate is a library first. Each major capability has a runnable
//! example:
//!
//! - `cargo run --example render_scene` — forward rendering and PNG/FIMG output
//! - `cargo run --example sr_splatting` — rendering one model at several sampling rates
//! - `cargo run --example smoothing_filter` — the 3D low-pass filter and its mass preservation
//! - `cargo run --example bicubic_resampling` — the resampler used for the guidance fallback
//! - `cargo run --example discrepancy_mask` — discrepancy maps and binary fusion masks
//! - `cargo run --example depth_correlation` — the affine-invariant depth loss
//! - `cargo run --example gradient_check` — analytic gradients vs. finite differences
//! - `cargo run --example two_stage_training` — the full low-res -> high-res pipeline
//! - `cargo run --example threshold_sweep` — fusion threshold sensitivity on one scene
//!
//! A thin `srsplat` binary wraps the same library entry points as
//! subcommands (`gen-scene`, `train-internal`, `build-guidance`, `train-hr`,
//! `render`, `eval`, `run-experiment`, `sweep-threshold`) for scripted use.

pub mod buffer;
pub mod camera;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod guidance;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod render;
pub mod resample;
pub mod scenegen;
pub mod train;

pub use buffer::{DepthBuffer, ImageBuffer, MaskBuffer};
pub use camera::Camera;
pub use error::Error;
pub use gaussian::Gaussian3D;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
