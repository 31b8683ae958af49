//! Two-stage pipeline for multi-modal object storage.
//!
//! Stage one samples a single placeable region on a container point cloud
//! with a denoising diffusion model over per-point scores. Stage two predicts
//! point-wise contact correspondences between the cropped region and the
//! object, then solves the goal pose in closed form and ranks K candidates
//! by a collision count.
//!
//! See the `examples/` directory for one runnable example per capability and
//! `src/bin/dap.rs` for the command-line pipeline.

pub mod afford;
pub mod cli;
pub mod config;
pub mod corr;
pub mod env;
pub mod error;
pub mod geom;
pub mod labeling;
pub mod nn;
pub mod ply;
pub mod pose;
pub mod tensor;

pub use error::{Error, Result};
