//! Membership-inference audit bench for data-space tabular diffusion models.
//!
//! The crate trains small Gaussian diffusion generators over encoded tables,
//! mounts loss-feature (white- and black-box) and ensemble membership attacks
//! against them, and computes distance-based privacy heuristics and synthetic
//! quality metrics. [`harness`] ties everything into seeded experiment sweeps.

pub mod attack_tf;
pub mod dataset;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod heuristics;
pub mod nn;
pub mod quality;
pub mod scenarios;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
