//! Temporal body-model regression trained against an adversarial motion
//! discriminator, with a sequential-VAE motion prior, a toy parametric body,
//! a 3D pose metric suite and a synthetic motion-capture corpus.
//!
//! Everything learnable sits on the small reverse-mode engine in [`tensor`].

pub mod body;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io_util;
pub mod metrics;
pub mod motionsim;
pub mod nets;
pub mod objectives;
pub mod rng;
pub mod run;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
