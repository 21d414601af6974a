//! Interleaved imitation and reinforcement learning fine-tuning.
//!
//! The crate is layered bottom-up:
//!
//! - [`nnkit`]: flat-parameter MLPs with manual backprop and checkpoints.
//! - [`envs`]: a sparse-reward gridworld and a dense-reward point mass, with experts.
//! - [`il`]: behavior-cloning loss, gradient and pretraining.
//! - [`rl`]: rollouts, GAE, clipped surrogate gradient and value fitting.
//! - [`interleave`]: the 1:m IL/RL schedule, alignment, gradient surgery and residual policies.
//! - [`theory`]: a quadratic testbed with exact constants for the convergence results.
//! - [`harness`]: configuration, run logs, sweeps and plots behind the `inril` CLI.

pub mod envs;
pub mod harness;
pub mod error;
pub mod il;
pub mod interleave;
pub mod nnkit;
pub mod rl;
pub mod seed;
pub mod theory;

pub use error::{Error, Result};

/// Version string written into run logs and summaries.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
