//! Continual learning with Cramer-Wold target-layer regularization.
//!
//! A shared feature network is trained on a sequence of tasks while a small
//! generator memorizes the distribution of its target-layer outputs; the
//! squared Cramer-Wold distance between the generator's samples and the
//! current target-layer batch penalizes drift away from what earlier tasks
//! produced. The crate bundles the pieces needed to run that strategy end
//! to end: a minimal reverse-mode autodiff core, the distance itself with a
//! Monte-Carlo oracle, the network roles, the task-stream scenarios
//! (task- / domain- / class-incremental), data loading, and an experiment
//! harness with baselines, metrics and a CLI.

// run configs are built as default-plus-overrides throughout, mirroring
// how the config file itself works
#![allow(clippy::field_reassign_with_default)]

pub mod cw;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod models;
pub mod optim;
pub mod rng;
pub mod scenarios;
pub mod selftest;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{CwError, Result};
pub use tensor::Tensor;
