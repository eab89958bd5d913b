//! Projected differentially private SGD.
//!
//! The crate trains linear and small MLP models with four optimizers
//! (SGD, DP-SGD, projected DP-SGD driven by a public-gradient eigenspace, and
//! DP-SGD projected onto a random subspace), accounts privacy with a
//! subsampled-Gaussian RDP accountant, and ships Monte Carlo experiments that
//! check the concentration and subspace-closeness behaviour the method relies on.
//!
//! Per-example gradients and Monte Carlo replicates fan out over rayon when the
//! `parallel` feature is enabled (default). All randomness is drawn from
//! counter-indexed streams, so results do not depend on the worker count.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod core_math;
pub mod data;
pub mod error;
pub mod exec;
pub mod models;
pub mod optim;
pub mod privacy;
pub mod subspace;
pub mod verify;

pub use error::{Error, Result};
