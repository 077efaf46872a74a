//! Accelerated noisy power method toolkit.
//!
//! Centralized and decentralized subspace iteration with momentum, the
//! worst-case constructions that bound what perturbations it tolerates, and
//! an experiment runner that writes CSV traces.

// `!(x > 0.0)` style checks are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod chebyshev;
pub mod config;
pub mod decentralized;
pub mod error;
pub mod experiment;
pub mod gossip;
pub mod linalg;
pub mod power;
pub mod rng;

pub use error::{Error, Result};
