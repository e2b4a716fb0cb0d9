//! Strong-convergence toolkit for SDEs whose drift is only Hölder continuous
//! in time.
//!
//! The centerpiece is the drift-randomized Milstein scheme
//! ([`scheme::SchemeKind::RandomizedMilstein`]), which evaluates the drift at
//! a uniformly distributed intermediate time of every step. Around it sit
//! the classical Milstein and Euler–Maruyama baselines, the randomized
//! Riemann sum, residual/Spijker-norm diagnostics and a Monte Carlo harness
//! for convergence and work-precision studies.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod model;
pub mod noise;
mod parallel;
pub mod quadrature;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::TemporalGrid;
pub use model::SdeProblem;
pub use noise::{RngStream, StepNoise, WienerPath};
pub use scheme::{integrate, SchemeKind, Trajectory};
