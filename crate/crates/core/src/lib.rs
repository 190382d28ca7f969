//! Learned WENO weights for 1-D conservation laws, trained by
//! backpropagation through the time-stepping solver.
//!
//! The crate is organised bottom-up: [`tape`] records differentiable
//! computations, [`weno`] holds the reconstruction kernels, [`env`] steps
//! Burgers and Euler systems one transition at a time, [`policy`] is the
//! shared per-interface network, [`train`] runs rollouts and Adam updates,
//! and [`eval`] compares policies against the WENO baseline.

pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod grid;
pub mod ic;
pub mod policy;
pub mod scalar;
pub mod tape;
pub mod train;
pub mod weno;

pub use error::{Error, Result};
pub use scalar::Real;
