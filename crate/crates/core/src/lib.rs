//! Finite-volume simulator for a six-species cross-diffusion model of cancer
//! invasion driven by the plasminogen activation system, with runtime checks
//! of the model's a priori bounds and a verification toolkit.

pub mod cli;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod monitors;
pub mod operators;
pub mod stepper;
pub mod verification;

pub use error::{Error, HypothesisError, Result};
