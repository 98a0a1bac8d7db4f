//! Channel estimation for dynamic metasurface antennas under mutual coupling.
//!
//! The end-to-end channel for a binary element configuration `v` is
//! `H(v) = H0 + A Omega(v) B` with `Omega(v) = (I - diag(r) Gamma)^-1 diag(r)`.
//! The estimators recover the unknown channels from measurements of `H(v)` for
//! known configurations, which is what the optimizer needs to pick a good `v`.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod metrics;
pub mod mnt;
pub mod optimizer;
pub mod scenario;
pub mod serial;
pub mod tensor;

pub use error::{Error, Result};
