//! Quasilocal dissipative engineering of pure Gaussian states.
//!
//! The crate builds drift/diffusion models of linear open quantum systems,
//! solves for their steady covariance, certifies purity of the steady state
//! for both a target system and its auxiliary-mode extension, synthesizes
//! single-auxiliary-mode switching protocols for Gaussian cluster states, and
//! evaluates steady-state entanglement of a two-ensemble squeezer under
//! decoherence and parameter error.

pub mod cluster;
pub mod entanglement;
pub mod error;
pub mod gaussian;
pub mod lyapunov;
pub mod matrix;
pub mod switching;
pub mod system;

pub use error::{Error, Result};
pub use matrix::{CMat, MatrixJson, RMat};
