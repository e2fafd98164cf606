//! Single-photon cooperative emission of a cloud of two-level atoms.
//!
//! The single excitation shared by `N` atoms decays through the collective
//! decay matrix `Gamma_jl = gamma1 sinc(k0 |r_j - r_l|) exp(-i k0 n0 . (r_j - r_l))`.
//! The crate samples Gaussian clouds, builds and diagonalizes that matrix,
//! propagates amplitudes, projects onto the symmetric Dicke state and its
//! orthogonal complement, and computes rates, angular patterns and ensemble
//! scaling exponents.

pub mod acceptance;
pub mod cloud;
pub mod config;
pub mod dicke;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod observables;
pub mod ode;
pub mod quadrature;
pub mod run;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
