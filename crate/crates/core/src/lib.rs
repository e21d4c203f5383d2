//! Exact many-particle and mean-field dynamics of a two-mode Bose-Hubbard
//! dimer with decay in the first site.
//!
//! - [`fock`]: Fock-basis engine (Hamiltonian, coherent states, non-unitary
//!   propagation, expectation values and covariances)
//! - [`meanfield`]: nonlinear Bloch equations and the discrete GPE
//! - [`fixedpoints`]: fixed points, stability, parameter-plane regions
//! - [`experiments`]: mean-field vs. many-particle comparison runs and
//!   their CSV/JSON outputs

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod experiments;
pub mod fixedpoints;
pub mod fock;
pub mod meanfield;
pub mod ode;
pub mod params;

pub use num_complex;

pub use error::{Error, Result};
pub use ode::{Method, Solver};
pub use params::{InteractionConvention, ModelParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
