//! Numerical tools for Hamilton-Jacobi equations forced by `f(x) . dB(t)`:
//! random environments, pathwise Lagrangian actions, lattice minimization,
//! Hopf-Lax and finite-difference solvers, and Monte Carlo estimation of the
//! effective Lagrangian and Hamiltonian.

pub mod action;
pub mod config;
pub mod env;
pub mod error;
pub mod hamiltonian;
pub mod hj;
pub mod homog;
pub mod invariants;
pub mod optimizer;
pub mod oracle;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
