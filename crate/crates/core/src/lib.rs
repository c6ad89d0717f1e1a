//! Numerical laboratory for the Klausmeier vegetation-water model with
//! non-local plant dispersal on a bounded 1-D habitat `(-L, L)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: dispersal densities, their moments and assumption checks.
//! - [`discretization`]: uniform grid, the quadrature-based dispersal
//!   operator, the Dirichlet Laplacian and a tridiagonal solver.
//! - [`kinetics`]: reaction terms, constant equilibria and the stationary
//!   water solve `W(v)`.
//! - [`model`]: a parameter set bound to its spatial operators.
//! - [`dynamics`]: forward-Euler integration, steady-state detection and
//!   decay checks.
//! - [`spectral`]: principal eigenvalues and the extinction criterion.
//! - [`continuation`]: Newton and pseudo-arclength continuation in the
//!   rainfall parameter.
//! - [`experiments`]: the critical patch-size sweep and bifurcation suite.
//! - [`output`]: CSV and plot-script writers.

pub mod continuation;
pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod kinetics;
pub mod model;
pub mod output;
pub mod spectral;

mod linalg;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
