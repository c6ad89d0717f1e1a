//! Spatial discretization of `Ω = (-L, L)`.

mod grid;
mod laplacian;
mod nonlocal;
mod tridiag;

pub use grid::Grid1D;
pub use laplacian::LaplacianOperator;
pub use nonlocal::{taylor_consistency, DispersalOperator, Quadrature};
pub use tridiag::solve_tridiagonal;
