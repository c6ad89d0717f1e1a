//! Principal eigenvalues of `-𝓛` and `-Δ` and the sufficient extinction
//! criterion `d_v β₁ > M`.
//!
//! `K` is not symmetric (endpoint weights), but `D K` is, with
//! `D = diag(w)`. Power iteration therefore runs on the similar symmetric
//! matrix `S = D^{1/2} K D^{-1/2}`; the Rayleigh-quotient estimate is then
//! polished by inverse iteration when the grid is small enough for a dense
//! factorization.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discretization::{solve_tridiagonal, DispersalOperator, Grid1D, LaplacianOperator};
use crate::error::{Error, Result};
use crate::kinetics::{scalar_f, ModelParams};
use crate::linalg::{dot, norm2};

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 50_000;
const RESIDUAL_TOL: f64 = 1e-10;
/// Largest N for which the dense inverse-iteration polish is attempted.
const POLISH_MAX_N: usize = 2048;

#[derive(Debug, Clone, Serialize)]
pub struct NonlocalEigen {
    /// Principal eigenvalue of `-𝓛`, `1 - μ_max(K)`.
    pub beta1: f64,
    /// Positive eigenvector of `K` in node coordinates, unit Euclidean norm.
    pub eigenvector: Vec<f64>,
    /// `‖(-𝓛)φ - β₁φ‖₂ / ‖φ‖₂`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralReport {
    pub beta1: f64,
    pub lambda1: f64,
    pub eigvec_residual: f64,
    pub iterations: usize,
}

fn apply_symmetrized(op: &DispersalOperator, sqrt_w: &[f64], x: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    for ((t, xi), s) in tmp.iter_mut().zip(x).zip(sqrt_w) {
        *t = xi / s;
    }
    op.apply_kernel(tmp, out);
    for (o, s) in out.iter_mut().zip(sqrt_w) {
        *o *= s;
    }
}

/// `β₁ = 1 - μ_max(K)` by power iteration with a Rayleigh-quotient stopping
/// rule (relative change below 1e-12), followed by inverse-iteration polish.
pub fn principal_eigenvalue_nonlocal(op: &DispersalOperator) -> Result<NonlocalEigen> {
    let grid = op.grid();
    let n = grid.len();
    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();

    // Even, positive start: odd modes are absent by symmetry.
    let l = grid.half_width();
    let k = std::f64::consts::PI / (2.0 * l);
    let mut x: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&sqrt_w)
        .map(|(xi, s)| (0.1 + (k * xi).cos()) * s)
        .collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut tmp = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut mu = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < POWER_MAX_ITER {
        iterations += 1;
        apply_symmetrized(op, &sqrt_w, &x, &mut tmp, &mut y);
        let next = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        let change = (next - mu).abs() / next.abs().max(f64::MIN_POSITIVE);
        mu = next;
        if change < POWER_TOL {
            converged = true;
            break;
        }
    }

    if n <= POLISH_MAX_N {
        if let Some((m, v)) = inverse_iteration_polish(op, &sqrt_w, mu, &x) {
            mu = m;
            x = v;
        }
    }

    let mut phi: Vec<f64> = x.iter().zip(&sqrt_w).map(|(a, s)| a / s).collect();
    let nphi = norm2(&phi);
    phi.iter_mut().for_each(|v| *v /= nphi);
    if phi.iter().sum::<f64>() < 0.0 {
        phi.iter_mut().for_each(|v| *v = -*v);
    }
    let mut kphi = vec![0.0; n];
    op.apply_kernel(&phi, &mut kphi);
    let r: Vec<f64> = kphi.iter().zip(&phi).map(|(a, b)| a - mu * b).collect();
    let residual = norm2(&r);
    let beta1 = 1.0 - mu;

    if !converged && residual > RESIDUAL_TOL {
        return Err(Error::NoConvergence {
            iterations,
            estimate: beta1,
            residual,
        });
    }
    Ok(NonlocalEigen {
        beta1,
        eigenvector: phi,
        residual,
        iterations,
    })
}

/// A few steps of shifted inverse iteration on the dense symmetrized matrix.
fn inverse_iteration_polish(
    op: &DispersalOperator,
    sqrt_w: &[f64],
    shift: f64,
    start: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let n = start.len();
    let k = op.kernel_matrix();
    let s = DMatrix::from_fn(n, n, |i, j| sqrt_w[i] * k[(i, j)] / sqrt_w[j]);
    // Nudge the shift so the factorization stays regular.
    let sigma = shift + 1e-13 * shift.abs().max(1.0);
    let lu = (&s - DMatrix::identity(n, n) * sigma).lu();
    let mut x = DVector::from_column_slice(start);
    let mut mu = shift;
    for _ in 0..4 {
        let y = lu.solve(&x)?;
        let ny = y.norm();
        if !ny.is_finite() || ny == 0.0 {
            return None;
        }
        x = y / ny;
        let sx = &s * &x;
        mu = x.dot(&sx);
        if (sx - &x * mu).norm() < 1e-14 {
            break;
        }
    }
    Some((mu, x.as_slice().to_vec()))
}

/// Smallest eigenvalue of `-d Δ` with Dirichlet ends, by inverse iteration
/// with tridiagonal solves.
pub fn principal_eigenvalue_laplacian(op: &LaplacianOperator, d: f64) -> Result<f64> {
    let (lower, diag, upper) = op.negative_interior_bands();
    let m = diag.len();
    if m == 0 {
        return Err(Error::BadGrid("no interior nodes".into()));
    }
    let mut x = vec![1.0 / (m as f64).sqrt(); m];
    let mut lambda = 0.0;
    for it in 1..=1000 {
        let y = solve_tridiagonal(&lower, &diag, &upper, &x)?;
        let ny = norm2(&y);
        let next = dot(&x, &y);
        x = y.into_iter().map(|v| v / ny).collect();
        // Rayleigh quotient of A⁻¹ at the previous iterate.
        let estimate = 1.0 / next;
        let change = (estimate - lambda).abs() / estimate;
        lambda = estimate;
        if change < 1e-14 && it > 2 {
            return Ok(d * lambda);
        }
    }
    Err(Error::NoConvergence {
        iterations: 1000,
        estimate: d * lambda,
        residual: f64::NAN,
    })
}

/// Both principal eigenvalues on one grid.
pub fn spectral_report(op: &DispersalOperator) -> Result<SpectralReport> {
    let e = principal_eigenvalue_nonlocal(op)?;
    let lambda1 = principal_eigenvalue_laplacian(&LaplacianOperator::new(op.grid()), 1.0)?;
    Ok(SpectralReport {
        beta1: e.beta1,
        lambda1,
        eigvec_residual: e.residual,
        iterations: e.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionCriterion {
    pub extinction_guaranteed: bool,
    /// `d_v β₁ - M`.
    pub margin: f64,
}

/// Sufficient condition for extinction: `d_v β₁ > M`.
pub fn extinction_criterion(beta1: f64, d_v: f64, lipschitz: f64) -> ExtinctionCriterion {
    let margin = d_v * beta1 - lipschitz;
    ExtinctionCriterion {
        extinction_guaranteed: margin > 0.0,
        margin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub m: f64,
    pub samples: usize,
    /// Always true: a sampled maximum slope bounds the constant from below.
    pub from_below: bool,
}

/// Largest observed `|f(v₂) - f(v₁)|∞ / |v₂ - v₁|` over uniform profiles
/// `v ∈ [0, v_range]` sampled at `samples + 1` equally spaced levels.
pub fn estimate_lipschitz_m(
    params: &ModelParams,
    grid: &Grid1D,
    v_range: f64,
    samples: usize,
) -> Result<LipschitzEstimate> {
    if !(v_range > 0.0) || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need v_range > 0 and at least one sample, got {v_range}, {samples}"
        )));
    }
    let n = grid.len();
    let dv = v_range / samples as f64;
    let mut prev = scalar_f(&vec![0.0; n], params, grid)?;
    let mut m: f64 = 0.0;
    for k in 1..=samples {
        let cur = scalar_f(&vec![k as f64 * dv; n], params, grid)?;
        let slope = cur
            .iter()
            .zip(&prev)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()))
            / dv;
        m = m.max(slope);
        prev = cur;
    }
    Ok(LipschitzEstimate {
        m,
        samples,
        from_below: true,
    })
}
