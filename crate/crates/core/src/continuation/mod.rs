//! Newton's method and pseudo-arclength continuation (PALC) for systems
//! `R(u; p) = 0` in one scalar parameter.
//!
//! Each PALC step predicts along the unit tangent `t = (t_u, t_p)` and
//! corrects with Newton on the bordered system
//!
//! ```text
//! R(u; p) = 0
//! θ² t_u·(u - u₀) + t_p (p - p₀) = ds
//! ```
//!
//! where `θ² = 1 / dim` balances the state against the parameter. Folds are
//! sign changes of `t_p = dp/ds` between accepted points, refined by a
//! secant iteration on `dp/ds`.

mod stationary;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};

pub use stationary::{
    boundary_ratio, stability_flag, Branch, BranchPoint, Stability, StationaryProblem,
};

/// A square system `R(u; p) = 0` with an analytic Jacobian.
pub trait ContinuationProblem {
    fn dim(&self) -> usize;

    fn residual(&self, u: &[f64], p: f64) -> Vec<f64>;

    /// `∂R/∂u` at `(u, p)`.
    fn jacobian(&self, u: &[f64], p: f64) -> DMatrix<f64>;

    /// `∂R/∂p` at `(u, p)`.
    fn param_derivative(&self, u: &[f64], p: f64) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Plain Newton iteration at fixed `p` until `‖R‖₂ ≤ tol`.
pub fn newton_solve<P: ContinuationProblem + ?Sized>(
    problem: &P,
    p: f64,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    if guess.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("Newton guess is not finite".into()));
    }
    let mut u = guess.to_vec();
    let mut r = problem.residual(&u, p);
    let mut norm = norm2(&r);
    let initial = norm.max(1.0);
    for it in 0..=max_iter {
        if norm <= tol {
            return Ok(NewtonOutcome {
                u,
                iterations: it,
                residual_norm: norm,
            });
        }
        if it == max_iter || !norm.is_finite() || norm > 1e8 * initial {
            break;
        }
        let j = problem.jacobian(&u, p);
        let rhs = DVector::from_vec(r);
        let step = j.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        if step.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        for (ui, si) in u.iter_mut().zip(step.iter()) {
            *ui -= si;
        }
        r = problem.residual(&u, p);
        norm = norm2(&r);
    }
    Err(Error::NewtonDiverged {
        iterations: max_iter,
        residual: norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PalcControls {
    pub ds0: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub max_folds: usize,
    pub newton_tol: f64,
    pub max_corrector_iter: usize,
    /// Step growth factor after a fast corrector convergence.
    pub growth: f64,
    /// Corrector iterations at or below which the step grows.
    pub fast_iterations: usize,
    /// Continuation stops once `p` leaves `[param_min, param_max]`.
    pub param_min: f64,
    pub param_max: f64,
    pub direction: Direction,
}

impl Default for PalcControls {
    fn default() -> Self {
        PalcControls {
            ds0: 0.01,
            ds_min: 1e-6,
            ds_max: 0.1,
            max_points: 20_000,
            max_folds: 200,
            newton_tol: 1e-10,
            max_corrector_iter: 12,
            growth: 1.3,
            fast_iterations: 3,
            param_min: 0.1,
            param_max: 3.0,
            direction: Direction::Decreasing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationPoint {
    pub p: f64,
    pub s: f64,
    pub u: Vec<f64>,
    /// State component of the unit tangent.
    pub tangent_u: Vec<f64>,
    /// Parameter component of the unit tangent, `dp/ds`.
    pub tangent_p: f64,
    pub residual_norm: f64,
    pub corrector_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fold {
    pub p: f64,
    pub s: f64,
    /// The fold lies between points `after` and `after + 1`.
    pub after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ParameterExit,
    FoldCountCap,
    StepFailure { ds: f64 },
    PointCap,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ParameterExit => "parameter_exit",
            Termination::FoldCountCap => "fold_count_cap",
            Termination::StepFailure { .. } => "step_failure",
            Termination::PointCap => "point_cap",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationBranch {
    pub points: Vec<ContinuationPoint>,
    pub folds: Vec<Fold>,
    pub termination: Termination,
}

struct Tangent {
    u: Vec<f64>,
    p: f64,
}

struct Palc<'a, P: ?Sized> {
    problem: &'a P,
    controls: &'a PalcControls,
    theta2: f64,
}

impl<P: ContinuationProblem + ?Sized> Palc<'_, P> {
    fn weighted_norm(&self, du: &[f64], dp: f64) -> f64 {
        (self.theta2 * dot(du, du) + dp * dp).sqrt()
    }

    fn bordered(&self, u: &[f64], p: f64, border_u: &[f64], border_p: f64) -> DMatrix<f64> {
        let n = self.problem.dim();
        let j = self.problem.jacobian(u, p);
        let rp = self.problem.param_derivative(u, p);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&j);
        for i in 0..n {
            m[(i, n)] = rp[i];
            m[(n, i)] = self.theta2 * border_u[i];
        }
        m[(n, n)] = border_p;
        m
    }

    /// Unit tangent at `(u, p)`, oriented to have positive product with `prev`.
    fn tangent(&self, u: &[f64], p: f64, prev: &Tangent) -> Result<Tangent> {
        let n = self.problem.dim();
        let m = self.bordered(u, p, &prev.u, prev.p);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let z = m.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let zu = z.as_slice()[..n].to_vec();
        let zp = z[n];
        let norm = self.weighted_norm(&zu, zp);
        Ok(Tangent {
            u: zu.into_iter().map(|x| x / norm).collect(),
            p: zp / norm,
        })
    }

    fn initial_tangent(&self, u: &[f64], p: f64) -> Result<Tangent> {
        let j = self.problem.jacobian(u, p);
        let rp = DVector::from_vec(self.problem.param_derivative(u, p));
        let du = j.lu().solve(&(-rp)).ok_or(Error::SingularJacobian)?;
        let du: Vec<f64> = du.iter().copied().collect();
        let sign = match self.controls.direction {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        };
        let norm = self.weighted_norm(&du, 1.0);
        Ok(Tangent {
            u: du.into_iter().map(|x| sign * x / norm).collect(),
            p: sign / norm,
        })
    }

    /// Newton on the bordered system from the predictor at arclength `ds`.
    fn correct(&self, u0: &[f64], p0: f64, t: &Tangent, ds: f64) -> Option<(Vec<f64>, f64, usize, f64)> {
        let n = self.problem.dim();
        let mut u: Vec<f64> = u0.iter().zip(&t.u).map(|(a, b)| a + ds * b).collect();
        let mut p = p0 + ds * t.p;
        let (u_pred, p_pred) = (u.clone(), p);
        for it in 0..=self.controls.max_corrector_iter {
            let r = self.problem.residual(&u, p);
            let du: Vec<f64> = u.iter().zip(u0).map(|(a, b)| a - b).collect();
            let arc = self.theta2 * dot(&t.u, &du) + t.p * (p - p0) - ds;
            let norm = norm2(&r);
            if !norm.is_finite() {
                return None;
            }
            if norm <= self.controls.newton_tol && arc.abs() <= 1e-12 * ds.abs().max(1.0) {
                let shift: Vec<f64> = u.iter().zip(&u_pred).map(|(a, b)| a - b).collect();
                if self.weighted_norm(&shift, p - p_pred) > ds.abs() {
                    return None;
                }
                return Some((u, p, it, norm));
            }
            if it == self.controls.max_corrector_iter {
                return None;
            }
            let m = self.bordered(&u, p, &t.u, t.p);
            let mut rhs = DVector::from_vec(r);
            rhs = rhs.insert_row(n, arc);
            let step = m.lu().solve(&rhs)?;
            if step.iter().any(|x| !x.is_finite()) {
                return None;
            }
            for i in 0..n {
                u[i] -= step[i];
            }
            p -= step[n];
        }
        None
    }

    /// Secant iteration on `g(σ) = dp/ds` at arclength `σ` from `start`.
    fn locate_fold(&self, start: &ContinuationPoint, t: &Tangent, ds: f64, tp_end: f64) -> Option<(f64, f64)> {
        let (mut s0, mut g0) = (0.0, start.tangent_p);
        let (mut s1, mut g1) = (ds, tp_end);
        let mut best = None;
        for _ in 0..30 {
            if g1 == g0 {
                break;
            }
            let s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
            let (u, p, _, _) = self.correct(&start.u, start.p, t, s2)?;
            let g2 = self.tangent(&u, p, t).ok()?.p;
            best = Some((p, s2));
            if g2.abs() < 1e-10 || (s2 - s1).abs() < 1e-14 {
                break;
            }
            (s0, g0, s1, g1) = (s1, g1, s2, g2);
        }
        best
    }
}

/// Traces the solution curve through `(initial, p_start)` with adaptive
/// arclength steps (halved on corrector failure, grown on fast
/// convergence).
pub fn palc_continue<P: ContinuationProblem + ?Sized>(
    problem: &P,
    p_start: f64,
    initial: &[f64],
    controls: &PalcControls,
) -> Result<ContinuationBranch> {
    let n = problem.dim();
    let palc = Palc {
        problem,
        controls,
        theta2: 1.0 / n as f64,
    };
    let start = newton_solve(problem, p_start, initial, controls.newton_tol, 50)?;
    let mut tangent = palc.initial_tangent(&start.u, p_start)?;
    let mut points = vec![ContinuationPoint {
        p: p_start,
        s: 0.0,
        u: start.u,
        tangent_u: tangent.u.clone(),
        tangent_p: tangent.p,
        residual_norm: start.residual_norm,
        corrector_iterations: start.iterations,
    }];
    let mut folds = Vec::new();
    let mut ds = controls.ds0;

    let termination = loop {
        if points.len() >= controls.max_points {
            break Termination::PointCap;
        }
        let last = points.last().expect("branch has a start point");
        let Some((u, p, iters, rnorm)) = palc.correct(&last.u, last.p, &tangent, ds) else {
            ds *= 0.5;
            if ds < controls.ds_min {
                break Termination::StepFailure { ds };
            }
            continue;
        };
        let next_tangent = match palc.tangent(&u, p, &tangent) {
            Ok(t) => t,
            Err(_) => {
                ds *= 0.5;
                if ds < controls.ds_min {
                    break Termination::StepFailure { ds };
                }
                continue;
            }
        };
        if next_tangent.p.signum() != tangent.p.signum() && tangent.p != 0.0 {
            let (fp, fs) = palc
                .locate_fold(last, &tangent, ds, next_tangent.p)
                .unwrap_or_else(|| {
                    let w = last.tangent_p / (last.tangent_p - next_tangent.p);
                    (last.p + w * (p - last.p), w * ds)
                });
            folds.push(Fold {
                p: fp,
                s: last.s + fs,
                after: points.len() - 1,
            });
        }
        let s = last.s + ds;
        points.push(ContinuationPoint {
            p,
            s,
            u,
            tangent_u: next_tangent.u.clone(),
            tangent_p: next_tangent.p,
            residual_norm: rnorm,
            corrector_iterations: iters,
        });
        tangent = next_tangent;
        if p < controls.param_min || p > controls.param_max {
            break Termination::ParameterExit;
        }
        if folds.len() >= controls.max_folds {
            break Termination::FoldCountCap;
        }
        if iters <= controls.fast_iterations {
            ds = (ds * controls.growth).min(controls.ds_max);
        }
    };
    Ok(ContinuationBranch {
        points,
        folds,
        termination,
    })
}
