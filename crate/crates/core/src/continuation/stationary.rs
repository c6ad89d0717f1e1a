//! The stationary coupled system as a continuation problem in the rainfall
//! `A`, plus branch bookkeeping and a linear-stability flag.

use nalgebra::{DMatrix, Schur};
use rayon::prelude::*;
use serde::Serialize;

use super::{palc_continue, ContinuationProblem, Fold, PalcControls, Termination};
use crate::error::Result;
use crate::kinetics::solve_water_stationary;
use crate::linalg::norm2;
use crate::model::{Model, Transport};

/// Unknowns are the free biomass values (every node for the non-local
/// model, interior nodes for the local one) followed by the interior water
/// values.
#[derive(Debug, Clone)]
pub struct StationaryProblem {
    model: Model,
    v_free: Vec<usize>,
    w_free: Vec<usize>,
}

impl StationaryProblem {
    /// The rainfall stored in `model.params` is ignored; `A` is the
    /// continuation parameter.
    pub fn new(model: Model) -> Self {
        let n = model.n_nodes();
        let v_free = if model.vegetation_pinned() {
            (1..n - 1).collect()
        } else {
            (0..n).collect()
        };
        StationaryProblem {
            model,
            v_free,
            w_free: (1..n - 1).collect(),
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn pack(&self, v: &[f64], w: &[f64]) -> Vec<f64> {
        self.v_free
            .iter()
            .map(|&i| v[i])
            .chain(self.w_free.iter().map(|&i| w[i]))
            .collect()
    }

    /// Full node vectors `(v, w)` with the Dirichlet entries zeroed.
    pub fn unpack(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.model.n_nodes();
        let (mut v, mut w) = (vec![0.0; n], vec![0.0; n]);
        let nv = self.v_free.len();
        for (k, &i) in self.v_free.iter().enumerate() {
            v[i] = u[k];
        }
        for (k, &i) in self.w_free.iter().enumerate() {
            w[i] = u[nv + k];
        }
        (v, w)
    }

    /// `v = 0` with the stationary water profile at rainfall `a`.
    pub fn desert_guess(&self, a: f64) -> Result<Vec<f64>> {
        let n = self.model.n_nodes();
        let v = vec![0.0; n];
        let w = solve_water_stationary(&v, &self.model.params.with_rainfall(a), self.model.grid())?;
        Ok(self.pack(&v, &w))
    }

    /// Cosine-perturbed upper kinetic equilibrium at rainfall `a`.
    pub fn perturbed_guess(&self, a: f64, amplitude: f64) -> Result<Vec<f64>> {
        let mut model = self.model.clone();
        model.params = model.params.with_rainfall(a);
        let (v, w) = model.cosine_perturbed_state(amplitude)?;
        Ok(self.pack(&v, &w))
    }

    /// Position of node `i` among the free biomass unknowns.
    fn v_slot(&self, i: usize) -> Option<usize> {
        if self.model.vegetation_pinned() {
            (1..self.model.n_nodes() - 1).contains(&i).then(|| i - 1)
        } else {
            Some(i)
        }
    }

    /// Analytic Jacobian–vector product.
    pub fn jacobian_apply(&self, u: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
        let j = self.jacobian(u, a);
        (&j * nalgebra::DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }
}

impl ContinuationProblem for StationaryProblem {
    fn dim(&self) -> usize {
        self.v_free.len() + self.w_free.len()
    }

    fn residual(&self, u: &[f64], a: f64) -> Vec<f64> {
        let p = &self.model.params;
        let (v, w) = self.unpack(u);
        let n = v.len();
        let mut tv = vec![0.0; n];
        self.model.apply_transport(&v, &mut tv);
        let lw = self.model.laplacian().apply_vec(&w);
        let rv = self
            .v_free
            .iter()
            .map(|&i| tv[i] + v[i] * v[i] * w[i] - p.b * v[i]);
        let rw = self
            .w_free
            .iter()
            .map(|&i| p.d_w * lw[i] - v[i] * v[i] * w[i] - w[i] + a);
        rv.chain(rw).collect()
    }

    fn jacobian(&self, u: &[f64], _a: f64) -> DMatrix<f64> {
        let p = &self.model.params;
        let (v, w) = self.unpack(u);
        let nv = self.v_free.len();
        let dim = self.dim();
        let inv_h2 = self.model.laplacian().stencil_weight();
        let rate = self.model.transport_rate();
        let mut j = DMatrix::zeros(dim, dim);

        // Transport block.
        match self.model.transport() {
            Transport::Nonlocal(op) => {
                for (r, &i) in self.v_free.iter().enumerate() {
                    for (c, &k) in self.v_free.iter().enumerate() {
                        let mut e = op.entry(i, k);
                        if i == k {
                            e -= 1.0;
                        }
                        j[(r, c)] = rate * e;
                    }
                }
            }
            Transport::Local(_) => {
                for r in 0..nv {
                    j[(r, r)] = -2.0 * rate * inv_h2;
                    if r > 0 {
                        j[(r, r - 1)] = rate * inv_h2;
                    }
                    if r + 1 < nv {
                        j[(r, r + 1)] = rate * inv_h2;
                    }
                }
            }
        }
        for (r, &i) in self.v_free.iter().enumerate() {
            j[(r, r)] += 2.0 * v[i] * w[i] - p.b;
        }
        // w enters the v equation only where w is free.
        for (c, &i) in self.w_free.iter().enumerate() {
            if let Some(r) = self.v_slot(i) {
                j[(r, nv + c)] = v[i] * v[i];
            }
        }
        let m = self.w_free.len();
        for (r, &i) in self.w_free.iter().enumerate() {
            let row = nv + r;
            if let Some(c) = self.v_slot(i) {
                j[(row, c)] = -2.0 * v[i] * w[i];
            }
            j[(row, row)] = -2.0 * p.d_w * inv_h2 - v[i] * v[i] - 1.0;
            if r > 0 {
                j[(row, row - 1)] = p.d_w * inv_h2;
            }
            if r + 1 < m {
                j[(row, row + 1)] = p.d_w * inv_h2;
            }
        }
        j
    }

    fn param_derivative(&self, _u: &[f64], _a: f64) -> Vec<f64> {
        let nv = self.v_free.len();
        let mut d = vec![0.0; self.dim()];
        for x in &mut d[nv..] {
            *x = 1.0;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Unknown,
}

impl Stability {
    pub fn label(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Unknown => "unknown",
        }
    }
}

/// Sign of the rightmost eigenvalue of the Jacobian at `(u, a)`, computed
/// from a real Schur decomposition. Stable iff its real part is below
/// `-1e-8`.
pub fn stability_flag(problem: &StationaryProblem, u: &[f64], a: f64) -> (Stability, f64) {
    let j = problem.jacobian(u, a);
    let Some(schur) = Schur::try_new(j, f64::EPSILON, 10_000) else {
        return (Stability::Unknown, f64::NAN);
    };
    let rightmost = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !rightmost.is_finite() {
        (Stability::Unknown, rightmost)
    } else if rightmost < -1e-8 {
        (Stability::Stable, rightmost)
    } else {
        (Stability::Unstable, rightmost)
    }
}

/// Outermost free biomass value over the profile maximum; zero for a
/// desert profile.
pub fn boundary_ratio(v: &[f64], vegetation_pinned: bool) -> f64 {
    let n = v.len();
    let (first, last) = if vegetation_pinned { (1, n - 2) } else { (0, n - 1) };
    let peak = v.iter().copied().fold(0.0, f64::max);
    if peak <= 1e-12 {
        return 0.0;
    }
    v[first].max(v[last]) / peak
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub a: f64,
    pub arclength: f64,
    pub snapshot: usize,
    pub max_v: f64,
    /// Trapezoid mean `(1/2L) ∫ v`.
    pub avg_v: f64,
    /// Arithmetic mean over nodes.
    pub mean_v: f64,
    pub stable: Stability,
    pub rightmost_eigenvalue: f64,
    /// `‖R‖₂` re-evaluated on the stored snapshot.
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Full `(v, w)` node vectors indexed by `BranchPoint::snapshot`.
    pub snapshots: Vec<(Vec<f64>, Vec<f64>)>,
    pub folds: Vec<Fold>,
    pub termination: Termination,
}

impl Branch {
    /// Traces a branch from `guess` at `a_start`. Stability flags are
    /// computed afterwards, in parallel over points, when `with_stability`
    /// is set.
    pub fn trace(
        problem: &StationaryProblem,
        a_start: f64,
        guess: &[f64],
        controls: &PalcControls,
        with_stability: bool,
    ) -> Result<Branch> {
        let raw = palc_continue(problem, a_start, guess, controls)?;
        let grid = problem.model().grid();
        let flags: Vec<(Stability, f64)> = if with_stability {
            raw.points
                .par_iter()
                .map(|pt| stability_flag(problem, &pt.u, pt.p))
                .collect()
        } else {
            vec![(Stability::Unknown, f64::NAN); raw.points.len()]
        };
        let mut points = Vec::with_capacity(raw.points.len());
        let mut snapshots = Vec::with_capacity(raw.points.len());
        for (k, (pt, (stable, rightmost))) in raw.points.iter().zip(flags).enumerate() {
            let (v, w) = problem.unpack(&pt.u);
            points.push(BranchPoint {
                a: pt.p,
                arclength: pt.s,
                snapshot: k,
                max_v: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                avg_v: grid.integral_mean(&v),
                mean_v: v.iter().sum::<f64>() / v.len() as f64,
                stable,
                rightmost_eigenvalue: rightmost,
                residual_norm: norm2(&problem.residual(&pt.u, pt.p)),
            });
            snapshots.push((v, w));
        }
        Ok(Branch {
            points,
            snapshots,
            folds: raw.folds,
            termination: raw.termination,
        })
    }

    /// Point nearest to rainfall `a` on the highest-biomass segment of the
    /// branch that crosses `a`.
    pub fn upper_point_near(&self, a: f64) -> Option<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0].a - a) * (w[1].a - a) <= 0.0)
            .max_by(|(_, x), (_, y)| {
                let mx = x[0].max_v.max(x[1].max_v);
                let my = y[0].max_v.max(y[1].max_v);
                mx.total_cmp(&my)
            })
            .map(|(i, w)| {
                if (w[0].a - a).abs() <= (w[1].a - a).abs() {
                    i
                } else {
                    i + 1
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::newton_solve;
    use crate::discretization::Grid1D;
    use crate::kernels::KernelFamily;
    use crate::kinetics::{upper_equilibrium, ModelParams, ModelVariant};

    fn problem(variant: ModelVariant, l: f64, n: usize) -> StationaryProblem {
        let grid = Grid1D::new(l, n).unwrap();
        StationaryProblem::new(Model::new(ModelParams::default(), variant, grid).unwrap())
    }

    #[test]
    fn pack_unpack_round_trip() {
        for variant in ModelVariant::standard_set() {
            let pr = problem(variant, 5.0, 11);
            let u: Vec<f64> = (0..pr.dim()).map(|k| k as f64 + 1.0).collect();
            let (v, w) = pr.unpack(&u);
            assert_eq!(pr.pack(&v, &w), u);
            assert_eq!(w[0], 0.0);
        }
    }

    #[test]
    fn dimensions() {
        let pr = problem(ModelVariant::Nonlocal(KernelFamily::Laplace), 25.0, 75);
        assert_eq!(pr.dim(), 148);
        let pr = problem(ModelVariant::Local, 25.0, 75);
        assert_eq!(pr.dim(), 146);
    }

    #[test]
    fn zero_guess_converges_to_desert() {
        let pr = problem(ModelVariant::Nonlocal(KernelFamily::Laplace), 10.0, 41);
        let out = newton_solve(&pr, 1.3, &vec![0.0; pr.dim()], 1e-10, 50).unwrap();
        let (v, w) = pr.unpack(&out.u);
        assert!(v.iter().all(|x| x.abs() < 1e-14));
        let oracle = pr.desert_guess(1.3).unwrap();
        let (_, w0) = pr.unpack(&oracle);
        for (a, b) in w.iter().zip(&w0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn vegetated_newton_at_high_rainfall() {
        let pr = problem(ModelVariant::Nonlocal(KernelFamily::Laplace), 25.0, 75);
        let guess = pr.perturbed_guess(3.0, 0.01).unwrap();
        let out = newton_solve(&pr, 3.0, &guess, 1e-10, 50).unwrap();
        let (v, _) = pr.unpack(&out.u);
        let v3 = upper_equilibrium(3.0, 0.45).unwrap().v;
        let peak = v.iter().copied().fold(0.0, f64::max);
        assert!((peak - v3).abs() < 0.1 * v3, "{peak} vs {v3}");
    }

    #[test]
    fn desert_is_stable_below_threshold() {
        let pr = problem(ModelVariant::Nonlocal(KernelFamily::SuperGaussian), 10.0, 41);
        let u = pr.desert_guess(0.5).unwrap();
        assert_eq!(stability_flag(&pr, &u, 0.5).0, Stability::Stable);
    }

    #[test]
    fn boundary_ratio_cases() {
        assert_eq!(boundary_ratio(&[0.0; 5], false), 0.0);
        assert_eq!(boundary_ratio(&[1.0, 2.0, 4.0, 2.0, 1.0], false), 0.25);
        assert_eq!(boundary_ratio(&[0.0, 2.0, 4.0, 2.0, 0.0], true), 0.5);
    }
}
