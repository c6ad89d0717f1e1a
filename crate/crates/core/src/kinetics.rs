//! Reaction terms of the vegetation-water system, its spatially constant
//! equilibria, and the stationary water profile `W(v)` for a given biomass.

use serde::{Deserialize, Serialize};

use crate::discretization::{solve_tridiagonal, Grid1D};
use crate::error::{Error, Result};
use crate::kernels::KernelFamily;

/// How vegetation spreads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "kernel")]
pub enum ModelVariant {
    /// Integral dispersal `d_v 𝓛 v` with the given kernel.
    Nonlocal(KernelFamily),
    /// Diffusion `(d_v / 2) Δ v` with `v = 0` on the boundary.
    Local,
}

impl ModelVariant {
    pub fn label(&self) -> &'static str {
        match self {
            ModelVariant::Local => "local",
            ModelVariant::Nonlocal(_) => "nonlocal",
        }
    }

    pub fn kernel_label(&self) -> &'static str {
        match self {
            ModelVariant::Local => "none",
            ModelVariant::Nonlocal(k) => k.label(),
        }
    }

    /// Compact identifier such as `nonlocal-laplace` or `local`.
    pub fn id(&self) -> String {
        match self {
            ModelVariant::Local => "local".into(),
            ModelVariant::Nonlocal(k) => format!("nonlocal-{}", k.label()),
        }
    }

    /// The three variants compared throughout the experiments.
    pub fn standard_set() -> [ModelVariant; 3] {
        [
            ModelVariant::Nonlocal(KernelFamily::Laplace),
            ModelVariant::Nonlocal(KernelFamily::SuperGaussian),
            ModelVariant::Local,
        ]
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        if s == "local" {
            return Ok(ModelVariant::Local);
        }
        let kernel = s.strip_prefix("nonlocal-").unwrap_or(&s);
        Ok(ModelVariant::Nonlocal(kernel.parse()?))
    }
}

/// Rainfall `A`, mortality `B`, dispersal rate `d_v` and water diffusion `d_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub d_v: f64,
    pub d_w: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, d_v: f64, d_w: f64) -> Result<Self> {
        let p = ModelParams { a, b, d_v, d_w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("A", self.a), ("B", self.b), ("d_v", self.d_v), ("d_w", self.d_w)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_rainfall(self, a: f64) -> Self {
        ModelParams { a, ..self }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            a: 1.8,
            b: 0.45,
            d_v: 2.0,
            d_w: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Desert,
    Lower,
    Upper,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KineticEquilibrium {
    pub v: f64,
    pub w: f64,
    pub kind: EquilibriumKind,
}

impl KineticEquilibrium {
    /// `(v²w - Bv, -v²w - w + A)` at this point.
    pub fn residuals(&self, a: f64, b: f64) -> (f64, f64) {
        let vvw = self.v * self.v * self.w;
        (vvw - b * self.v, -vvw - self.w + a)
    }
}

/// Constant solutions of `0 = v²w - Bv`, `0 = -v²w - w + A`, sorted by `v`.
///
/// The desert state `(0, A)` always exists. For `A > 2B` two vegetated states
/// `v = (A ∓ √(A² - 4B²)) / 2B` join it; at `A = 2B` they merge into `(1, B)`.
pub fn constant_steady_states(a: f64, b: f64) -> Vec<KineticEquilibrium> {
    let mut out = vec![KineticEquilibrium {
        v: 0.0,
        w: a,
        kind: EquilibriumKind::Desert,
    }];
    let disc = a * a - 4.0 * b * b;
    let scale = a * a;
    if disc.abs() <= 4.0 * f64::EPSILON * scale {
        out.push(KineticEquilibrium {
            v: 1.0,
            w: b,
            kind: EquilibriumKind::Merged,
        });
    } else if disc > 0.0 {
        let root = disc.sqrt();
        let upper = (a + root) / (2.0 * b);
        // Lower root via the product v₂v₃ = 1, avoiding cancellation.
        let lower = 2.0 * b / (a + root);
        for (v, kind) in [(lower, EquilibriumKind::Lower), (upper, EquilibriumKind::Upper)] {
            out.push(KineticEquilibrium {
                v,
                w: a / (v * v + 1.0),
                kind,
            });
        }
    }
    out
}

/// The upper vegetated equilibrium, if `A ≥ 2B`.
pub fn upper_equilibrium(a: f64, b: f64) -> Option<KineticEquilibrium> {
    constant_steady_states(a, b)
        .into_iter()
        .rev()
        .find(|e| matches!(e.kind, EquilibriumKind::Upper | EquilibriumKind::Merged))
}

/// Pointwise reaction terms `(v²w - Bv, -v²w - w + A)`.
pub fn reaction_rhs(v: &[f64], w: &[f64], params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    v.iter()
        .zip(w)
        .map(|(&v, &w)| {
            let vvw = v * v * w;
            (vvw - params.b * v, -vvw - w + params.a)
        })
        .unzip()
}

/// Solves `d_w ΔW - (v² + 1) W + A = 0` with `W = 0` at both end nodes.
///
/// The system is strictly diagonally dominant, so the result satisfies
/// `0 ≤ W ≤ A`.
pub fn solve_water_stationary(v: &[f64], params: &ModelParams, grid: &Grid1D) -> Result<Vec<f64>> {
    let n = grid.len();
    if v.len() != n {
        return Err(Error::InvalidParameter(format!(
            "biomass has {} entries, grid has {n}",
            v.len()
        )));
    }
    if let Some(i) = v.iter().position(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "biomass must be non-negative, got {} at node {i}",
            v[i]
        )));
    }
    let h = grid.spacing();
    let off = -params.d_w / (h * h);
    let m = n - 2;
    let diag: Vec<f64> = v[1..n - 1]
        .iter()
        .map(|vi| -2.0 * off + vi * vi + 1.0)
        .collect();
    let band = vec![off; m - 1];
    let rhs = vec![params.a; m];
    let interior = solve_tridiagonal(&band, &diag, &band, &rhs)
        .map_err(|e| match e {
            Error::SingularSystem { row } => Error::SingularSystem { row: row + 1 },
            other => other,
        })?;
    let mut w = Vec::with_capacity(n);
    w.push(0.0);
    w.extend(interior);
    w.push(0.0);
    debug_assert!(w.iter().all(|&x| (-1e-12..=params.a + 1e-10).contains(&x)));
    Ok(w)
}

/// `f(v) = v² W(v) - Bv`, the vegetation growth once water is slaved to `v`.
pub fn scalar_f(v: &[f64], params: &ModelParams, grid: &Grid1D) -> Result<Vec<f64>> {
    let w = solve_water_stationary(v, params, grid)?;
    Ok(v.iter()
        .zip(&w)
        .map(|(&v, &w)| v * v * w - params.b * v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cubic(a: f64, b: f64, v: f64) -> f64 {
        -b * v.powi(3) + a * v * v - b * v
    }

    #[test]
    fn three_equilibria_above_threshold() {
        let eq = constant_steady_states(1.8, 0.45);
        assert_eq!(eq.len(), 3);
        assert_eq!(eq[0].v, 0.0);
        assert_eq!(eq[0].w, 1.8);
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(eq[1].v, 2.0 - s3, epsilon = 1e-14);
        assert_abs_diff_eq!(eq[2].v, 2.0 + s3, epsilon = 1e-14);
        assert_abs_diff_eq!(eq[2].w, 0.120577, epsilon = 1e-6);
        for e in &eq {
            assert!(cubic(1.8, 0.45, e.v).abs() < 1e-12);
            let (r1, r2) = e.residuals(1.8, 0.45);
            assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn merged_at_threshold() {
        let eq = constant_steady_states(0.9, 0.45);
        assert_eq!(eq.len(), 2);
        assert_eq!(eq[1].kind, EquilibriumKind::Merged);
        assert_eq!((eq[1].v, eq[1].w), (1.0, 0.45));
    }

    #[test]
    fn only_desert_below_threshold() {
        let eq = constant_steady_states(0.8, 0.45);
        assert_eq!(eq.len(), 1);
        assert_eq!((eq[0].v, eq[0].w), (0.0, 0.8));
    }

    #[test]
    fn water_formula_matches_quotient_form() {
        // w = A/(v²+1) against w = B/v on the vegetated branch.
        for a in [1.0, 1.8, 3.0, 50.0] {
            for e in &constant_steady_states(a, 0.45)[1..] {
                assert_abs_diff_eq!(e.w, 0.45 / e.v, epsilon = 1e-13 * a);
            }
        }
    }

    #[test]
    fn reaction_vanishes_at_equilibria() {
        let (fv, fw) = reaction_rhs(&[0.0; 3], &[0.0; 3], &ModelParams::default());
        assert_eq!(fv, vec![0.0; 3]);
        assert_eq!(fw, vec![1.8; 3]);

        let e = upper_equilibrium(1.8, 0.45).unwrap();
        let (fv, fw) = reaction_rhs(&[e.v], &[e.w], &ModelParams::default());
        assert!(fv[0].abs() < 1e-12 && fw[0].abs() < 1e-12);

        let p = ModelParams::new(0.9, 0.45, 1.0, 1.0).unwrap();
        let (fv, fw) = reaction_rhs(&[1.0], &[0.45], &p);
        assert!(fv[0].abs() < 1e-15 && fw[0].abs() < 1e-15);
    }

    #[test]
    fn zero_forcing_gives_zero_water() {
        let g = Grid1D::new(5.0, 51).unwrap();
        let p = ModelParams {
            a: 0.0,
            ..ModelParams::default()
        };
        let w = solve_water_stationary(&vec![1.3; 51], &p, &g).unwrap();
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn desert_water_matches_cosh_profile() {
        let p = ModelParams::default();
        let g = Grid1D::new(25.0, 751).unwrap();
        let w = solve_water_stationary(&vec![0.0; 751], &p, &g).unwrap();
        let k = 1.0 / p.d_w.sqrt();
        let exact = |x: f64| p.a * (1.0 - (k * x).cosh() / (k * 25.0).cosh());
        assert_abs_diff_eq!(w[375], exact(0.0), epsilon = 1e-10);
        assert_abs_diff_eq!(w[375], 1.8, epsilon = 1e-10);
    }

    #[test]
    fn rejects_negative_biomass() {
        let g = Grid1D::new(1.0, 5).unwrap();
        let v = [0.0, 1.0, -0.1, 0.0, 0.0];
        assert!(solve_water_stationary(&v, &ModelParams::default(), &g).is_err());
    }

    #[test]
    fn f_vanishes_at_zero() {
        let g = Grid1D::new(3.0, 31).unwrap();
        let f = scalar_f(&vec![0.0; 31], &ModelParams::default(), &g).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn params_must_be_positive() {
        assert!(ModelParams::new(1.8, -0.45, 2.0, 0.1).is_err());
        assert!(ModelParams::new(1.8, 0.45, 0.0, 0.1).is_err());
        assert!(ModelParams::new(f64::NAN, 0.45, 2.0, 0.1).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("local".parse::<ModelVariant>().unwrap(), ModelVariant::Local);
        assert_eq!(
            "nonlocal-laplace".parse::<ModelVariant>().unwrap(),
            ModelVariant::Nonlocal(KernelFamily::Laplace)
        );
        assert_eq!(
            "super-gaussian".parse::<ModelVariant>().unwrap(),
            ModelVariant::Nonlocal(KernelFamily::SuperGaussian)
        );
    }
}
