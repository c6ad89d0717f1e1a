//! The critical patch-size sweep over `L` and the bifurcation suite in `A`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{
    boundary_ratio, newton_solve, Branch, ContinuationProblem, PalcControls, StationaryProblem,
};
use crate::discretization::Grid1D;
use crate::dynamics::{run_to_steady, State, SteadyOptions, SteadyResult};
use crate::error::{Error, Result};
use crate::kinetics::{ModelParams, ModelVariant};
use crate::model::Model;

/// `N = max(min_nodes, ⌈nodes_per_unit · L⌉)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub min_nodes: usize,
    pub nodes_per_unit: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            min_nodes: 128,
            nodes_per_unit: 8.0,
        }
    }
}

impl GridPolicy {
    pub fn nodes(&self, l: f64) -> usize {
        self.min_nodes.max((self.nodes_per_unit * l).ceil() as usize)
    }
}

/// `count` points equally spaced in `log10 L` over `[l_min, l_max]`.
pub fn log_spaced(l_min: f64, l_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![l_min];
    }
    let (lo, hi) = (l_min.log10(), l_max.log10());
    (0..count)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub params: ModelParams,
    pub l_values: Vec<f64>,
    pub variants: Vec<ModelVariant>,
    pub grid: GridPolicy,
    pub steady: SteadyOptions,
    /// Relative amplitude of the cosine bump on the initial state.
    pub amplitude: f64,
    pub threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            params: ModelParams::default(),
            l_values: log_spaced(1.0, 100.0, 50),
            variants: ModelVariant::standard_set().to_vec(),
            grid: GridPolicy::default(),
            steady: SteadyOptions::default(),
            amplitude: 0.01,
            threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: ModelVariant,
    pub l: f64,
    pub n: usize,
    /// Trapezoid mean of the final biomass.
    pub avg_biomass: f64,
    pub max_biomass: f64,
    pub steps: usize,
    pub converged: bool,
    pub last_step_delta: f64,
    /// Set when the cell failed before or during integration.
    pub error: Option<String>,
}

fn sweep_cell(config: &SweepConfig, variant: ModelVariant, l: f64) -> SweepRow {
    let n = config.grid.nodes(l);
    let run = || -> Result<SteadyResult> {
        let grid = Grid1D::new(l, n)?;
        let model = Model::new(config.params, variant, grid)?;
        let initial = State::perturbed_equilibrium(&model, config.amplitude)?;
        run_to_steady(initial, &model, &config.steady)
    };
    match run() {
        Ok(res) => {
            let grid = Grid1D::new(l, n).expect("grid was built above");
            SweepRow {
                variant,
                l,
                n,
                avg_biomass: grid.integral_mean(&res.state.v),
                max_biomass: res.state.v.iter().copied().fold(0.0, f64::max),
                steps: res.steps,
                converged: res.converged,
                last_step_delta: res.last_step_delta,
                error: None,
            }
        }
        Err(e) => {
            log::warn!("sweep cell {} L={l}: {e}", variant.id());
            SweepRow {
                variant,
                l,
                n,
                avg_biomass: f64::NAN,
                max_biomass: f64::NAN,
                steps: 0,
                converged: false,
                last_step_delta: f64::NAN,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Integrates every `(variant, L)` cell to steady state. Rows come back
/// ordered by variant (config order) then `L`.
pub fn run_patch_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.params.validate()?;
    if config.l_values.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidParameter("patch half-widths must be positive".into()));
    }
    let cells: Vec<(usize, ModelVariant, f64)> = config
        .variants
        .iter()
        .enumerate()
        .flat_map(|(k, &v)| config.l_values.iter().map(move |&l| (k, v, l)))
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = cells
        .into_par_iter()
        .map(|(k, v, l)| (k, sweep_cell(config, v, l)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.l.total_cmp(&b.1.l)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPatch {
    pub variant: ModelVariant,
    /// `None` when no converged row falls below the threshold.
    pub l_crit: Option<f64>,
    pub threshold: f64,
    pub rule: &'static str,
}

pub const LCRIT_RULE: &str = "largest-converged-L-below-threshold";

impl CriticalPatch {
    pub fn label(&self) -> String {
        match self.l_crit {
            Some(l) => format!("{l}"),
            None => "below-range".into(),
        }
    }
}

/// Per variant (in order of first appearance), the largest converged `L`
/// whose average biomass is below `threshold`.
pub fn detect_critical_l(rows: &[SweepRow], threshold: f64) -> Vec<CriticalPatch> {
    let mut variants: Vec<ModelVariant> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    variants
        .into_iter()
        .map(|variant| {
            let l_crit = rows
                .iter()
                .filter(|r| r.variant == variant && r.converged && r.avg_biomass < threshold)
                .map(|r| r.l)
                .fold(None, |acc: Option<f64>, l| Some(acc.map_or(l, |a| a.max(l))));
            CriticalPatch {
                variant,
                l_crit,
                threshold,
                rule: LCRIT_RULE,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationConfig {
    /// `A` is taken from `a_start`; the other entries are fixed.
    pub params: ModelParams,
    pub half_width: f64,
    /// Defaults to `⌊3L⌋`.
    pub nodes: Option<usize>,
    pub d_w_values: Vec<f64>,
    pub variants: Vec<ModelVariant>,
    pub a_start: f64,
    pub amplitude: f64,
    pub controls: PalcControls,
    pub with_stability: bool,
    /// Rainfall values at which upper-branch profiles are extracted.
    pub gallery_a: Vec<f64>,
    /// `d_w` values for which the gallery is extracted.
    pub gallery_d_w: Vec<f64>,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        BifurcationConfig {
            params: ModelParams::default(),
            half_width: 25.0,
            nodes: None,
            d_w_values: vec![0.1, 80.0],
            variants: ModelVariant::standard_set().to_vec(),
            a_start: 3.0,
            amplitude: 0.01,
            controls: PalcControls::default(),
            with_stability: true,
            gallery_a: vec![0.6, 0.8, 1.0, 1.2, 1.5, 2.0],
            gallery_d_w: vec![80.0],
        }
    }
}

impl BifurcationConfig {
    pub fn node_count(&self) -> usize {
        self.nodes
            .unwrap_or_else(|| (3.0 * self.half_width).floor() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Desert,
    Vegetated,
}

impl BranchKind {
    pub fn label(&self) -> &'static str {
        match self {
            BranchKind::Desert => "desert",
            BranchKind::Vegetated => "vegetated",
        }
    }
}

#[derive(Debug)]
pub struct BranchRun {
    pub variant: ModelVariant,
    pub d_w: f64,
    pub kind: BranchKind,
    pub outcome: Result<Branch>,
}

impl BranchRun {
    pub fn branch_id(&self) -> String {
        format!("{}-dw{}", self.kind.label(), self.d_w)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GalleryProfile {
    pub variant: ModelVariant,
    pub d_w: f64,
    pub a_target: f64,
    /// Rainfall of the stored profile; equals `a_target` once polished.
    pub a: f64,
    pub polished: bool,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug)]
pub struct BifurcationSuite {
    pub nodes: usize,
    pub runs: Vec<BranchRun>,
    pub gallery: Vec<GalleryProfile>,
}

fn trace_one(
    config: &BifurcationConfig,
    variant: ModelVariant,
    d_w: f64,
    kind: BranchKind,
) -> Result<(Branch, StationaryProblem)> {
    let params = ModelParams {
        a: config.a_start,
        d_w,
        ..config.params
    };
    params.validate()?;
    let grid = Grid1D::new(config.half_width, config.node_count())?;
    let problem = StationaryProblem::new(Model::new(params, variant, grid)?);
    let guess = match kind {
        BranchKind::Desert => problem.desert_guess(config.a_start)?,
        BranchKind::Vegetated => problem.perturbed_guess(config.a_start, config.amplitude)?,
    };
    let branch = Branch::trace(
        &problem,
        config.a_start,
        &guess,
        &config.controls,
        config.with_stability,
    )?;
    Ok((branch, problem))
}

/// Upper-branch profile near `a`, Newton-polished onto `a` exactly when
/// the polish converges.
fn gallery_profile(
    problem: &StationaryProblem,
    branch: &Branch,
    variant: ModelVariant,
    d_w: f64,
    a: f64,
    tol: f64,
) -> Option<GalleryProfile> {
    let Some(k) = branch.upper_point_near(a) else {
        log::info!("gallery {} d_w={d_w}: branch never reaches A={a}", variant.id());
        return None;
    };
    let pt = &branch.points[k];
    let (v0, w0) = &branch.snapshots[pt.snapshot];
    let guess = problem.pack(v0, w0);
    let (v, w, at, polished) = match newton_solve(problem, a, &guess, tol, 50) {
        Ok(out) => {
            let (v, w) = problem.unpack(&out.u);
            (v, w, a, true)
        }
        Err(_) => (v0.clone(), w0.clone(), pt.a, false),
    };
    Some(GalleryProfile {
        variant,
        d_w,
        a_target: a,
        a: at,
        polished,
        x: problem.model().grid().nodes().to_vec(),
        v,
        w,
    })
}

/// Desert and vegetated branches for every `(variant, d_w)` pair, traced
/// in parallel. A failing branch is reported in its run and does not stop
/// the others.
pub fn run_bifurcation_suite(config: &BifurcationConfig) -> Result<BifurcationSuite> {
    let nodes = config.node_count();
    Grid1D::new(config.half_width, nodes)?;
    let mut cells = Vec::new();
    for &variant in &config.variants {
        for &d_w in &config.d_w_values {
            for kind in [BranchKind::Desert, BranchKind::Vegetated] {
                cells.push((variant, d_w, kind));
            }
        }
    }
    let traced: Vec<(BranchRun, Vec<GalleryProfile>)> = cells
        .into_par_iter()
        .map(|(variant, d_w, kind)| {
            let result = trace_one(config, variant, d_w, kind);
            let mut gallery = Vec::new();
            let outcome = result.map(|(branch, problem)| {
                let wanted = kind == BranchKind::Vegetated
                    && config.gallery_d_w.contains(&d_w);
                if wanted {
                    gallery = config
                        .gallery_a
                        .iter()
                        .filter_map(|&a| {
                            gallery_profile(
                                &problem,
                                &branch,
                                variant,
                                d_w,
                                a,
                                config.controls.newton_tol,
                            )
                        })
                        .collect();
                }
                branch
            });
            if let Err(e) = &outcome {
                log::warn!("branch {} {} d_w={d_w}: {e}", variant.id(), kind.label());
            }
            (
                BranchRun {
                    variant,
                    d_w,
                    kind,
                    outcome,
                },
                gallery,
            )
        })
        .collect();
    let mut runs = Vec::with_capacity(traced.len());
    let mut gallery = Vec::new();
    for (run, g) in traced {
        runs.push(run);
        gallery.extend(g);
    }
    Ok(BifurcationSuite {
        nodes,
        runs,
        gallery,
    })
}

/// Vegetated steady state of `model`: forward Euler from the
/// cosine-perturbed equilibrium, optionally Newton-polished to `tol`.
pub fn vegetated_steady_state(
    model: &Model,
    opts: &SteadyOptions,
    amplitude: f64,
    polish_tol: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let initial = State::perturbed_equilibrium(model, amplitude)?;
    let res = run_to_steady(initial, model, opts)?;
    let (v, w) = (res.state.v, res.state.w);
    match polish_tol {
        None => Ok((v, w)),
        Some(tol) => {
            let problem = StationaryProblem::new(model.clone());
            let out = newton_solve(&problem, model.params.a, &problem.pack(&v, &w), tol, 50)?;
            Ok(problem.unpack(&out.u))
        }
    }
}

/// Biomass at the outermost free node over the profile maximum.
pub fn boundary_sharpness(v: &[f64], model: &Model) -> f64 {
    boundary_ratio(v, model.vegetation_pinned())
}

/// Maximum violation of `max_v ≥ B/A` over points with `max_v > floor`,
/// as `(A, max_v)` pairs.
pub fn biomass_floor_violations(branch: &Branch, b: f64, floor: f64) -> Vec<(f64, f64)> {
    branch
        .points
        .iter()
        .filter(|p| p.max_v > floor && p.max_v < b / p.a)
        .map(|p| (p.a, p.max_v))
        .collect()
}

/// Residual check used by callers that hold only node vectors.
pub fn stationary_residual_norm(problem: &StationaryProblem, v: &[f64], w: &[f64], a: f64) -> f64 {
    crate::linalg::norm2(&problem.residual(&problem.pack(v, w), a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn row(l: f64, avg: f64, converged: bool) -> SweepRow {
        SweepRow {
            variant: ModelVariant::Local,
            l,
            n: 128,
            avg_biomass: avg,
            max_biomass: avg,
            steps: 1,
            converged,
            last_step_delta: 0.0,
            error: None,
        }
    }

    #[test]
    fn log_grid_endpoints() {
        let l = log_spaced(1.0, 100.0, 50);
        assert_eq!(l.len(), 50);
        assert!((l[0] - 1.0).abs() < 1e-15 && (l[49] - 100.0).abs() < 1e-12);
        let ratio = l[1] / l[0];
        assert!((ratio - 10f64.powf(2.0 / 49.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_policy() {
        let g = GridPolicy::default();
        assert_eq!(g.nodes(1.0), 128);
        assert_eq!(g.nodes(100.0), 800);
    }

    #[test]
    fn critical_l_is_largest_collapse() {
        let rows = vec![
            row(1.0, 0.0, true),
            row(2.0, 0.05, true),
            row(3.0, 3.0, true),
            row(4.0, 0.01, false),
        ];
        let out = detect_critical_l(&rows, 0.1);
        assert_eq!(out[0].l_crit, Some(2.0));
    }

    #[test]
    fn critical_l_sentinel() {
        let rows = vec![row(1.0, 3.0, true), row(2.0, 3.5, true)];
        let out = detect_critical_l(&rows, 0.1);
        assert_eq!(out[0].l_crit, None);
        assert_eq!(out[0].label(), "below-range");
    }

    #[test]
    fn bifurcation_grid_default() {
        assert_eq!(BifurcationConfig::default().node_count(), 75);
    }

    #[test]
    fn small_sweep_cell_runs() {
        let config = SweepConfig {
            l_values: vec![1.0],
            variants: vec![ModelVariant::Nonlocal(KernelFamily::Laplace)],
            grid: GridPolicy {
                min_nodes: 33,
                nodes_per_unit: 8.0,
            },
            ..SweepConfig::default()
        };
        let rows = run_patch_sweep(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].converged);
        assert!(rows[0].avg_biomass >= 0.0);
    }
}
