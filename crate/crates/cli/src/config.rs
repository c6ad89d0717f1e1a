//! Run configuration: built-in defaults, then the TOML file, then flags.
//!
//! ```toml
//! [model]
//! a = 1.8
//! b = 0.45
//! d_v = 2.0
//! d_w = 0.1
//! variant = "laplace"
//!
//! [grid]
//! half_width = 10.0
//! nodes = 128
//! min_nodes = 128
//! nodes_per_unit = 8.0
//!
//! [dynamics]
//! h_t = 1e-4
//! tol = 1e-5
//! max_steps = 2000000
//! norm = "raw"
//! t_end = 50.0
//! sample_dt = 0.5
//! amplitude = 0.01
//!
//! [continuation]
//! half_width = 25.0
//! d_w = [0.1, 80.0]
//! ds0 = 0.01
//! gallery_a = [1.2]
//!
//! [sweep]
//! l_min = 1.0
//! l_max = 100.0
//! points = 50
//! threshold = 0.1
//!
//! [spectral]
//! l_values = [1.0, 2.0, 4.0]
//! kernels = ["laplace"]
//!
//! [run]
//! out = "runs/fig1"
//! threads = 4
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vegpatch_core::continuation::{Direction, PalcControls};
use vegpatch_core::discretization::Grid1D;
use vegpatch_core::dynamics::{SteadyOptions, StepNorm};
use vegpatch_core::experiments::{log_spaced, BifurcationConfig, GridPolicy, SweepConfig};
use vegpatch_core::kernels::KernelFamily;
use vegpatch_core::kinetics::{upper_equilibrium, ModelParams, ModelVariant};
use vegpatch_core::model::Model;

use crate::args::{Cli, Command, DomainArgs, KernelsAction, ParamArgs};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.into(),
        message: message.into(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub kernels: KernelsSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub d_v: Option<f64>,
    pub d_w: Option<f64>,
    pub variant: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: Option<f64>,
    pub nodes: Option<usize>,
    pub min_nodes: Option<usize>,
    pub nodes_per_unit: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub h_t: Option<f64>,
    pub tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub norm: Option<StepNorm>,
    pub t_end: Option<f64>,
    pub sample_dt: Option<f64>,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    pub half_width: Option<f64>,
    pub nodes: Option<usize>,
    pub d_w: Option<Vec<f64>>,
    pub models: Option<Vec<String>>,
    pub a_start: Option<f64>,
    pub a_min: Option<f64>,
    pub a_max: Option<f64>,
    pub ds0: Option<f64>,
    pub ds_min: Option<f64>,
    pub ds_max: Option<f64>,
    pub max_points: Option<usize>,
    pub max_folds: Option<usize>,
    pub newton_tol: Option<f64>,
    pub stability: Option<bool>,
    pub gallery_a: Option<Vec<f64>>,
    pub gallery_d_w: Option<Vec<f64>>,
    pub snapshots: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub points: Option<usize>,
    pub threshold: Option<f64>,
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub l_values: Option<Vec<f64>>,
    pub kernels: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub family: Option<String>,
    pub table: Option<PathBuf>,
    pub quad_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub job: Job,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub check: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Job {
    KernelsCheck(KernelsJob),
    Simulate(SimulateJob),
    Steady(SteadyJob),
    Sweep(SweepConfig),
    Bifurcate(BifurcateJob),
    Spectral(SpectralJob),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::KernelsCheck(_) => "kernels-check",
            Job::Simulate(_) => "simulate",
            Job::Steady(_) => "steady",
            Job::Sweep(_) => "sweep",
            Job::Bifurcate(_) => "bifurcate",
            Job::Spectral(_) => "spectral",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelsJob {
    pub family: KernelFamily,
    pub table: Option<PathBuf>,
    pub quad_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateJob {
    pub params: ModelParams,
    pub variant: ModelVariant,
    pub half_width: f64,
    pub nodes: usize,
    pub h_t: f64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyJob {
    pub params: ModelParams,
    pub variant: ModelVariant,
    pub half_width: f64,
    pub nodes: usize,
    pub steady: SteadyOptions,
    pub amplitude: f64,
    pub polish: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcateJob {
    pub suite: BifurcationConfig,
    pub snapshots: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralJob {
    pub params: ModelParams,
    /// Upper end of the uniform biomass levels sampled for `M`.
    pub v_range: f64,
    pub kernels: Vec<KernelFamily>,
    pub l_values: Vec<f64>,
    pub grid: GridPolicy,
}

const DEFAULT_OUT: &str = "runs";

fn parse_variant(s: &str, name: &str) -> Result<ModelVariant, ConfigError> {
    s.parse().map_err(|e| field(name, format!("{e}")))
}

fn parse_family(s: &str, name: &str) -> Result<KernelFamily, ConfigError> {
    s.parse().map_err(|e| field(name, format!("{e}")))
}

fn positive(name: &str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(field(name, format!("must be positive, got {value}")))
    }
}

fn resolve_params(file: &FileConfig, flags: &ParamArgs, d_w: Option<f64>) -> Result<ModelParams, ConfigError> {
    let d = ModelParams::default();
    let p = ModelParams {
        a: flags.a.or(file.model.a).unwrap_or(d.a),
        b: flags.b.or(file.model.b).unwrap_or(d.b),
        d_v: flags.dv.or(file.model.d_v).unwrap_or(d.d_v),
        d_w: d_w.or(file.model.d_w).unwrap_or(d.d_w),
    };
    positive("model.a", p.a)?;
    positive("model.b", p.b)?;
    positive("model.d_v", p.d_v)?;
    positive("model.d_w", p.d_w)?;
    Ok(p)
}

fn resolve_steady(file: &FileConfig, ht: Option<f64>, tol: Option<f64>, max_steps: Option<usize>, normalized: bool) -> Result<SteadyOptions, ConfigError> {
    let d = SteadyOptions::default();
    let opts = SteadyOptions {
        h_t: positive("dynamics.h_t", ht.or(file.dynamics.h_t).unwrap_or(d.h_t))?,
        tol: positive("dynamics.tol", tol.or(file.dynamics.tol).unwrap_or(d.tol))?,
        max_steps: max_steps.or(file.dynamics.max_steps).unwrap_or(d.max_steps),
        norm: if normalized {
            StepNorm::Normalized
        } else {
            file.dynamics.norm.unwrap_or(d.norm)
        },
        trajectory_every: None,
    };
    Ok(opts)
}

fn resolve_grid_policy(file: &FileConfig, min_nodes: Option<usize>, per_unit: Option<f64>) -> Result<GridPolicy, ConfigError> {
    let d = GridPolicy::default();
    let g = GridPolicy {
        min_nodes: min_nodes.or(file.grid.min_nodes).unwrap_or(d.min_nodes),
        nodes_per_unit: positive(
            "grid.nodes_per_unit",
            per_unit.or(file.grid.nodes_per_unit).unwrap_or(d.nodes_per_unit),
        )?,
    };
    if g.min_nodes < 3 {
        return Err(field("grid.min_nodes", "need at least 3 nodes"));
    }
    Ok(g)
}

fn resolve_models(flags: &[String], file: Option<&Vec<String>>, name: &str) -> Result<Vec<ModelVariant>, ConfigError> {
    let names: Vec<String> = if !flags.is_empty() {
        flags.to_vec()
    } else if let Some(f) = file {
        f.clone()
    } else {
        return Ok(ModelVariant::standard_set().to_vec());
    };
    names.iter().map(|s| parse_variant(s, name)).collect()
}

/// Single-domain settings shared by `simulate` and `steady`.
fn resolve_domain(file: &FileConfig, flags: &DomainArgs, grid: &GridPolicy) -> Result<(ModelVariant, f64, usize, f64), ConfigError> {
    let variant = match flags.model.as_deref().or(file.model.variant.as_deref()) {
        Some(s) => parse_variant(s, "model.variant")?,
        None => ModelVariant::Nonlocal(KernelFamily::Laplace),
    };
    let l = positive("grid.half_width", flags.half_width.or(file.grid.half_width).unwrap_or(10.0))?;
    let n = flags.nodes.or(file.grid.nodes).unwrap_or_else(|| grid.nodes(l));
    Grid1D::new(l, n).map_err(|e| field("grid.nodes", e.to_string()))?;
    let amp = flags.amplitude.or(file.dynamics.amplitude).unwrap_or(0.01);
    Ok((variant, l, n, amp))
}

/// Rejects time steps that break the explicit-Euler bounds on a grid.
fn check_time_step(params: ModelParams, variant: ModelVariant, l: f64, n: usize, h_t: f64) -> Result<(), ConfigError> {
    let grid = Grid1D::new(l, n).map_err(|e| field("grid", e.to_string()))?;
    let model = Model::new(params, variant, grid).map_err(|e| field("model", e.to_string()))?;
    model
        .check_time_step(h_t)
        .map_err(|e| field("dynamics.h_t", format!("{e} (L={l}, N={n}, {})", variant.id())))
}

/// Resolves defaults, the optional config file and flags into one
/// validated configuration.
pub fn parse_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let file = match &cli.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let threads = cli.threads.or(file.run.threads);
    if threads == Some(0) {
        return Err(field("run.threads", "must be at least 1"));
    }

    let job = match &cli.command {
        Command::Kernels {
            action: KernelsAction::Check(a),
        } => {
            let table = a.table.clone().or(file.kernels.table.clone());
            let family = match a.family.as_deref().or(file.kernels.family.as_deref()) {
                Some(s) => parse_family(s, "kernels.family")?,
                None if table.is_some() => KernelFamily::Custom,
                None => KernelFamily::Laplace,
            };
            if family == KernelFamily::Custom && table.is_none() {
                return Err(field("kernels.table", "a custom kernel needs a table"));
            }
            Job::KernelsCheck(KernelsJob {
                family,
                table,
                quad_tol: positive("kernels.quad_tol", a.quad_tol.or(file.kernels.quad_tol).unwrap_or(1e-10))?,
            })
        }
        Command::Simulate(a) => {
            let params = resolve_params(&file, &a.params, a.domain.dw)?;
            let grid = resolve_grid_policy(&file, None, None)?;
            let (variant, l, n, amplitude) = resolve_domain(&file, &a.domain, &grid)?;
            let h_t = positive("dynamics.h_t", a.ht.or(file.dynamics.h_t).unwrap_or(1e-4))?;
            check_time_step(params, variant, l, n, h_t)?;
            Job::Simulate(SimulateJob {
                params,
                variant,
                half_width: l,
                nodes: n,
                h_t,
                t_end: positive("dynamics.t_end", a.t_end.or(file.dynamics.t_end).unwrap_or(50.0))?,
                sample_dt: positive("dynamics.sample_dt", a.sample_dt.or(file.dynamics.sample_dt).unwrap_or(0.5))?,
                amplitude,
            })
        }
        Command::Steady(a) => {
            let params = resolve_params(&file, &a.params, a.domain.dw)?;
            let grid = resolve_grid_policy(&file, None, None)?;
            let (variant, l, n, amplitude) = resolve_domain(&file, &a.domain, &grid)?;
            let steady = resolve_steady(&file, a.ht, a.tol, a.max_steps, a.normalized)?;
            check_time_step(params, variant, l, n, steady.h_t)?;
            Job::Steady(SteadyJob {
                params,
                variant,
                half_width: l,
                nodes: n,
                steady,
                amplitude,
                polish: a.polish,
            })
        }
        Command::Sweep(a) => {
            let params = resolve_params(&file, &a.params, a.dw)?;
            let grid = resolve_grid_policy(&file, a.min_nodes, a.nodes_per_unit)?;
            let steady = resolve_steady(&file, a.ht, a.tol, a.max_steps, a.normalized)?;
            let l_min = positive("sweep.l_min", a.l_min.or(file.sweep.l_min).unwrap_or(1.0))?;
            let l_max = positive("sweep.l_max", a.l_max.or(file.sweep.l_max).unwrap_or(100.0))?;
            if l_max < l_min {
                return Err(field("sweep.l_max", "must not be below l_min"));
            }
            let points = a.points.or(file.sweep.points).unwrap_or(50);
            if points == 0 {
                return Err(field("sweep.points", "must be at least 1"));
            }
            let variants = resolve_models(&a.models, file.sweep.models.as_ref(), "sweep.models")?;
            let l_values = log_spaced(l_min, l_max, points);
            for &variant in &variants {
                for &l in &l_values {
                    check_time_step(params, variant, l, grid.nodes(l), steady.h_t)?;
                }
            }
            Job::Sweep(SweepConfig {
                params,
                l_values,
                variants,
                grid,
                steady,
                amplitude: file.dynamics.amplitude.unwrap_or(0.01),
                threshold: positive("sweep.threshold", a.threshold.or(file.sweep.threshold).unwrap_or(0.1))?,
            })
        }
        Command::Bifurcate(a) => {
            let params = resolve_params(&file, &a.params, None)?;
            let c = &file.continuation;
            let d = BifurcationConfig::default();
            let dc = PalcControls::default();
            let d_w_values = if !a.d_w.is_empty() {
                a.d_w.clone()
            } else {
                c.d_w.clone().unwrap_or(d.d_w_values.clone())
            };
            for &x in &d_w_values {
                positive("continuation.d_w", x)?;
            }
            let half_width = positive("continuation.half_width", a.half_width.or(c.half_width).unwrap_or(d.half_width))?;
            let nodes = a.nodes.or(c.nodes);
            let controls = PalcControls {
                ds0: positive("continuation.ds0", a.ds0.or(c.ds0).unwrap_or(dc.ds0))?,
                ds_min: positive("continuation.ds_min", c.ds_min.unwrap_or(dc.ds_min))?,
                ds_max: positive("continuation.ds_max", c.ds_max.unwrap_or(dc.ds_max))?,
                max_points: a.max_points.or(c.max_points).unwrap_or(dc.max_points),
                max_folds: c.max_folds.unwrap_or(dc.max_folds),
                newton_tol: positive("continuation.newton_tol", c.newton_tol.unwrap_or(dc.newton_tol))?,
                param_min: c.a_min.unwrap_or(dc.param_min),
                param_max: c.a_max.unwrap_or(dc.param_max),
                direction: Direction::Decreasing,
                ..dc
            };
            if controls.ds_min > controls.ds_max || controls.param_min >= controls.param_max {
                return Err(field("continuation", "inconsistent step or parameter bounds"));
            }
            let suite = BifurcationConfig {
                params,
                half_width,
                nodes,
                d_w_values,
                variants: resolve_models(&a.models, c.models.as_ref(), "continuation.models")?,
                a_start: positive("continuation.a_start", a.a_start.or(c.a_start).unwrap_or(d.a_start))?,
                amplitude: file.dynamics.amplitude.unwrap_or(d.amplitude),
                controls,
                with_stability: !a.no_stability && c.stability.unwrap_or(true),
                gallery_a: if a.gallery_a.is_empty() {
                    c.gallery_a.clone().unwrap_or(d.gallery_a.clone())
                } else {
                    a.gallery_a.clone()
                },
                gallery_d_w: c.gallery_d_w.clone().unwrap_or(d.gallery_d_w.clone()),
            };
            Grid1D::new(half_width, suite.node_count()).map_err(|e| field("continuation.nodes", e.to_string()))?;
            Job::Bifurcate(BifurcateJob {
                suite,
                snapshots: !a.no_snapshots && c.snapshots.unwrap_or(true),
            })
        }
        Command::Spectral(a) => {
            let names: Vec<String> = if !a.kernels.is_empty() {
                a.kernels.clone()
            } else {
                file.spectral
                    .kernels
                    .clone()
                    .unwrap_or_else(|| vec!["laplace".into(), "super-gaussian".into()])
            };
            let kernels = names
                .iter()
                .map(|s| parse_family(s, "spectral.kernels"))
                .collect::<Result<Vec<_>, _>>()?;
            if kernels.contains(&KernelFamily::Custom) {
                return Err(field("spectral.kernels", "only built-in kernels are supported"));
            }
            let l_values = if !a.half_widths.is_empty() {
                a.half_widths.clone()
            } else {
                file.spectral
                    .l_values
                    .clone()
                    .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0])
            };
            for &l in &l_values {
                positive("spectral.l_values", l)?;
            }
            let params = resolve_params(&file, &a.params, a.dw)?;
            let v_range = match a.v_range {
                Some(r) => positive("spectral.v_range", r)?,
                None => upper_equilibrium(params.a, params.b).map_or(1.0, |e| e.v),
            };
            Job::Spectral(SpectralJob {
                params,
                v_range,
                kernels,
                l_values,
                grid: resolve_grid_policy(&file, a.min_nodes, a.nodes_per_unit)?,
            })
        }
    };
    Ok(RunConfig {
        job,
        out,
        threads,
        check: cli.check,
    })
}
