use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Numerical laboratory for vegetation patches with non-local seed dispersal.
#[derive(Debug, Parser)]
#[command(name = "vegpatch", version)]
pub struct Cli {
    /// TOML file with per-module sections; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "VEGPATCH_OUT")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Compare results against the reference values and exit 4 on mismatch.
    #[arg(long, global = true)]
    pub check: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dispersal kernel diagnostics.
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
    /// Fixed-horizon forward-Euler run with a trajectory log.
    Simulate(SimulateArgs),
    /// Run to steady state and write the final profile.
    Steady(SteadyArgs),
    /// Critical patch-size sweep over L.
    Sweep(SweepArgs),
    /// Bifurcation branches in the rainfall A.
    Bifurcate(BifurcateArgs),
    /// Principal eigenvalues of the dispersal operator and the Laplacian.
    Spectral(SpectralArgs),
}

#[derive(Debug, Subcommand)]
pub enum KernelsAction {
    /// Moments and assumption checks for one kernel.
    Check(KernelsCheckArgs),
}

#[derive(Debug, Args)]
pub struct KernelsCheckArgs {
    #[arg(long)]
    pub family: Option<String>,
    /// Two-column `z value` table for a custom kernel.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub quad_tol: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ParamArgs {
    #[arg(long = "A", allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long = "B", allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dv: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct DomainArgs {
    /// `local`, `laplace` or `super-gaussian`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "L")]
    pub half_width: Option<f64>,
    #[arg(long = "N")]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub dw: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub ht: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub ht: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Divide the step difference by `h_t √(2N)`.
    #[arg(long)]
    pub normalized: bool,
    /// Newton-polish the final state.
    #[arg(long)]
    pub polish: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub dw: Option<f64>,
    #[arg(long)]
    pub l_min: Option<f64>,
    #[arg(long)]
    pub l_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Repeatable; defaults to all three models.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_nodes: Option<usize>,
    #[arg(long)]
    pub nodes_per_unit: Option<f64>,
    #[arg(long)]
    pub ht: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Args)]
pub struct BifurcateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Repeatable; defaults to 0.1 and 80.
    #[arg(long = "dw")]
    pub d_w: Vec<f64>,
    #[arg(long = "L")]
    pub half_width: Option<f64>,
    #[arg(long = "N")]
    pub nodes: Option<usize>,
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long)]
    pub a_start: Option<f64>,
    #[arg(long)]
    pub ds0: Option<f64>,
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Repeatable rainfall values for the upper-branch profile gallery.
    #[arg(long = "gallery-A")]
    pub gallery_a: Vec<f64>,
    #[arg(long)]
    pub no_stability: bool,
    /// Skip writing one profile file per branch point.
    #[arg(long)]
    pub no_snapshots: bool,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long)]
    pub dw: Option<f64>,
    /// Biomass range for the Lipschitz estimate (default: upper equilibrium).
    #[arg(long)]
    pub v_range: Option<f64>,
    /// Repeatable half-widths.
    #[arg(long = "L")]
    pub half_widths: Vec<f64>,
    /// Repeatable; defaults to both built-in kernels.
    #[arg(long = "kernel")]
    pub kernels: Vec<String>,
    #[arg(long)]
    pub min_nodes: Option<usize>,
    #[arg(long)]
    pub nodes_per_unit: Option<f64>,
}
