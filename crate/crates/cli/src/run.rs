//! Executes a resolved [`RunConfig`] and writes its artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use thiserror::Error;
use vegpatch_core::discretization::{DispersalOperator, Grid1D, LaplacianOperator, Quadrature};
use vegpatch_core::dynamics::{run_to_steady, State, SteadyOptions};
use vegpatch_core::experiments::{
    biomass_floor_violations, boundary_sharpness, detect_critical_l, run_bifurcation_suite,
    run_patch_sweep, BranchKind,
};
use vegpatch_core::kernels::{Kernel, KernelFamily};
use vegpatch_core::kinetics::ModelVariant;
use vegpatch_core::model::Model;
use vegpatch_core::output::{self, fmt_f64};
use vegpatch_core::spectral::{
    estimate_lipschitz_m, extinction_criterion, principal_eigenvalue_laplacian,
    principal_eigenvalue_nonlocal, ExtinctionCriterion,
};
use vegpatch_core::continuation::{newton_solve, StationaryProblem};

use crate::config::{
    BifurcateJob, ConfigError, Job, KernelsJob, RunConfig, SimulateJob, SpectralJob, SteadyJob,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] vegpatch_core::Error),
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(e) if e.is_numerical() => 3,
            RunError::Core(_) => 2,
            RunError::Output { .. } => 1,
            RunError::Check(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "numerical",
            4 => "check",
            _ => "io",
        }
    }
}

/// Collects written files for the manifest.
struct Sink {
    root: PathBuf,
    files: Vec<String>,
}

impl Sink {
    fn new(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root).map_err(|source| RunError::Output {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Sink {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), RunError> {
        let path = self.root.join(rel);
        let io = |source| RunError::Output {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<(), RunError> {
        self.write(rel, |w| w.write_all(body.as_bytes()))
    }
}

pub struct Outcome {
    pub summary: Value,
    /// Failed `--check` comparisons.
    pub check_failures: Vec<String>,
}

/// Runs the job, writes CSVs and `manifest.json`, and returns a summary.
pub fn dispatch(config: &RunConfig, argv: &[String]) -> Result<Outcome, RunError> {
    let started = Instant::now();
    if let Job::KernelsCheck(job) = &config.job {
        return kernels_check(job, config.check);
    }
    let mut sink = Sink::new(&config.out)?;
    let outcome = match &config.job {
        Job::KernelsCheck(_) => unreachable!("handled above"),
        Job::Simulate(job) => simulate(job, &mut sink)?,
        Job::Steady(job) => steady(job, &mut sink)?,
        Job::Sweep(job) => sweep(job, config.check, &mut sink)?,
        Job::Bifurcate(job) => bifurcate(job, config.check, &mut sink)?,
        Job::Spectral(job) => spectral(job, config.check, &mut sink)?,
    };
    let manifest = json!({
        "tool": "vegpatch",
        "versions": {
            "vegpatch-cli": env!("CARGO_PKG_VERSION"),
            "vegpatch-core": vegpatch_core::VERSION,
        },
        "argv": argv,
        "experiment": config.job.name(),
        "config": config,
        "threads": rayon::current_num_threads(),
        "seeds": [],
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": sink.files,
        "summary": outcome.summary,
        "check_failures": outcome.check_failures,
    });
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    sink.text("manifest.json", &body)?;
    Ok(outcome)
}

fn kernels_check(job: &KernelsJob, check: bool) -> Result<Outcome, RunError> {
    let kernel = match &job.table {
        Some(path) => Kernel::load_table(path)?,
        None => Kernel::builtin(job.family)?,
    };
    let moments = kernel.moments(job.quad_tol)?;
    let report = kernel.check_assumptions();
    println!("kernel {} (cutoff {})", job.family, kernel.support_cutoff());
    println!("{:<6} {:<6} {:>24}", "check", "result", "measure");
    for c in &report.checks {
        println!(
            "{:<6} {:<6} {:>24}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            fmt_f64(c.discrepancy)
        );
    }
    println!(
        "mass {}  second moment {}  fourth moment {}",
        fmt_f64(moments.mass),
        fmt_f64(moments.second_moment),
        fmt_f64(moments.fourth_moment)
    );
    let failures: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} failed", c.name))
        .collect();
    let outcome = Outcome {
        summary: json!({ "moments": moments, "assumptions": report }),
        check_failures: if check { failures } else { Vec::new() },
    };
    Ok(outcome)
}

fn build_model(params: vegpatch_core::kinetics::ModelParams, variant: ModelVariant, l: f64, n: usize) -> Result<Model, RunError> {
    Ok(Model::new(params, variant, Grid1D::new(l, n)?)?)
}

fn simulate(job: &SimulateJob, sink: &mut Sink) -> Result<Outcome, RunError> {
    let model = build_model(job.params, job.variant, job.half_width, job.nodes)?;
    let every = ((job.sample_dt / job.h_t).round() as usize).max(1);
    let opts = SteadyOptions {
        h_t: job.h_t,
        tol: f64::MIN_POSITIVE,
        max_steps: (job.t_end / job.h_t).round() as usize,
        trajectory_every: Some(every),
        ..SteadyOptions::default()
    };
    let res = run_to_steady(State::perturbed_equilibrium(&model, job.amplitude)?, &model, &opts)?;
    sink.write("trajectory.csv", |w| output::write_trajectory_csv(w, &res.trajectory))?;
    sink.write("profile.csv", |w| {
        output::write_profile_csv(w, model.grid().nodes(), &res.state.v, &res.state.w)
    })?;
    Ok(Outcome {
        summary: json!({
            "t": res.state.t,
            "steps": res.steps,
            "avg_v": model.grid().integral_mean(&res.state.v),
            "run": res.summary,
        }),
        check_failures: Vec::new(),
    })
}

fn steady(job: &SteadyJob, sink: &mut Sink) -> Result<Outcome, RunError> {
    let model = build_model(job.params, job.variant, job.half_width, job.nodes)?;
    let res = run_to_steady(State::perturbed_equilibrium(&model, job.amplitude)?, &model, &job.steady)?;
    let (mut v, mut w) = (res.state.v.clone(), res.state.w.clone());
    let mut polish_residual = None;
    if job.polish {
        let problem = StationaryProblem::new(model.clone());
        let out = newton_solve(&problem, job.params.a, &problem.pack(&v, &w), 1e-10, 50)?;
        polish_residual = Some(out.residual_norm);
        (v, w) = problem.unpack(&out.u);
    }
    sink.write("profile.csv", |out| output::write_profile_csv(out, model.grid().nodes(), &v, &w))?;
    Ok(Outcome {
        summary: json!({
            "converged": res.converged,
            "steps": res.steps,
            "last_step_delta": res.last_step_delta,
            "avg_v": model.grid().integral_mean(&v),
            "max_v": v.iter().copied().fold(0.0, f64::max),
            "boundary_ratio": boundary_sharpness(&v, &model),
            "polish_residual": polish_residual,
            "run": res.summary,
        }),
        check_failures: Vec::new(),
    })
}

/// Critical patch sizes for the standard parameter set.
const LCRIT_REFERENCE: [(ModelVariant, f64); 3] = [
    (ModelVariant::Nonlocal(KernelFamily::Laplace), 1.46),
    (ModelVariant::Nonlocal(KernelFamily::SuperGaussian), 1.76),
    (ModelVariant::Local, 2.33),
];

fn sweep(job: &vegpatch_core::experiments::SweepConfig, check: bool, sink: &mut Sink) -> Result<Outcome, RunError> {
    let rows = run_patch_sweep(job)?;
    let crit = detect_critical_l(&rows, job.threshold);
    sink.write("sweep.csv", |w| output::write_sweep_csv(w, &rows))?;
    sink.write("lcrit.csv", |w| output::write_lcrit_csv(w, &crit))?;
    sink.text("sweep.gp", &output::sweep_plot_script(job.threshold))?;
    for c in &crit {
        println!("{:<24} L_crit = {}", c.variant.id(), c.label());
    }
    let mut failures = Vec::new();
    if check {
        let get = |v: ModelVariant| crit.iter().find(|c| c.variant == v).and_then(|c| c.l_crit);
        let mut values = Vec::new();
        for (variant, reference) in LCRIT_REFERENCE {
            match get(variant) {
                Some(l) if (l - reference).abs() <= 0.2 * reference => values.push(l),
                Some(l) => failures.push(format!("{} L_crit {l} not within 20% of {reference}", variant.id())),
                None => failures.push(format!("{} L_crit missing", variant.id())),
            }
        }
        if values.len() == 3 && !(values[0] < values[1] && values[1] < values[2]) {
            failures.push(format!("L_crit ordering violated: {values:?}"));
        }
    }
    Ok(Outcome {
        summary: json!({ "lcrit": crit, "rows": rows.len(), "unconverged": rows.iter().filter(|r| !r.converged).count() }),
        check_failures: failures,
    })
}

fn bifurcate(job: &BifurcateJob, check: bool, sink: &mut Sink) -> Result<Outcome, RunError> {
    let cfg = &job.suite;
    let suite = run_bifurcation_suite(cfg)?;
    sink.write("branch.csv", |w| output::write_branch_csv(w, &suite.runs))?;
    sink.write("folds.csv", |w| output::write_folds_csv(w, &suite.runs))?;
    let mut stems = Vec::new();
    for p in &suite.gallery {
        let stem = output::gallery_stem(p);
        sink.write(&format!("profiles/{stem}.csv"), |w| output::write_profile_csv(w, &p.x, &p.v, &p.w))?;
        stems.push(stem);
    }
    if job.snapshots {
        let grid = Grid1D::new(cfg.half_width, suite.nodes)?;
        for run in &suite.runs {
            let Ok(branch) = &run.outcome else { continue };
            let dir = format!("snapshots/{}_{}", run.variant.id(), run.branch_id());
            for (k, (v, w)) in branch.snapshots.iter().enumerate() {
                sink.write(&format!("{dir}/{k:05}.csv"), |out| {
                    output::write_profile_csv(out, grid.nodes(), v, w)
                })?;
            }
        }
    }
    for &d_w in &cfg.d_w_values {
        sink.text(&format!("branch_dw{d_w}.gp"), &output::branch_plot_script(d_w, cfg.params.b))?;
    }
    if !stems.is_empty() {
        sink.text("profiles.gp", &output::profile_plot_script(&stems))?;
    }

    let mut branches = Vec::new();
    let mut failures = Vec::new();
    for run in &suite.runs {
        match &run.outcome {
            Ok(b) => {
                let folds: Vec<f64> = b.folds.iter().map(|f| f.p).collect();
                println!(
                    "{:<24} {:<16} {:>5} points  {:<15} folds {:?}",
                    run.variant.id(),
                    run.branch_id(),
                    b.points.len(),
                    b.termination.label(),
                    folds
                );
                let violations = biomass_floor_violations(b, cfg.params.b, 0.01);
                if check {
                    if !violations.is_empty() {
                        failures.push(format!("{} {}: {} points below B/A", run.variant.id(), run.branch_id(), violations.len()));
                    }
                    if run.kind == BranchKind::Vegetated && run.d_w == 0.1 {
                        match folds.first() {
                            Some(&a) if (0.85..=1.0).contains(&a) => {}
                            other => failures.push(format!("{} {}: first fold {other:?} outside [0.85, 1.0]", run.variant.id(), run.branch_id())),
                        }
                    }
                }
                branches.push(json!({
                    "model": run.variant.id(),
                    "branch_id": run.branch_id(),
                    "points": b.points.len(),
                    "termination": b.termination,
                    "folds": folds,
                    "floor_violations": violations.len(),
                }));
            }
            Err(e) => {
                println!("{:<24} {:<16} error: {e}", run.variant.id(), run.branch_id());
                if check {
                    failures.push(format!("{} {}: {e}", run.variant.id(), run.branch_id()));
                }
                branches.push(json!({
                    "model": run.variant.id(),
                    "branch_id": run.branch_id(),
                    "error": e.to_string(),
                }));
            }
        }
    }
    if check && cfg.d_w_values.contains(&80.0) {
        let found = suite.runs.iter().any(|r| {
            r.d_w == 80.0
                && matches!(r.variant, ModelVariant::Nonlocal(_))
                && r.outcome
                    .as_ref()
                    .is_ok_and(|b| b.points.iter().any(|p| p.a < 0.9 && p.max_v > 0.1))
        });
        if !found {
            failures.push("no non-local d_w=80 point with A < 0.9 and max_v > 0.1".into());
        }
    }
    Ok(Outcome {
        summary: json!({ "nodes": suite.nodes, "branches": branches, "gallery": stems }),
        check_failures: failures,
    })
}

fn spectral(job: &SpectralJob, check: bool, sink: &mut Sink) -> Result<Outcome, RunError> {
    struct Row {
        family: KernelFamily,
        l: f64,
        n: usize,
        beta1: f64,
        lambda1: f64,
        residual: f64,
        iterations: usize,
        m: f64,
        verdict: ExtinctionCriterion,
    }
    let mut rows = Vec::new();
    for &family in &job.kernels {
        let kernel = Kernel::builtin(family)?;
        for &l in &job.l_values {
            let n = job.grid.nodes(l);
            let grid = Grid1D::new(l, n)?;
            let op = DispersalOperator::assemble(&grid, &kernel, Quadrature::default());
            let e = principal_eigenvalue_nonlocal(&op)?;
            let lambda1 = principal_eigenvalue_laplacian(&LaplacianOperator::new(&grid), 1.0)?;
            let m = estimate_lipschitz_m(&job.params, &grid, job.v_range, 2000)?.m;
            rows.push(Row {
                family,
                l,
                n,
                beta1: e.beta1,
                lambda1,
                residual: e.residual,
                iterations: e.iterations,
                m,
                verdict: extinction_criterion(e.beta1, job.params.d_v, m),
            });
        }
    }
    sink.write("spectral.csv", |w| {
        writeln!(w, "kernel,L,N,beta1,lambda1,residual,iterations,M,extinction_guaranteed,margin")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.family.label(),
                fmt_f64(r.l),
                r.n,
                fmt_f64(r.beta1),
                fmt_f64(r.lambda1),
                fmt_f64(r.residual),
                r.iterations,
                fmt_f64(r.m),
                r.verdict.extinction_guaranteed,
                fmt_f64(r.verdict.margin)
            )?;
        }
        Ok(())
    })?;
    let mut failures = Vec::new();
    if check {
        for &family in &job.kernels {
            let mut series: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.family == family)
                .map(|r| (r.l, r.beta1))
                .collect();
            series.sort_by(|a, b| a.0.total_cmp(&b.0));
            if series.windows(2).any(|w| w[1].1 >= w[0].1) {
                failures.push(format!("beta1 not decreasing in L for {family}"));
            }
        }
    }
    for r in &rows {
        println!(
            "{:<16} L={:<8} beta1={:.10}  lambda1={:.10}  extinction guaranteed: {}",
            r.family.label(),
            r.l,
            r.beta1,
            r.lambda1,
            r.verdict.extinction_guaranteed
        );
    }
    Ok(Outcome {
        summary: json!({ "rows": rows.len(), "lipschitz_v_range": job.v_range }),
        check_failures: failures,
    })
}
