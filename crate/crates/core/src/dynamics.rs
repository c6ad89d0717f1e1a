//! Forward-Euler time stepping of the coupled system
//!
//! ```text
//! v_t = T v + v²w - Bv,     T = d_v 𝓛  or  (d_v/2) Δ
//! w_t = d_w Δw - v²w - w + A
//! ```
//!
//! with `w = 0` at both ends (and `v = 0` there for the local model).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::solve_water_stationary;
use crate::linalg::norm_inf;
use crate::model::Model;

/// Entries above this magnitude abort the run.
const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
    pub step_count: usize,
}

impl State {
    pub fn new(v: Vec<f64>, w: Vec<f64>) -> Self {
        assert_eq!(v.len(), w.len());
        State {
            v,
            w,
            t: 0.0,
            step_count: 0,
        }
    }

    /// `v = 0` with the stationary water profile `W₀ = W(0)`.
    pub fn desert(model: &Model) -> Result<Self> {
        let n = model.n_nodes();
        let v = vec![0.0; n];
        let w = solve_water_stationary(&v, &model.params, model.grid())?;
        Ok(State::new(v, w))
    }

    /// Cosine-perturbed upper equilibrium, see [`Model::cosine_perturbed_state`].
    pub fn perturbed_equilibrium(model: &Model, amplitude: f64) -> Result<Self> {
        let (v, w) = model.cosine_perturbed_state(amplitude)?;
        Ok(State::new(v, w))
    }
}

/// Norm used for the steady-state test on consecutive iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepNorm {
    /// Plain `‖u^{n+1} - u^n‖₂` over the concatenated `(v, w)` nodes.
    #[default]
    Raw,
    /// `‖u^{n+1} - u^n‖₂ / (h_t √(2N))`, the RMS time derivative.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    pub h_t: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub norm: StepNorm,
    /// Record a trajectory sample every this many steps.
    pub trajectory_every: Option<usize>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            h_t: 1e-4,
            tol: 1e-5,
            max_steps: 2_000_000,
            norm: StepNorm::Raw,
            trajectory_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub avg_v: f64,
    pub max_w: f64,
}

impl TrajectorySample {
    fn of(state: &State, model: &Model) -> Self {
        let (min_v, max_v) = min_max(&state.v);
        TrajectorySample {
            t: state.t,
            min_v,
            max_v,
            avg_v: model.grid().integral_mean(&state.v),
            max_w: state.w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Extremes seen over a run and counts of steps breaking the a-priori bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub min_v: f64,
    pub max_v: f64,
    pub max_w: f64,
    /// `B / max(‖w₀‖∞, A)`; biomass starting below it must stay below it.
    pub invariant_bound: f64,
    pub started_in_invariant_region: bool,
    pub negativity_violations: usize,
    pub invariant_violations: usize,
    pub water_bound_violations: usize,
}

#[derive(Debug, Clone)]
pub struct SteadyResult {
    pub state: State,
    pub converged: bool,
    pub steps: usize,
    pub last_step_delta: f64,
    pub norm: StepNorm,
    pub summary: RunSummary,
    pub trajectory: Vec<TrajectorySample>,
}

/// Forward-Euler integrator with reusable scratch buffers.
pub struct Stepper<'a> {
    model: &'a Model,
    h_t: f64,
    transport: Vec<f64>,
    diffusion: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a Model, h_t: f64) -> Result<Self> {
        model.check_time_step(h_t)?;
        let n = model.n_nodes();
        Ok(Stepper {
            model,
            h_t,
            transport: vec![0.0; n],
            diffusion: vec![0.0; n],
        })
    }

    /// Advances `state` by one step and returns `‖u^{n+1} - u^n‖₂²`.
    pub fn step(&mut self, state: &mut State) -> Result<f64> {
        let m = self.model;
        let p = &m.params;
        let h_t = self.h_t;
        m.apply_transport(&state.v, &mut self.transport);
        m.laplacian().apply(&state.w, &mut self.diffusion);

        let last = state.v.len() - 1;
        let pinned_v = m.vegetation_pinned();
        let mut diff2 = 0.0;
        for i in 0..=last {
            let boundary = i == 0 || i == last;
            let v = state.v[i];
            let w = state.w[i];
            let vvw = v * v * w;
            let dv = if boundary && pinned_v {
                0.0
            } else {
                h_t * (self.transport[i] + vvw - p.b * v)
            };
            let dw = if boundary {
                0.0
            } else {
                h_t * (p.d_w * self.diffusion[i] - vvw - w + p.a)
            };
            let (nv, nw) = (v + dv, w + dw);
            if !(nv.abs() <= BLOWUP_LIMIT && nw.abs() <= BLOWUP_LIMIT) {
                let value = if nv.abs() <= BLOWUP_LIMIT { nw } else { nv };
                return Err(Error::Blowup {
                    step: state.step_count + 1,
                    node: i,
                    value,
                });
            }
            state.v[i] = nv;
            state.w[i] = nw;
            diff2 += dv * dv + dw * dw;
        }
        state.step_count += 1;
        state.t = state.step_count as f64 * h_t;
        Ok(diff2)
    }
}

/// One explicit step, `v ← v + h_t (T v + v²w - Bv)`, `w ← w + h_t (d_w Δw - v²w - w + A)`.
pub fn euler_step(state: &State, model: &Model, h_t: f64) -> Result<State> {
    let mut next = state.clone();
    Stepper::new(model, h_t)?.step(&mut next)?;
    Ok(next)
}

/// Steps until the change between consecutive iterates drops below `tol` or
/// `max_steps` is reached. Non-convergence is reported through
/// [`SteadyResult::converged`], not as an error.
pub fn run_to_steady(initial: State, model: &Model, opts: &SteadyOptions) -> Result<SteadyResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut stepper = Stepper::new(model, opts.h_t)?;
    let mut state = initial;
    let n = state.v.len();
    let scale = match opts.norm {
        StepNorm::Raw => 1.0,
        StepNorm::Normalized => 1.0 / (opts.h_t * ((2 * n) as f64).sqrt()),
    };

    let p = &model.params;
    let r1 = norm_inf(&state.w).max(p.a);
    let invariant_bound = p.b / r1;
    let started_inside = state.v.iter().all(|&v| (0.0..=invariant_bound).contains(&v));
    let neg_floor = -10.0 * f64::EPSILON * norm_inf(&state.v).max(1.0);
    let (min_v, max_v) = min_max(&state.v);
    let mut summary = RunSummary {
        min_v,
        max_v,
        max_w: state.w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        invariant_bound,
        started_in_invariant_region: started_inside,
        negativity_violations: 0,
        invariant_violations: 0,
        water_bound_violations: 0,
    };

    let mut trajectory = Vec::new();
    if opts.trajectory_every.is_some() {
        trajectory.push(TrajectorySample::of(&state, model));
    }
    let mut delta = f64::INFINITY;
    let mut converged = false;
    let start = state.step_count;
    while state.step_count - start < opts.max_steps {
        delta = stepper.step(&mut state)?.sqrt() * scale;

        let (lo, hi) = min_max(&state.v);
        let w_hi = state.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.min_v = summary.min_v.min(lo);
        summary.max_v = summary.max_v.max(hi);
        summary.max_w = summary.max_w.max(w_hi);
        if lo < neg_floor || state.w.iter().any(|&w| w < neg_floor) {
            summary.negativity_violations += 1;
        }
        if started_inside && hi > invariant_bound + 1e-8 {
            summary.invariant_violations += 1;
        }
        if w_hi > r1 + 1e-8 {
            summary.water_bound_violations += 1;
        }
        if let Some(every) = opts.trajectory_every {
            if (state.step_count - start).is_multiple_of(every.max(1)) {
                trajectory.push(TrajectorySample::of(&state, model));
            }
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(SteadyResult {
        steps: state.step_count - start,
        state,
        converged,
        last_step_delta: delta,
        norm: opts.norm,
        summary,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySample {
    pub t: f64,
    pub max_v: f64,
    pub envelope: f64,
    /// `‖w - W₀‖∞`.
    pub water_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub threshold: f64,
    pub samples: Vec<DecaySample>,
    pub final_max_v: f64,
    pub final_water_gap: f64,
    /// Whether the sampled maximum biomass never increased.
    pub monotone: bool,
}

/// Simulates from uniform biomass `v0_level` (water at `A` inside `Ω`) and
/// checks the maximum biomass against the logistic-type envelope
///
/// ```text
/// ν(t) ≤ B ν₀ / (M ν₀ + (B - M ν₀) e^{Bt}),   M = max(ν₀, A),
/// ```
///
/// valid for `ν₀ ≤ B / M`. Also tracks the water's approach to the desert
/// profile `W₀`.
pub fn extinction_decay_check(
    model: &Model,
    v0_level: f64,
    t_end: f64,
    h_t: f64,
    sample_dt: f64,
) -> Result<DecayReport> {
    let p = &model.params;
    let m = v0_level.max(p.a);
    let threshold = p.b / m;
    if !(0.0..=threshold).contains(&v0_level) {
        return Err(Error::InvalidParameter(format!(
            "initial biomass {v0_level} outside [0, B/M] = [0, {threshold}]"
        )));
    }
    let n = model.n_nodes();
    let mut v = vec![v0_level; n];
    let mut w = vec![p.a; n];
    model.pin_boundary(&mut v, &mut w);
    let desert = solve_water_stationary(&vec![0.0; n], p, model.grid())?;

    let envelope = |t: f64| {
        if v0_level == 0.0 {
            0.0
        } else {
            p.b * v0_level / (m * v0_level + (p.b - m * v0_level) * (p.b * t).exp())
        }
    };
    let sample = |s: &State| DecaySample {
        t: s.t,
        max_v: s.v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        envelope: envelope(s.t),
        water_gap: s
            .w
            .iter()
            .zip(&desert)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())),
    };

    let mut stepper = Stepper::new(model, h_t)?;
    let mut state = State::new(v, w);
    let every = ((sample_dt / h_t).round() as usize).max(1);
    let total = (t_end / h_t).round() as usize;
    let mut samples = vec![sample(&state)];
    for k in 1..=total {
        stepper.step(&mut state)?;
        let hi = state.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = hi - envelope(state.t);
        if margin > 1e-8 {
            return Err(Error::EnvelopeViolated { t: state.t, margin });
        }
        if k % every == 0 || k == total {
            samples.push(sample(&state));
        }
    }
    let monotone = samples.windows(2).all(|s| s[1].max_v <= s[0].max_v);
    let last = *samples.last().expect("at least the initial sample");
    Ok(DecayReport {
        threshold,
        final_max_v: last.max_v,
        final_water_gap: last.water_gap,
        samples,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `ln ‖v - V‖₂` against `t`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(t, ‖v - V‖₂)` samples.
    pub samples: Vec<(f64, f64)>,
    /// `‖v - V‖∞` at the end of the run.
    pub final_distance: f64,
}

/// Perturbs a stationary state by `v = V (1 + ε cos(πx/2L))`, integrates for
/// `t_end`, and fits an exponential to the `L²` distance from `V`.
pub fn perturbation_decay(
    model: &Model,
    v_star: &[f64],
    w_star: &[f64],
    amplitude: f64,
    t_end: f64,
    h_t: f64,
    sample_dt: f64,
) -> Result<DecayFit> {
    let l = model.grid().half_width();
    let k = std::f64::consts::PI / (2.0 * l);
    let v: Vec<f64> = v_star
        .iter()
        .zip(model.grid().nodes())
        .map(|(v, x)| v * (1.0 + amplitude * (k * x).cos()))
        .collect();
    let mut state = State::new(v, w_star.to_vec());
    let mut stepper = Stepper::new(model, h_t)?;
    let distance = |s: &State| {
        let d: Vec<f64> = s.v.iter().zip(v_star).map(|(a, b)| a - b).collect();
        model.grid().l2_norm(&d)
    };
    let every = ((sample_dt / h_t).round() as usize).max(1);
    let total = (t_end / h_t).round() as usize;
    let mut samples = vec![(0.0, distance(&state))];
    for step in 1..=total {
        stepper.step(&mut state)?;
        if step % every == 0 {
            samples.push((state.t, distance(&state)));
        }
    }
    let final_distance = state
        .v
        .iter()
        .zip(v_star)
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, d)| *d > 1e-13)
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    let (slope, intercept, r_squared) = linear_fit(&usable);
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        samples,
        final_distance,
    })
}

fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    if points.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}
