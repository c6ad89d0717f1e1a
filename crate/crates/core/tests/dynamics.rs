use proptest::prelude::*;
use vegpatch_core::continuation::{newton_solve, stability_flag, ContinuationProblem, Stability, StationaryProblem};
use vegpatch_core::discretization::Grid1D;
use vegpatch_core::dynamics::{
    euler_step, extinction_decay_check, perturbation_decay, run_to_steady, State, SteadyOptions,
};
use vegpatch_core::experiments::{run_bifurcation_suite, BifurcationConfig, BranchKind};
use vegpatch_core::kernels::KernelFamily;
use vegpatch_core::kinetics::{upper_equilibrium, ModelParams, ModelVariant};
use vegpatch_core::model::Model;

const LAPLACE: ModelVariant = ModelVariant::Nonlocal(KernelFamily::Laplace);

fn model(variant: ModelVariant, l: f64, n: usize) -> Model {
    Model::new(ModelParams::default(), variant, Grid1D::new(l, n).unwrap()).unwrap()
}

#[test]
fn wide_patch_settles_near_the_uniform_state() {
    let v3 = upper_equilibrium(1.8, 0.45).unwrap().v;
    for variant in ModelVariant::standard_set() {
        let m = model(variant, 50.0, 400);
        let res = run_to_steady(State::perturbed_equilibrium(&m, 0.01).unwrap(), &m, &SteadyOptions::default()).unwrap();
        assert!(res.converged && res.last_step_delta < 1e-5);
        let avg = m.grid().integral_mean(&res.state.v);
        assert!((avg - v3).abs() / v3 < 0.05, "{}: {avg}", variant.id());
        assert_eq!(res.summary.negativity_violations, 0);
        assert_eq!(res.summary.water_bound_violations, 0);
    }
}

#[test]
fn narrow_patch_collapses() {
    for variant in ModelVariant::standard_set() {
        let m = model(variant, 1.0, 128);
        let res = run_to_steady(State::perturbed_equilibrium(&m, 0.01).unwrap(), &m, &SteadyOptions::default()).unwrap();
        assert!(res.converged);
        assert!(m.grid().integral_mean(&res.state.v) < 0.1, "{}", variant.id());
    }
}

#[test]
fn decay_from_inside_the_invariant_region() {
    for variant in ModelVariant::standard_set() {
        let m = model(variant, 5.0, 128);
        let r = extinction_decay_check(&m, 0.2, 40.0, 1e-4, 0.5).unwrap();
        assert!(r.monotone, "{}", variant.id());
        assert!(r.final_max_v < 1e-3);
        for s in &r.samples {
            assert!(s.max_v <= s.envelope + 1e-8, "t={} {} > {}", s.t, s.max_v, s.envelope);
        }
        let edge = extinction_decay_check(&m, 0.25, 10.0, 1e-4, 0.1).unwrap();
        assert!(edge.samples.iter().all(|s| s.max_v <= 0.25 + 1e-8));
        let zero = extinction_decay_check(&m, 0.0, 1.0, 1e-4, 0.1).unwrap();
        assert!(zero.samples.iter().all(|s| s.max_v == 0.0));
    }
}

#[test]
fn middle_branch_is_unstable() {
    let config = BifurcationConfig {
        d_w_values: vec![0.1],
        variants: vec![LAPLACE],
        with_stability: false,
        gallery_a: Vec::new(),
        ..BifurcationConfig::default()
    };
    let suite = run_bifurcation_suite(&config).unwrap();
    let run = suite.runs.iter().find(|r| r.kind == BranchKind::Vegetated).unwrap();
    let branch = run.outcome.as_ref().unwrap();
    let fold = branch.folds[0].after;
    // After the first fold the branch returns along the middle state.
    let k = (fold + 1..branch.points.len())
        .take_while(|&k| branch.points[k].a < 2.0)
        .min_by(|&i, &j| {
            let di = (branch.points[i].a - 1.8).abs();
            let dj = (branch.points[j].a - 1.8).abs();
            di.total_cmp(&dj)
        })
        .unwrap();
    let a = branch.points[k].a;
    assert!((a - 1.8).abs() < 0.05, "{a}");
    let (v, w) = &branch.snapshots[branch.points[k].snapshot];
    let params = ModelParams { a, ..ModelParams::default() };
    let m = Model::new(params, LAPLACE, Grid1D::new(25.0, suite.nodes).unwrap()).unwrap();
    let problem = StationaryProblem::new(m.clone());
    let u = problem.pack(v, w);
    assert!(problem.residual(&u, a).iter().map(|r| r * r).sum::<f64>().sqrt() <= 1e-10);
    let (flag, rightmost) = stability_flag(&problem, &u, a);
    assert_eq!(flag, Stability::Unstable, "{rightmost}");

    // Perturb-and-simulate: the trajectory leaves the snapshot.
    let fit = perturbation_decay(&m, v, w, 0.01, 20.0, 1e-4, 0.5).unwrap();
    let start = fit.samples[0].1;
    let end = fit.samples.last().unwrap().1;
    assert!(end > 10.0 * start, "{start} -> {end}");
}

#[test]
fn upper_state_relaxes_back_after_a_kick() {
    let m = model(LAPLACE, 25.0, 75);
    let problem = StationaryProblem::new(m.clone());
    let guess = problem.perturbed_guess(1.8, 0.01).unwrap();
    let u = newton_solve(&problem, 1.8, &guess, 1e-10, 50).unwrap().u;
    assert_eq!(stability_flag(&problem, &u, 1.8).0, Stability::Stable);
    let (v, w) = problem.unpack(&u);
    let fit = perturbation_decay(&m, &v, &w, 0.01, 20.0, 1e-4, 0.5).unwrap();
    assert!(fit.slope < 0.0 && fit.r_squared > 0.99);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positivity_and_invariant_region_hold(
        variant in prop_oneof![
            Just(ModelVariant::Local),
            Just(ModelVariant::Nonlocal(KernelFamily::Laplace)),
            Just(ModelVariant::Nonlocal(KernelFamily::SuperGaussian)),
        ],
        l in 1.0f64..10.0,
        frac in prop::collection::vec((0.0f64..1.0, 0.0f64..1.5), 64),
    ) {
        let m = model(variant, l, 64);
        let p = m.params;
        let mut w: Vec<f64> = frac.iter().map(|f| f.1 * p.a).collect();
        let r1 = w.iter().copied().fold(p.a, f64::max);
        let mut v: Vec<f64> = frac.iter().map(|f| f.0 * p.b / r1).collect();
        m.pin_boundary(&mut v, &mut w);
        let bound = p.b / r1;
        let opts = SteadyOptions { max_steps: 3000, tol: 1e-300, ..SteadyOptions::default() };
        let res = run_to_steady(State::new(v, w), &m, &opts).unwrap();
        prop_assert!(res.summary.started_in_invariant_region);
        prop_assert_eq!(res.summary.negativity_violations, 0);
        prop_assert_eq!(res.summary.invariant_violations, 0);
        prop_assert_eq!(res.summary.water_bound_violations, 0);
        prop_assert!(res.summary.min_v >= -1e-12);
        prop_assert!(res.summary.max_v <= bound + 1e-8);
        prop_assert!(res.summary.max_w <= r1 + 1e-8);
    }

    #[test]
    fn converged_runs_meet_their_tolerance(tol in 1e-4f64..1e-2) {
        let m = model(LAPLACE, 2.0, 128);
        let opts = SteadyOptions { tol, max_steps: 200_000, ..SteadyOptions::default() };
        let res = run_to_steady(State::perturbed_equilibrium(&m, 0.01).unwrap(), &m, &opts).unwrap();
        if res.converged {
            prop_assert!(res.last_step_delta < tol);
        }
    }

    #[test]
    fn one_step_from_rest_adds_rainfall(variant in prop_oneof![Just(ModelVariant::Local), Just(LAPLACE)]) {
        let m = model(variant, 3.0, 32);
        let s = euler_step(&State::new(vec![0.0; 32], vec![0.0; 32]), &m, 1e-4).unwrap();
        prop_assert!(s.v.iter().all(|&x| x == 0.0));
        prop_assert!(s.w[1..31].iter().all(|&x| (x - 1e-4 * m.params.a).abs() < 1e-15));
    }
}
