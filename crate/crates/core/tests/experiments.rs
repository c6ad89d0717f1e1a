use vegpatch_core::discretization::Grid1D;
use vegpatch_core::dynamics::SteadyOptions;
use vegpatch_core::experiments::{
    boundary_sharpness, detect_critical_l, log_spaced, run_bifurcation_suite, run_patch_sweep,
    vegetated_steady_state, BifurcationConfig, SweepConfig, SweepRow,
};
use vegpatch_core::kernels::KernelFamily;
use vegpatch_core::kinetics::{upper_equilibrium, ModelParams, ModelVariant};
use vegpatch_core::model::Model;

const LAPLACE: ModelVariant = ModelVariant::Nonlocal(KernelFamily::Laplace);
const SUPER_GAUSSIAN: ModelVariant = ModelVariant::Nonlocal(KernelFamily::SuperGaussian);

fn lcrit(rows: &[SweepRow], threshold: f64, v: ModelVariant) -> Option<f64> {
    detect_critical_l(rows, threshold)
        .into_iter()
        .find(|c| c.variant == v)
        .and_then(|c| c.l_crit)
}

#[test]
fn reduced_sweep_orders_and_brackets_the_critical_sizes() {
    let config = SweepConfig {
        l_values: log_spaced(1.0, 10.0, 20),
        ..SweepConfig::default()
    };
    let rows = run_patch_sweep(&config).unwrap();
    assert_eq!(rows.len(), 60);
    assert!(rows.iter().all(|r| r.converged && r.avg_biomass >= 0.0));

    let step = 10f64.powf(1.0 / 19.0);
    let mut found = Vec::new();
    for (v, reference) in [(LAPLACE, 1.46), (SUPER_GAUSSIAN, 1.76), (ModelVariant::Local, 2.33)] {
        let l = lcrit(&rows, 0.1, v).unwrap();
        // The collapse-to-persistence transition lies in [L_crit, L_crit·step].
        assert!(l <= reference * 1.2 && l * step >= reference * 0.8, "{}: {l}", v.id());
        let lo = lcrit(&rows, 0.05, v).unwrap();
        let hi = lcrit(&rows, 0.2, v).unwrap();
        assert!((lo / l).ln().abs() <= 2.0 * step.ln() + 1e-12);
        assert!((hi / l).ln().abs() <= 2.0 * step.ln() + 1e-12);

        // Monotone tail from two grid steps above L_crit.
        let tail: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.variant == v && r.l > l * step * step * (1.0 + 1e-9))
            .collect();
        assert!(tail.windows(2).all(|w| w[1].avg_biomass >= w[0].avg_biomass - 1e-9), "{}", v.id());
        found.push(l);
    }
    assert!(found[0] < found[1] && found[1] < found[2], "{found:?}");
}

#[test]
fn sweep_examples() {
    let config = SweepConfig {
        l_values: vec![1.0, 2.0, 100.0],
        ..SweepConfig::default()
    };
    let rows = run_patch_sweep(&config).unwrap();
    let v3 = upper_equilibrium(1.8, 0.45).unwrap().v;
    let row = |v: ModelVariant, l: f64| rows.iter().find(|r| r.variant == v && r.l == l).unwrap();
    for v in ModelVariant::standard_set() {
        let wide = row(v, 100.0);
        assert!((wide.avg_biomass - v3).abs() / v3 < 0.05, "{}: {}", v.id(), wide.avg_biomass);
    }
    assert!(row(ModelVariant::Local, 1.0).avg_biomass < 0.1);
    assert!(row(LAPLACE, 2.0).avg_biomass > 0.1);
}

fn boundary_ratio(v: ModelVariant, n: usize) -> f64 {
    let m = Model::new(ModelParams::default(), v, Grid1D::new(10.0, n).unwrap()).unwrap();
    let (profile, _) = vegetated_steady_state(&m, &SteadyOptions::default(), 0.01, Some(1e-10)).unwrap();
    boundary_sharpness(&profile, &m)
}

#[test]
fn nonlocal_profiles_drop_sharply_at_the_edge() {
    let local: Vec<f64> = [128, 255, 509].iter().map(|&n| boundary_ratio(ModelVariant::Local, n)).collect();
    assert!(local.windows(2).all(|w| w[1] < w[0]), "{local:?}");
    assert!(local[1] < 0.05 && local[2] < 0.05);
    for v in [LAPLACE, SUPER_GAUSSIAN] {
        let (coarse, fine) = (boundary_ratio(v, 128), boundary_ratio(v, 255));
        assert!(fine >= coarse && coarse > 0.15, "{}: {coarse} {fine}", v.id());
    }
    assert!(boundary_ratio(SUPER_GAUSSIAN, 255) > 0.2);
    let m = Model::new(ModelParams::default(), LAPLACE, Grid1D::new(10.0, 128).unwrap()).unwrap();
    assert_eq!(boundary_sharpness(&vec![0.0; 128], &m), 0.0);
}

#[test]
fn gallery_profiles_sit_on_the_upper_branch() {
    let config = BifurcationConfig {
        d_w_values: vec![80.0],
        variants: vec![LAPLACE],
        with_stability: false,
        gallery_a: vec![0.6, 1.2, 2.0],
        ..BifurcationConfig::default()
    };
    let suite = run_bifurcation_suite(&config).unwrap();
    assert_eq!(suite.nodes, 75);
    let targets: Vec<f64> = suite.gallery.iter().map(|g| g.a_target).collect();
    assert!(targets.contains(&1.2) && targets.contains(&2.0), "{targets:?}");
    for g in &suite.gallery {
        assert!(g.polished && g.a == g.a_target);
        assert_eq!(g.v.len(), 75);
        let peak = g.v.iter().copied().fold(0.0, f64::max);
        assert!(peak >= 0.45 / g.a, "{} {peak}", g.a);
    }
}
