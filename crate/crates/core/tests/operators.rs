use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use vegpatch_core::discretization::{taylor_consistency, DispersalOperator, Grid1D, Quadrature};
use vegpatch_core::kernels::{Kernel, KernelFamily};

fn family() -> impl Strategy<Value = KernelFamily> {
    prop_oneof![Just(KernelFamily::Laplace), Just(KernelFamily::SuperGaussian)]
}

fn operator(family: KernelFamily, l: f64, n: usize) -> DispersalOperator {
    let grid = Grid1D::new(l, n).unwrap();
    DispersalOperator::assemble(&grid, &Kernel::builtin(family).unwrap(), Quadrature::default())
}

/// `∫ J(z) (v(x+z) - v(x)) dz` by composite Simpson on a fine grid,
/// split at the kernel's kink at zero.
fn fine_dispersal(kernel: &Kernel, v: impl Fn(f64) -> f64, x: f64) -> f64 {
    let c = kernel.support_cutoff();
    let panels = 200_000;
    let simpson = |a: f64, b: f64| {
        let h = (b - a) / panels as f64;
        let f = |z: f64| kernel.eval(z) * (v(x + z) - v(x));
        let mut s = f(a) + f(b);
        for k in 1..panels {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    simpson(-c, 0.0) + simpson(0.0, c)
}

#[test]
fn center_of_wide_domain_preserves_constants() {
    for fam in [KernelFamily::Laplace, KernelFamily::SuperGaussian] {
        let op = operator(fam, 50.0, 1001);
        let out = op.apply_vec(&vec![1.0; 1001]);
        assert!(out[500].abs() < 1e-6, "{fam}: {}", out[500]);
    }
}

#[test]
fn half_of_the_mass_is_lost_at_the_edge() {
    for fam in [KernelFamily::Laplace, KernelFamily::SuperGaussian] {
        let op = operator(fam, 50.0, 2001);
        let out = op.apply_vec(&vec![1.0; 2001]);
        assert_abs_diff_eq!(out[2000], -0.5, epsilon = 2e-3);
        assert_abs_diff_eq!(out[0], out[2000], epsilon = 1e-12);
    }
}

#[test]
fn taylor_gap_matches_fine_quadrature() {
    let bump = |x: f64| (-x * x / 8.0).exp();
    // Second and fourth derivatives of the bump at x.
    let d2 = |x: f64| (x * x / 16.0 - 0.25) * bump(x);
    let d4_max = 3.0 / 16.0;
    for (fam, m4) in [(KernelFamily::Laplace, 6.0), (KernelFamily::SuperGaussian, 2.1884)] {
        let kernel = Kernel::builtin(fam).unwrap();
        let grid = Grid1D::new(40.0, 801).unwrap();
        let op = DispersalOperator::assemble(&grid, &kernel, Quadrature::default());
        let gap = taylor_consistency(&op, &grid.sample(bump)).unwrap();
        let oracle = op
            .deep_interior()
            .into_iter()
            .step_by(10)
            .map(|i| {
                let x = grid.nodes()[i];
                (fine_dispersal(&kernel, bump, x) - 0.5 * d2(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!((gap - oracle).abs() < 2e-3, "{fam}: gap {gap}, oracle {oracle}");
        // Leading correction (m₄/24) max|v''''|.
        assert!(gap <= m4 / 24.0 * d4_max + 2e-3, "{fam}: {gap}");
    }
    let grid = Grid1D::new(40.0, 801).unwrap();
    let op = DispersalOperator::assemble(&grid, &Kernel::super_gaussian(), Quadrature::default());
    assert!(taylor_consistency(&op, &grid.sample(bump)).unwrap() < 0.02);
}

#[test]
fn linear_profile_has_no_deep_interior_gap() {
    for fam in [KernelFamily::Laplace, KernelFamily::SuperGaussian] {
        let op = operator(fam, 40.0, 801);
        let v = op.grid().sample(|x| 0.3 * x - 1.0);
        assert!(taylor_consistency(&op, &v).unwrap() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear(
        fam in family(),
        l in 1.0f64..20.0,
        n in 3usize..200,
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        seed in prop::collection::vec(-5.0f64..5.0, 400),
    ) {
        let op = operator(fam, l, n);
        let u = &seed[..n];
        let v = &seed[200..200 + n];
        let combo: Vec<f64> = u.iter().zip(v).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = op.apply_vec(&combo);
        let (lu, lv) = (op.apply_vec(u), op.apply_vec(v));
        for i in 0..n {
            let rhs = alpha * lu[i] + beta * lv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 10.0);
        }
    }

    #[test]
    fn weighted_kernel_is_symmetric(fam in family(), l in 0.5f64..15.0, n in 3usize..150) {
        let op = operator(fam, l, n);
        let w = op.grid().weights().to_vec();
        for i in 0..n {
            for j in 0..i {
                let a = w[i] * op.entry(i, j);
                let b = w[j] * op.entry(j, i);
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn constants_are_damped_monotonically_toward_the_edge(
        fam in family(),
        l in 0.5f64..15.0,
        n in 3usize..300,
    ) {
        let op = operator(fam, l, n);
        let out = op.apply_vec(&vec![1.0; n]);
        for &o in &out {
            prop_assert!((-1.0..=1e-12).contains(&o));
        }
        let half = n / 2;
        for i in 0..half {
            prop_assert!(out[i] <= out[i + 1] + 1e-12);
            prop_assert!(out[n - 1 - i] <= out[n - 2 - i] + 1e-12);
        }
        for s in op.row_sums() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn bounded_by_unit_gap(
        fam in family(),
        l in 0.5f64..15.0,
        n in 3usize..200,
        v in prop::collection::vec(0.0f64..1.0, 200),
    ) {
        let op = operator(fam, l, n);
        for o in op.apply_vec(&v[..n]) {
            prop_assert!(o.abs() <= 1.0 + 1e-12);
        }
    }
}
