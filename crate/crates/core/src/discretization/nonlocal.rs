use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Grid1D, LaplacianOperator};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::linalg::dot;

/// Spacing above which a unit-variance kernel is considered under-resolved.
const RESOLUTION_LIMIT: f64 = 0.5;

/// Quadrature used to discretize `∫_Ω J(x - y) v(y) dy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Composite trapezoid, `K_ij = w_j J(x_i - x_j)`.
    Trapezoid,
    /// Composite trapezoid divided by the lattice mass `h Σ_k J(kh)`, so the
    /// discrete kernel has unit mass on the infinite lattice and interior
    /// rows of `K` never sum above one.
    #[default]
    NormalizedTrapezoid,
}

/// Discrete non-local dispersal operator `(𝓛v)_i = Σ_j K_ij v_j - v_i`
/// with the integral truncated to `Ω` (mass landing outside is lost).
///
/// `K` is stored in Toeplitz form: `K_ij = (w_j / h) c_|i-j|`, so only the
/// coefficients `c_0 ..= c_band` are kept.
#[derive(Debug, Clone)]
pub struct DispersalOperator {
    grid: Grid1D,
    family: KernelFamily,
    quadrature: Quadrature,
    support_cutoff: f64,
    band: usize,
    /// `c_{|d|}` laid out for `d = -band ..= band`.
    stencil: Vec<f64>,
    lattice_mass: f64,
    lattice_second_moment: f64,
    under_resolved: bool,
}

impl DispersalOperator {
    pub fn assemble(grid: &Grid1D, kernel: &Kernel, quadrature: Quadrature) -> Self {
        let h = grid.spacing();
        let cutoff = kernel.support_cutoff();
        let reach = (cutoff / h).floor() as usize;

        // Lattice sums over the full kernel support, independent of N.
        let raw: Vec<f64> = (0..=reach).map(|k| h * kernel.eval(k as f64 * h)).collect();
        let lattice_mass = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
        let scale = match quadrature {
            Quadrature::Trapezoid => 1.0,
            Quadrature::NormalizedTrapezoid => lattice_mass,
        };
        let lattice_second_moment = 2.0
            * raw
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * (k as f64 * h).powi(2))
                .sum::<f64>()
            / scale;

        let band = reach.min(grid.len() - 1);
        let mut stencil = vec![0.0; 2 * band + 1];
        for d in 0..=band {
            let c = raw[d] / scale;
            stencil[band + d] = c;
            stencil[band - d] = c;
        }

        let under_resolved = h > RESOLUTION_LIMIT;
        if under_resolved {
            log::warn!(
                "grid spacing {h:.4} exceeds {RESOLUTION_LIMIT}: {} kernel is under-resolved",
                kernel.family()
            );
        }
        DispersalOperator {
            grid: grid.clone(),
            family: kernel.family(),
            quadrature,
            support_cutoff: cutoff,
            band,
            stencil,
            lattice_mass,
            lattice_second_moment,
            under_resolved,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn support_cutoff(&self) -> f64 {
        self.support_cutoff
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// `h Σ_k J(kh)` over the kernel support.
    pub fn lattice_mass(&self) -> f64 {
        self.lattice_mass
    }

    /// `Σ_k c_k (kh)²`, the discrete counterpart of `∫ J z² dz`.
    pub fn lattice_second_moment(&self) -> f64 {
        self.lattice_second_moment
    }

    /// Whether `h` exceeded the resolution limit at assembly.
    pub fn under_resolved(&self) -> bool {
        self.under_resolved
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn coeff(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        if d > self.band {
            0.0
        } else {
            self.stencil[self.band + d]
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let half = j == 0 || j == self.len() - 1;
        let c = self.coeff(i, j);
        if half {
            0.5 * c
        } else {
            c
        }
    }

    /// `out = K v`.
    pub fn apply_kernel(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(v.len(), n);
        let b = self.band;
        let last = n - 1;
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(last);
            let coeffs = &self.stencil[b + lo - i..=b + hi - i];
            let mut s = dot(coeffs, &v[lo..=hi]);
            if lo == 0 {
                s -= 0.5 * coeffs[0] * v[0];
            }
            if hi == last {
                s -= 0.5 * coeffs[hi - lo] * v[last];
            }
            *o = s;
        }
    }

    /// `out = 𝓛 v = K v - v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.apply_kernel(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o -= x;
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        out
    }

    /// Dense `K`.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let ones = vec![1.0; self.len()];
        let mut out = vec![0.0; self.len()];
        self.apply_kernel(&ones, &mut out);
        out
    }

    /// Infinity norm of `K`.
    pub fn kernel_norm_inf(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }

    /// Indices of nodes at least one kernel cutoff away from both ends.
    pub fn deep_interior(&self) -> Vec<usize> {
        let l = self.grid.half_width();
        let c = self.support_cutoff;
        self.grid
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x + l >= c && l - x >= c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Writes `K` as a dense comma-separated matrix, one row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.len();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| crate::output::fmt_f64(self.entry(i, j)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Largest deviation `|𝓛v - (m₂/2) Δv|` over nodes at least one kernel cutoff
/// from the boundary, where `m₂` is the discrete second moment. This is the
/// size of the higher-order terms the local model drops.
pub fn taylor_consistency(op: &DispersalOperator, profile: &[f64]) -> Result<f64> {
    let interior = op.deep_interior();
    if interior.is_empty() {
        return Err(Error::DomainTooSmall {
            cutoff: op.support_cutoff(),
        });
    }
    let nonlocal = op.apply_vec(profile);
    let local = LaplacianOperator::new(op.grid()).apply_vec(profile);
    let half_m2 = 0.5 * op.lattice_second_moment();
    Ok(interior
        .into_iter()
        .map(|i| (nonlocal[i] - half_m2 * local[i]).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ops(l: f64, n: usize) -> Vec<DispersalOperator> {
        let g = Grid1D::new(l, n).unwrap();
        vec![
            DispersalOperator::assemble(&g, &Kernel::laplace(), Quadrature::default()),
            DispersalOperator::assemble(&g, &Kernel::super_gaussian(), Quadrature::default()),
        ]
    }

    #[test]
    fn constant_is_preserved_far_from_boundary() {
        for op in ops(50.0, 501) {
            let ones = vec![1.0; op.len()];
            let lv = op.apply_vec(&ones);
            assert!(lv[250].abs() < 1e-6, "{}: {}", op.family(), lv[250]);
        }
    }

    #[test]
    fn half_mass_lost_at_boundary() {
        for op in ops(50.0, 501) {
            let ones = vec![1.0; op.len()];
            let lv = op.apply_vec(&ones);
            assert_abs_diff_eq!(lv[500], -0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(lv[0], -0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        for op in ops(5.0, 51) {
            assert!(op.apply_vec(&vec![0.0; 51]).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn row_sums_bounded_and_entries_nonnegative() {
        for (l, n) in [(25.0, 75), (2.0, 128), (10.0, 401)] {
            for op in ops(l, n) {
                assert!(op.row_sums().iter().all(|&s| s <= 1.0 + 1e-8));
                let k = op.kernel_matrix();
                assert!(k.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn plain_trapezoid_overshoots_for_laplace_kernel() {
        // Geometric series: h Σ_k e^{-√2|k|h}/√2 = x coth x with x = h/√2,
        // i.e. 1 + h²/6 + O(h⁴). The cutoff tail is below 1e-18.
        let g = Grid1D::new(25.0, 75).unwrap();
        let op = DispersalOperator::assemble(&g, &Kernel::laplace(), Quadrature::Trapezoid);
        let x = g.spacing() / 2f64.sqrt();
        assert_abs_diff_eq!(op.lattice_mass(), x / x.tanh(), epsilon = 1e-12);
        assert!(op.row_sums()[37] > 1.05);
    }

    #[test]
    fn monotone_boundary_loss() {
        for op in ops(12.0, 121) {
            let lv = op.apply_vec(&vec![1.0; 121]);
            // Non-increasing in distance from the nearest boundary means
            // non-decreasing towards the centre from the left end.
            for i in 0..60 {
                assert!(lv[i] <= lv[i + 1] + 1e-15, "{} at {i}", op.family());
                assert!(lv[120 - i] <= lv[119 - i] + 1e-15);
            }
        }
    }

    #[test]
    fn weighted_kernel_is_symmetric() {
        for op in ops(6.0, 61) {
            let k = op.kernel_matrix();
            let w = op.grid().weights();
            for i in 0..61 {
                for j in 0..61 {
                    assert!((w[i] * k[(i, j)] - w[j] * k[(j, i)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn banded_apply_matches_dense() {
        for op in ops(40.0, 200) {
            let v: Vec<f64> = (0..200).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
            let dense = op.kernel_matrix() * nalgebra::DVector::from_vec(v.clone());
            let mut out = vec![0.0; 200];
            op.apply_kernel(&v, &mut out);
            for i in 0..200 {
                assert_abs_diff_eq!(out[i], dense[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn taylor_gap_rejects_small_domain() {
        let op = &ops(10.0, 101)[0];
        assert!(matches!(
            taylor_consistency(op, &vec![0.0; 101]),
            Err(Error::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn taylor_gap_zero_and_linear_profiles() {
        let g = Grid1D::new(40.0, 801).unwrap();
        for op in ops(40.0, 801) {
            assert_eq!(taylor_consistency(&op, &vec![0.0; 801]).unwrap(), 0.0);
            let linear = g.sample(|x| 0.3 * x + 1.0);
            let gap = taylor_consistency(&op, &linear).unwrap();
            assert!(gap < 1e-10, "{}: {gap}", op.family());
        }
    }

    #[test]
    fn csv_export_shape() {
        let op = &ops(1.0, 5)[1];
        let mut buf = Vec::new();
        op.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().all(|l| l.split(',').count() == 5));
    }
}
