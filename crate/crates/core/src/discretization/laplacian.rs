use super::Grid1D;

/// Second-order centred Laplacian `(v[i-1] - 2v[i] + v[i+1]) / h²` with
/// homogeneous Dirichlet values pinned at the two end nodes.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    grid: Grid1D,
    inv_h2: f64,
}

impl LaplacianOperator {
    pub fn new(grid: &Grid1D) -> Self {
        let h = grid.spacing();
        LaplacianOperator {
            grid: grid.clone(),
            inv_h2: 1.0 / (h * h),
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `1 / h²`, the off-diagonal stencil weight.
    pub fn stencil_weight(&self) -> f64 {
        self.inv_h2
    }

    /// Number of unknowns once the boundary nodes are eliminated.
    pub fn interior_len(&self) -> usize {
        self.grid.len() - 2
    }

    /// Applies the stencil at interior nodes using the node values as given;
    /// the two boundary entries of `out` are set to zero.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = v.len();
        debug_assert_eq!(n, self.grid.len());
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) * self.inv_h2;
        }
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply(v, &mut out);
        out
    }

    /// Interior tridiagonal `(lower, diag, upper)` of `-Δ` with the boundary
    /// values eliminated.
    pub fn negative_interior_bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.interior_len();
        (
            vec![-self.inv_h2; m.saturating_sub(1)],
            vec![2.0 * self.inv_h2; m],
            vec![-self.inv_h2; m.saturating_sub(1)],
        )
    }
}
