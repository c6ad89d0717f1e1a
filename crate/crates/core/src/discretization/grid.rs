use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid on `[-L, L]` with trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    half_width: f64,
    spacing: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid1D {
    pub fn new(half_width: f64, n_nodes: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::BadGrid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::BadGrid(format!("need at least 3 nodes, got {n_nodes}")));
        }
        let last = n_nodes - 1;
        let spacing = 2.0 * half_width / last as f64;
        let nodes = (0..n_nodes)
            .map(|i| match i {
                0 => -half_width,
                i if i == last => half_width,
                i => -half_width + i as f64 * spacing,
            })
            .collect();
        let weights = (0..n_nodes)
            .map(|i| if i == 0 || i == last { 0.5 * spacing } else { spacing })
            .collect();
        Ok(Grid1D {
            half_width,
            spacing,
            nodes,
            weights,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Trapezoid integral of node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        crate::linalg::dot(&self.weights, values)
    }

    /// Trapezoid mean `(1/2L) ∫ v`.
    pub fn integral_mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / (2.0 * self.half_width)
    }

    /// Discrete `L²(Ω)` norm with trapezoid weights.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bifurcation_grid_spacing() {
        let g = Grid1D::new(25.0, 75).unwrap();
        assert_abs_diff_eq!(g.spacing(), 50.0 / 74.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.spacing(), 0.67568, epsilon = 1e-5);
    }

    #[test]
    fn smallest_grid() {
        let g = Grid1D::new(1.0, 3).unwrap();
        assert_eq!(g.nodes(), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn weights_sum_to_domain_length() {
        let g = Grid1D::new(10.0, 301).unwrap();
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 20.0, epsilon = 1e-12);
        assert_eq!(g.nodes()[0], -10.0);
        assert_eq!(g.nodes()[300], 10.0);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(matches!(Grid1D::new(1.0, 2), Err(Error::BadGrid(_))));
        assert!(matches!(Grid1D::new(0.0, 10), Err(Error::BadGrid(_))));
        assert!(matches!(Grid1D::new(-1.0, 10), Err(Error::BadGrid(_))));
    }
}
