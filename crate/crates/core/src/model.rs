//! A parameter set bound to the spatial operators of one model variant.

use crate::discretization::{DispersalOperator, Grid1D, LaplacianOperator, Quadrature};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::kinetics::{upper_equilibrium, ModelParams, ModelVariant};

#[derive(Debug, Clone)]
pub enum Transport {
    Nonlocal(DispersalOperator),
    Local(LaplacianOperator),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub params: ModelParams,
    variant: ModelVariant,
    grid: Grid1D,
    transport: Transport,
    laplacian: LaplacianOperator,
}

impl Model {
    /// Builds a model with the built-in kernel named by `variant`.
    pub fn new(params: ModelParams, variant: ModelVariant, grid: Grid1D) -> Result<Self> {
        match variant {
            ModelVariant::Local => Model::assemble(params, variant, grid, None, Quadrature::default()),
            ModelVariant::Nonlocal(family) => {
                let kernel = Kernel::builtin(family)?;
                Model::assemble(params, variant, grid, Some(&kernel), Quadrature::default())
            }
        }
    }

    /// Non-local model with an explicit kernel and quadrature rule.
    pub fn with_kernel(
        params: ModelParams,
        kernel: &Kernel,
        grid: Grid1D,
        quadrature: Quadrature,
    ) -> Result<Self> {
        let variant = ModelVariant::Nonlocal(kernel.family());
        Model::assemble(params, variant, grid, Some(kernel), quadrature)
    }

    fn assemble(
        params: ModelParams,
        variant: ModelVariant,
        grid: Grid1D,
        kernel: Option<&Kernel>,
        quadrature: Quadrature,
    ) -> Result<Self> {
        params.validate()?;
        let laplacian = LaplacianOperator::new(&grid);
        let transport = match kernel {
            Some(k) => Transport::Nonlocal(DispersalOperator::assemble(&grid, k, quadrature)),
            None => Transport::Local(laplacian.clone()),
        };
        Ok(Model {
            params,
            variant,
            grid,
            transport,
            laplacian,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn laplacian(&self) -> &LaplacianOperator {
        &self.laplacian
    }

    pub fn dispersal(&self) -> Option<&DispersalOperator> {
        match &self.transport {
            Transport::Nonlocal(op) => Some(op),
            Transport::Local(_) => None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.len()
    }

    /// Whether the end nodes of `v` carry a Dirichlet zero. Only the local
    /// model pins them; the non-local model tracks `v` at every node.
    pub fn vegetation_pinned(&self) -> bool {
        matches!(self.transport, Transport::Local(_))
    }

    /// Coefficient in front of the vegetation transport operator.
    pub fn transport_rate(&self) -> f64 {
        match self.transport {
            Transport::Nonlocal(_) => self.params.d_v,
            Transport::Local(_) => 0.5 * self.params.d_v,
        }
    }

    /// `out = d_v 𝓛 v` or `out = (d_v / 2) Δ v`.
    pub fn apply_transport(&self, v: &[f64], out: &mut [f64]) {
        match &self.transport {
            Transport::Nonlocal(op) => op.apply(v, out),
            Transport::Local(lap) => lap.apply(v, out),
        }
        let rate = self.transport_rate();
        for o in out.iter_mut() {
            *o *= rate;
        }
    }

    /// Zeroes the Dirichlet entries of `(v, w)`.
    pub fn pin_boundary(&self, v: &mut [f64], w: &mut [f64]) {
        let last = w.len() - 1;
        w[0] = 0.0;
        w[last] = 0.0;
        if self.vegetation_pinned() {
            v[0] = 0.0;
            v[last] = 0.0;
        }
    }

    /// Upper constant equilibrium with a cosine bump,
    /// `v = v₃ (1 + ε cos(πx / 2L))`, `w = w₃`, boundary values pinned.
    pub fn cosine_perturbed_state(&self, amplitude: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let eq = upper_equilibrium(self.params.a, self.params.b).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no vegetated equilibrium for A={} B={} (need A >= 2B)",
                self.params.a, self.params.b
            ))
        })?;
        let l = self.grid.half_width();
        let k = std::f64::consts::PI / (2.0 * l);
        let mut v = self.grid.sample(|x| eq.v * (1.0 + amplitude * (k * x).cos()));
        let mut w = vec![eq.w; self.grid.len()];
        self.pin_boundary(&mut v, &mut w);
        Ok((v, w))
    }

    /// Checks the explicit-Euler stability bounds for step `h_t`.
    pub fn check_time_step(&self, h_t: f64) -> Result<()> {
        if !(h_t > 0.0) || !h_t.is_finite() {
            return Err(Error::UnstableTimeStep(format!("time step must be positive, got {h_t}")));
        }
        let h = self.grid.spacing();
        let water = self.params.d_w * h_t / (h * h);
        if water > 0.5 {
            return Err(Error::UnstableTimeStep(format!(
                "d_w h_t / h^2 = {water:.4} > 0.5"
            )));
        }
        match &self.transport {
            Transport::Nonlocal(op) => {
                let number = self.params.d_v * h_t * (1.0 + op.kernel_norm_inf());
                if number > 0.5 {
                    return Err(Error::UnstableTimeStep(format!(
                        "d_v h_t (1 + |K|) = {number:.4} > 0.5"
                    )));
                }
            }
            Transport::Local(_) => {
                let number = self.transport_rate() * h_t / (h * h);
                if number > 0.5 {
                    return Err(Error::UnstableTimeStep(format!(
                        "(d_v/2) h_t / h^2 = {number:.4} > 0.5"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    #[test]
    fn local_model_pins_vegetation() {
        let g = Grid1D::new(5.0, 51).unwrap();
        let m = Model::new(ModelParams::default(), ModelVariant::Local, g).unwrap();
        let (v, w) = m.cosine_perturbed_state(0.01).unwrap();
        assert_eq!((v[0], v[50], w[0], w[50]), (0.0, 0.0, 0.0, 0.0));
        assert!(v[25] > 3.73);
    }

    #[test]
    fn nonlocal_model_keeps_boundary_biomass() {
        let g = Grid1D::new(5.0, 51).unwrap();
        let variant = ModelVariant::Nonlocal(KernelFamily::Laplace);
        let m = Model::new(ModelParams::default(), variant, g).unwrap();
        let (v, _) = m.cosine_perturbed_state(0.01).unwrap();
        assert!((v[0] - 3.732).abs() < 1e-3);
    }

    #[test]
    fn time_step_guard() {
        let g = Grid1D::new(1.0, 201).unwrap();
        let m = Model::new(ModelParams::default(), ModelVariant::Local, g).unwrap();
        assert!(m.check_time_step(1e-4).is_err());
        assert!(m.check_time_step(1e-5).is_ok());
        assert!(m.check_time_step(-1.0).is_err());
    }

    #[test]
    fn no_perturbed_state_below_threshold() {
        let g = Grid1D::new(5.0, 51).unwrap();
        let p = ModelParams::default().with_rainfall(0.5);
        let m = Model::new(p, ModelVariant::Local, g).unwrap();
        assert!(m.cosine_perturbed_state(0.01).is_err());
    }
}
