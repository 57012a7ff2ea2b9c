//! The linear-Gaussian posterior over voxel activities.
//!
//! Likelihood `g | f ~ Normal(Af, σ²I)`, independent truncated-normal priors on each
//! voxel, and sampling in log space (`f = exp(x)`) so every draw is strictly positive.

use std::sync::Arc;

use libm::erfc;

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::projector::{DetectorGeometry, ProjectionStack, Projector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A differentiable log density on `R^d`, the interface the samplers consume.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x` (up to a constant); writes the gradient into `grad`.
    /// May return a non-finite value, which the sampler treats as divergent.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Map a sampler position to the reported sample space. Identity by default.
    fn constrain(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    /// Default starting point in sampler coordinates.
    fn initial_position(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_grad(x, grad)
    }
    fn constrain(&self, x: &[f64], out: &mut [f64]) {
        (**self).constrain(x, out)
    }
    fn initial_position(&self) -> Vec<f64> {
        (**self).initial_position()
    }
}

/// Posterior over activities given one set of projections.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    projector: Arc<Projector>,
    observed: Vec<f64>,
    sigma_like: f64,
    prior_mu: f64,
    prior_sigma: f64,
    /// Initial activity used for the default start point.
    init_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub sigma_like: f64,
    pub prior_mu: f64,
    pub prior_sigma: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            sigma_like: 1.0,
            prior_mu: 1.0,
            prior_sigma: 5.0,
        }
    }
}

impl PosteriorModel {
    pub fn new(projector: Arc<Projector>, observed: Vec<f64>, params: PriorParams) -> Result<Self> {
        if observed.len() != projector.num_rays() {
            return Err(Error::invalid(format!(
                "observed vector has {} entries, geometry needs {}",
                observed.len(),
                projector.num_rays()
            )));
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observed projections must be finite"));
        }
        if !(params.sigma_like.is_finite() && params.sigma_like > 0.0) {
            return Err(Error::invalid("sigma_like must be positive"));
        }
        if !(params.prior_sigma.is_finite() && params.prior_sigma > 0.0) {
            return Err(Error::invalid("prior_sigma must be positive"));
        }
        if !(params.prior_mu.is_finite() && params.prior_mu > 0.0) {
            return Err(Error::invalid("prior_mu must be positive"));
        }
        Ok(Self {
            projector,
            observed,
            sigma_like: params.sigma_like,
            prior_mu: params.prior_mu,
            prior_sigma: params.prior_sigma,
            init_value: 1.0,
        })
    }

    /// Build the projector for `stack` and wrap it in a model.
    pub fn from_stack(
        stack: &ProjectionStack,
        dims: Dims,
        pitch_mm: f64,
        params: PriorParams,
    ) -> Result<Self> {
        let projector = Projector::new(stack.geometry().clone(), dims, pitch_mm)?;
        Self::new(Arc::new(projector), stack.values().to_vec(), params)
    }

    pub fn with_init_value(mut self, init_value: f64) -> Result<Self> {
        if !(init_value.is_finite() && init_value > 0.0) {
            return Err(Error::invalid("initial activity must be positive"));
        }
        self.init_value = init_value;
        Ok(self)
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn geometry(&self) -> &DetectorGeometry {
        self.projector.geometry()
    }

    pub fn dims(&self) -> Dims {
        self.projector.dims()
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn params(&self) -> PriorParams {
        PriorParams {
            sigma_like: self.sigma_like,
            prior_mu: self.prior_mu,
            prior_sigma: self.prior_sigma,
        }
    }

    fn check_positive(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.projector.num_voxels() {
            return Err(Error::invalid("activity vector has the wrong length"));
        }
        if let Some(v) = f.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!(
                "activities must be strictly positive, found {v}"
            )));
        }
        Ok(())
    }

    /// `log N(g; Af, σ²) + Σ_j log TruncNormal₀(f_j; μ, s)`; the evidence term is omitted.
    pub fn log_posterior(&self, f: &[f64]) -> Result<f64> {
        self.check_positive(f)?;
        let mut grad = vec![0.0; f.len()];
        Ok(self.log_posterior_grad_unchecked(f, &mut grad, false))
    }

    pub fn grad_log_posterior(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_positive(f)?;
        let mut grad = vec![0.0; f.len()];
        self.log_posterior_grad_unchecked(f, &mut grad, true);
        Ok(grad)
    }

    /// Log-likelihood part only (with its Gaussian normalisation).
    pub fn log_likelihood(&self, f: &[f64]) -> f64 {
        let af = self.projector.forward(f);
        let m = self.observed.len() as f64;
        let sq: f64 = self
            .observed
            .iter()
            .zip(&af)
            .map(|(g, a)| (g - a) * (g - a))
            .sum();
        -sq / (2.0 * self.sigma_like * self.sigma_like) - m * (self.sigma_like.ln() + 0.5 * LN_2PI)
    }

    /// Log normaliser of the zero-truncated prior, per voxel.
    fn prior_log_norm(&self) -> f64 {
        // P(X > 0) for X ~ N(μ, s) is ½·erfc(−μ / (s√2))
        let mass = 0.5 * erfc(-self.prior_mu / (self.prior_sigma * std::f64::consts::SQRT_2));
        -(self.prior_sigma.ln() + 0.5 * LN_2PI) - mass.ln()
    }

    fn log_posterior_grad_unchecked(&self, f: &[f64], grad: &mut [f64], want_grad: bool) -> f64 {
        let af = self.projector.forward(f);
        let inv_var = 1.0 / (self.sigma_like * self.sigma_like);
        let residual: Vec<f64> = self.observed.iter().zip(&af).map(|(g, a)| g - a).collect();
        let sq: f64 = residual.iter().map(|r| r * r).sum();
        let m = self.observed.len() as f64;
        let mut logp = -0.5 * sq * inv_var - m * (self.sigma_like.ln() + 0.5 * LN_2PI);

        let inv_prior_var = 1.0 / (self.prior_sigma * self.prior_sigma);
        let prior_quad: f64 = f
            .iter()
            .map(|&x| (x - self.prior_mu) * (x - self.prior_mu))
            .sum();
        logp += -0.5 * prior_quad * inv_prior_var + f.len() as f64 * self.prior_log_norm();

        if want_grad {
            self.projector.adjoint_into(&residual, grad);
            for (gj, &fj) in grad.iter_mut().zip(f) {
                *gj = *gj * inv_var - (fj - self.prior_mu) * inv_prior_var;
            }
        }
        logp
    }
}

impl LogDensity for PosteriorModel {
    fn dim(&self) -> usize {
        self.projector.num_voxels()
    }

    /// Density of `x = log f`: `log p(exp x) + Σ x_j`, gradient by the chain rule.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let f = from_unconstrained(x);
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::NEG_INFINITY;
        }
        let lp = self.log_posterior_grad_unchecked(&f, grad, true);
        for (g, fj) in grad.iter_mut().zip(&f) {
            *g = *g * fj + 1.0;
        }
        lp + log_jacobian(x)
    }

    fn constrain(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v.exp();
        }
    }

    fn initial_position(&self) -> Vec<f64> {
        vec![self.init_value.ln(); self.dim()]
    }
}

/// `x = ln f`. Every entry must be positive.
pub fn to_unconstrained(f: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = f.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!(
            "cannot take the log of nonpositive activity {v}"
        )));
    }
    Ok(f.iter().map(|v| v.ln()).collect())
}

pub fn from_unconstrained(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.exp()).collect()
}

/// `log |det ∂f/∂x| = Σ_j x_j` for the elementwise exponential.
pub fn log_jacobian(x: &[f64]) -> f64 {
    x.iter().sum()
}
