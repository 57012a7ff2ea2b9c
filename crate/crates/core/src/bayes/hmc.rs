//! Hamiltonian dynamics: phase-space state, kinetic energy and the leapfrog integrator.

use crate::error::{Error, Result};

use super::model::LogDensity;

/// A point in phase space with cached log density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

impl ChainState {
    /// Evaluate the target at `position`; momentum starts at zero.
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>) -> Result<Self> {
        if position.len() != target.dim() {
            return Err(Error::invalid(format!(
                "position has {} entries, target dimension is {}",
                position.len(),
                target.dim()
            )));
        }
        let mut gradient = vec![0.0; position.len()];
        let log_density = target.log_density_grad(&position, &mut gradient);
        Ok(Self {
            momentum: vec![0.0; position.len()],
            position,
            log_density,
            gradient,
        })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Whether the cached log density and gradient are usable.
    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Diagonal Euclidean metric, stored as the inverse mass (posterior-variance scale).
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub inv_mass: Vec<f64>,
}

impl Metric {
    pub fn unit(dim: usize) -> Self {
        Self {
            inv_mass: vec![1.0; dim],
        }
    }

    pub fn kinetic_energy(&self, momentum: &[f64]) -> f64 {
        0.5 * momentum
            .iter()
            .zip(&self.inv_mass)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    /// `M⁻¹ p`.
    pub fn velocity(&self, momentum: &[f64]) -> Vec<f64> {
        momentum
            .iter()
            .zip(&self.inv_mass)
            .map(|(p, m)| p * m)
            .collect()
    }
}

/// `H = −log π(x) + ½ pᵀ M⁻¹ p`.
pub fn hamiltonian(state: &ChainState, metric: &Metric) -> f64 {
    -state.log_density + metric.kinetic_energy(&state.momentum)
}

/// One leapfrog step: half kick, drift, half kick.
///
/// A negative `step_size` integrates backward in time. A non-finite log density at the
/// new position is returned as is; callers treat it as a divergence.
pub fn leapfrog<T: LogDensity + ?Sized>(
    state: &ChainState,
    step_size: f64,
    target: &T,
    metric: &Metric,
) -> ChainState {
    let half = 0.5 * step_size;
    let mut momentum: Vec<f64> = state
        .momentum
        .iter()
        .zip(&state.gradient)
        .map(|(p, g)| p + half * g)
        .collect();
    let position: Vec<f64> = state
        .position
        .iter()
        .zip(&momentum)
        .zip(&metric.inv_mass)
        .map(|((x, p), m)| x + step_size * m * p)
        .collect();
    let mut gradient = vec![0.0; position.len()];
    let log_density = target.log_density_grad(&position, &mut gradient);
    if log_density.is_finite() {
        for (p, g) in momentum.iter_mut().zip(&gradient) {
            *p += half * g;
        }
    }
    ChainState {
        position,
        momentum,
        log_density,
        gradient,
    }
}
