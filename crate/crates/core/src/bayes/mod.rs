//! Bayesian reconstruction: the activity posterior and a self-contained NUTS engine.

mod chains;
pub mod diagnostics;
mod hmc;
mod model;
mod nuts;
pub mod targets;

pub use chains::{pool_chains, run_chains};
pub use hmc::{hamiltonian, leapfrog, ChainState, Metric};
pub use model::{
    from_unconstrained, log_jacobian, to_unconstrained, LogDensity, PosteriorModel, PriorParams,
};
pub use nuts::{
    nuts_sample, AutoKeyword, DualAveraging, NutsConfig, NutsSampler, StepSizeEntry,
    StepSizeInit, Transition, MAX_ENERGY_ERROR,
};

use crate::error::{Error, Result};

/// Post-warmup draws (rows) in the target's constrained space, plus adaptation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleChain {
    samples: Vec<f64>,
    num_voxels: usize,
    pub step_size_trace: Vec<StepSizeEntry>,
    pub divergence_count: usize,
    pub warmup_divergence_count: usize,
    pub accept_stat_mean: f64,
    /// Step size used for the post-warmup draws.
    pub step_size: f64,
    pub mean_tree_depth: f64,
    /// Leapfrog steps over warmup and sampling, one gradient evaluation each.
    pub gradient_evaluations: u64,
    pub inv_mass: Vec<f64>,
    pub seed: u64,
}

impl SampleChain {
    /// Wrap externally produced draws (no adaptation metadata).
    pub fn from_rows(rows: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let num_voxels = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != num_voxels) {
            return Err(Error::invalid("sample rows differ in length"));
        }
        Ok(Self {
            samples: rows.concat(),
            num_voxels,
            step_size_trace: Vec::new(),
            divergence_count: 0,
            warmup_divergence_count: 0,
            accept_stat_mean: 0.0,
            step_size: 0.0,
            mean_tree_depth: 0.0,
            gradient_evaluations: 0,
            inv_mass: Vec::new(),
            seed,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn num_voxels(&self) -> usize {
        self.num_voxels
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len().checked_div(self.num_voxels).unwrap_or(0)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.num_voxels..(i + 1) * self.num_voxels]
    }

    pub fn iter_samples(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.num_voxels.max(1))
    }

    /// Draws of one coordinate, in order.
    pub fn trace(&self, voxel: usize) -> Vec<f64> {
        self.iter_samples().map(|s| s[voxel]).collect()
    }

    pub fn write_step_size_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["iteration", "step_size", "adapted_step_size"],
            self.step_size_trace.iter().enumerate().map(|(i, e)| {
                [
                    i.to_string(),
                    e.step_size.to_string(),
                    e.adapted_step_size.to_string(),
                ]
            }),
        )
    }
}
