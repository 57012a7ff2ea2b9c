//! Deterministic reconstruction baselines.

mod iterative;

pub use iterative::{
    art_reconstruct, data_fidelity, em_subsets, map_reconstruct, mlem_reconstruct,
    osem_reconstruct, poisson_log_likelihood, smoothness_gradient, IterationMetric,
    IterativeConfig, ReconResult,
};
