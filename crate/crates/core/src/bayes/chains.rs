use crate::error::{Error, Result};
use crate::par;

use super::model::LogDensity;
use super::nuts::{nuts_sample, NutsConfig};
use super::SampleChain;

/// Run `num_chains` independent chains, chain `k` seeded with `config.seed + k`.
///
/// Chains run concurrently; each is deterministic in its seed, so the output equals a
/// sequential chain-by-chain run regardless of scheduling.
pub fn run_chains<T: LogDensity + ?Sized>(
    target: &T,
    config: &NutsConfig,
    num_chains: usize,
) -> Result<Vec<SampleChain>> {
    if num_chains == 0 {
        return Err(Error::invalid("num_chains must be at least 1"));
    }
    config.validate()?;
    par::map_range(num_chains, |k| {
        let cfg = NutsConfig {
            seed: config.seed.wrapping_add(k as u64),
            ..config.clone()
        };
        nuts_sample(target, &cfg)
    })
    .into_iter()
    .collect()
}

/// Concatenate chains (same dimension) into one pooled chain. Adaptation metadata is
/// summed or averaged; the step-size trace of the first chain is kept.
pub fn pool_chains(chains: &[SampleChain]) -> Result<SampleChain> {
    let first = chains
        .first()
        .ok_or_else(|| Error::invalid("no chains to pool"))?;
    if chains.iter().any(|c| c.num_voxels != first.num_voxels) {
        return Err(Error::invalid("chains have different dimensions"));
    }
    let mut pooled = first.clone();
    for c in &chains[1..] {
        pooled.samples.extend_from_slice(&c.samples);
        pooled.divergence_count += c.divergence_count;
        pooled.warmup_divergence_count += c.warmup_divergence_count;
        pooled.gradient_evaluations += c.gradient_evaluations;
    }
    let n = chains.len() as f64;
    pooled.accept_stat_mean = chains.iter().map(|c| c.accept_stat_mean).sum::<f64>() / n;
    pooled.mean_tree_depth = chains.iter().map(|c| c.mean_tree_depth).sum::<f64>() / n;
    Ok(pooled)
}
