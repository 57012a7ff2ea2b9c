//! Experiment configuration: one JSON document, every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{NutsConfig, PriorParams};
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::recon::IterativeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    PointSourceSweep,
    AlgorithmComparison,
    SheppLogan,
    Custom,
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Experiment::PointSourceSweep => "point_source_sweep",
            Experiment::AlgorithmComparison => "algorithm_comparison",
            Experiment::SheppLogan => "shepp_logan",
            Experiment::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sigma_like: f64,
    pub prior_mu: f64,
    pub prior_sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = PriorParams::default();
        Self {
            sigma_like: p.sigma_like,
            prior_mu: p.prior_mu,
            prior_sigma: p.prior_sigma,
        }
    }
}

impl From<ModelConfig> for PriorParams {
    fn from(m: ModelConfig) -> Self {
        PriorParams {
            sigma_like: m.sigma_like,
            prior_mu: m.prior_mu,
            prior_sigma: m.prior_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: Dims,
    pub pitch_mm: f64,
    /// Step angles swept by `point_source_sweep`.
    pub step_angles_deg: Vec<f64>,
    /// Step angle for the single-acquisition experiments.
    pub step_deg: f64,
    pub coverage_deg: f64,
    /// Activity of the point-source voxel.
    pub point_value: f64,
    /// Cube sizes compared by `algorithm_comparison`.
    pub comparison_sizes: Vec<usize>,
    pub sampler: NutsConfig,
    pub num_chains: usize,
    pub model: ModelConfig,
    pub iterative: IterativeConfig,
    pub histogram_bins: usize,
    pub output_dir: PathBuf,
    /// Volume pair `<path>.f64raw` + `<path>.json` reconstructed by `custom`.
    pub phantom_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::PointSourceSweep,
            dims: Dims::cube(8),
            pitch_mm: 1.0,
            step_angles_deg: vec![2.0, 5.0, 10.0],
            step_deg: 5.0,
            coverage_deg: 180.0,
            point_value: 10.0,
            comparison_sizes: vec![4, 8, 16],
            sampler: NutsConfig {
                num_warmup: 500,
                num_samples: 500,
                ..NutsConfig::default()
            },
            num_chains: 2,
            model: ModelConfig::default(),
            iterative: IterativeConfig::default(),
            histogram_bins: crate::uncertainty::DEFAULT_HISTOGRAM_BINS,
            output_dir: PathBuf::from("out"),
            phantom_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.dims.validate().map_err(cfg)?;
        if !(self.pitch_mm.is_finite() && self.pitch_mm > 0.0) {
            return Err(Error::Config("pitch_mm must be positive".into()));
        }
        if !(self.coverage_deg > 0.0 && self.coverage_deg <= 360.0) {
            return Err(Error::Config("coverage_deg must lie in (0, 360]".into()));
        }
        let steps: Vec<f64> = match self.experiment {
            Experiment::PointSourceSweep => self.step_angles_deg.clone(),
            _ => vec![self.step_deg],
        };
        if steps.is_empty() {
            return Err(Error::Config("step_angles_deg must not be empty".into()));
        }
        for s in steps {
            crate::projector::angles_from_step(s, self.coverage_deg).map_err(cfg)?;
        }
        if !(self.point_value.is_finite() && self.point_value > 0.0) {
            return Err(Error::Config("point_value must be positive".into()));
        }
        if self.experiment == Experiment::AlgorithmComparison
            && (self.comparison_sizes.is_empty() || self.comparison_sizes.contains(&0))
        {
            return Err(Error::Config("comparison_sizes must be positive".into()));
        }
        if self.experiment == Experiment::SheppLogan
            && self.dims.as_array().iter().any(|&n| n < crate::phantoms::SHEPP_LOGAN_MIN_DIM)
        {
            return Err(Error::Config(format!(
                "shepp_logan needs at least {} voxels per axis",
                crate::phantoms::SHEPP_LOGAN_MIN_DIM
            )));
        }
        if self.experiment == Experiment::Custom && self.phantom_path.is_none() {
            return Err(Error::Config("custom experiment needs phantom_path".into()));
        }
        self.sampler.validate().map_err(cfg)?;
        if self.sampler.num_samples < 2 {
            return Err(Error::Config("num_samples must be at least 2 for variances".into()));
        }
        if self.num_chains == 0 {
            return Err(Error::Config("num_chains must be at least 1".into()));
        }
        crate::bayes::PosteriorModel::new(
            std::sync::Arc::new(crate::projector::Projector::new(
                crate::projector::DetectorGeometry::new(1, 1, 1.0, vec![0.0]).map_err(cfg)?,
                Dims::cube(1),
                1.0,
            )
            .map_err(cfg)?),
            vec![0.0],
            self.model.into(),
        )
        .map_err(cfg)?;
        self.iterative.validate().map_err(cfg)?;
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.validate().is_ok());
        assert_eq!(c.dims, Dims::cube(8));
        assert_eq!(c.num_chains, 2);
        assert_eq!(c.sampler.num_warmup, 500);
    }

    #[test]
    fn partial_documents_merge_with_defaults() {
        let c = ExperimentConfig::from_json_str(
            r#"{"experiment": "shepp_logan", "dims": [16, 16, 16], "sampler": {"seed": 9}}"#,
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::SheppLogan);
        assert_eq!(c.sampler.seed, 9);
        assert_eq!(c.sampler.num_samples, 1000);
    }

    #[test]
    fn invalid_documents() {
        assert!(ExperimentConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
        let zero_dim = ExperimentConfig::from_json_str(r#"{"dims": [0, 8, 8]}"#).unwrap();
        assert!(zero_dim.validate().is_err());
        let zero_samples =
            ExperimentConfig::from_json_str(r#"{"sampler": {"num_samples": 0}}"#).unwrap();
        assert!(zero_samples.validate().is_err());
        let bad_sigma =
            ExperimentConfig::from_json_str(r#"{"model": {"sigma_like": 0}}"#).unwrap();
        assert!(bad_sigma.validate().is_err());
        let custom = ExperimentConfig::from_json_str(r#"{"experiment": "custom"}"#).unwrap();
        assert!(custom.validate().is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&s).unwrap(), c);
    }
}
