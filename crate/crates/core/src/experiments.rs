//! Experiment pipelines behind `spect-bayes run`.
//!
//! Every pipeline writes CSV or raw+JSON artifacts under the output directory and finishes
//! with `manifest.json`, which records the resolved config and a SHA-256 per artifact.
//! Nothing time- or host-dependent is written, so reruns with the same config are
//! byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bayes::{diagnostics, pool_chains, run_chains, PosteriorModel, SampleChain};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};
use crate::io;
use crate::phantoms::{make_point_source, make_shepp_logan_3d};
use crate::projector::{angles_from_step, DetectorGeometry, ProjectionStack};
use crate::recon::{map_reconstruct, mlem_reconstruct};
use crate::uncertainty::{
    build_histogram, central_profile, fit_gaussian, fwhm_from_fit, mean_of_variances,
    posterior_mean, relative_norm, voxel_variance, Axis, GaussianFit, FWHM_PER_SIGMA,
};

/// Scalar metrics of one posterior reconstruction (`report.json`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Report {
    pub relative_norm: f64,
    pub mean_of_variances: f64,
    /// `None` when the central profile admits no Gaussian fit.
    pub fwhm_mm: Option<f64>,
    pub fwhm_voxels: Option<f64>,
    pub central_voxel_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ChainStats {
    pub seed: u64,
    pub step_size: f64,
    pub accept_stat_mean: f64,
    pub divergence_count: usize,
    pub warmup_divergence_count: usize,
    pub mean_tree_depth: f64,
    pub gradient_evaluations: u64,
}

/// `sampler_stats.json`: per-chain adaptation results and central-voxel diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SamplerStats {
    pub chains: Vec<ChainStats>,
    pub central_voxel_rhat: f64,
    pub central_voxel_ess: f64,
}

/// Outcome of one posterior reconstruction, kept in memory for tables.
#[derive(Debug, Clone)]
pub struct PosteriorRun {
    pub report: Report,
    pub mean: VoxelGrid,
    pub variance: Vec<f64>,
    pub chains: Vec<SampleChain>,
    pub fit: Option<GaussianFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub version: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

/// One row of `comparison_table.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub size: usize,
    pub map: f64,
    pub mlem: f64,
    pub ppr: f64,
    pub mlem_iters: usize,
    pub ppr_gradient_evaluations: u64,
}

/// Results of a finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    /// Per step angle (sweep) or single entry (other experiments).
    pub reports: Vec<(f64, Report)>,
    pub comparison: Vec<ComparisonRow>,
}

/// Files written by a run, recorded for the manifest.
#[derive(Debug)]
pub struct ArtifactSet {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl ArtifactSet {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> PathBuf {
        self.root.clone()
    }

    pub fn subdir(&mut self, name: &str) -> Result<PathBuf> {
        let d = self.root.join(name);
        std::fs::create_dir_all(&d)?;
        Ok(d)
    }

    pub fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.files.extend(paths);
    }

    /// Hash every recorded file and write `manifest.json` at the root.
    pub fn manifest(mut self, config: &ExperimentConfig) -> Result<Manifest> {
        self.files.sort();
        self.files.dedup();
        let mut artifacts = Vec::with_capacity(self.files.len());
        for f in &self.files {
            let bytes = std::fs::read(f)?;
            let rel = f.strip_prefix(&self.root).unwrap_or(f);
            artifacts.push(ArtifactEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            experiment: config.experiment,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            artifacts,
        };
        io::save_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

/// Validate the config and run the selected experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut art = ArtifactSet::new(&config.output_dir)?;
    let mut reports = Vec::new();
    let mut comparison = Vec::new();
    match config.experiment {
        Experiment::PointSourceSweep => reports = run_point_source_sweep(config, &mut art)?,
        Experiment::AlgorithmComparison => {
            comparison = run_algorithm_comparison(config, &mut art)?
        }
        Experiment::SheppLogan => {
            let phantom = make_shepp_logan_3d(config.dims, config.pitch_mm)?;
            reports.push((config.step_deg, run_phantom(config, &phantom, &mut art)?));
        }
        Experiment::Custom => {
            let path = config
                .phantom_path
                .as_ref()
                .ok_or_else(|| Error::Config("custom experiment needs phantom_path".into()))?;
            let phantom = load_phantom(path)?;
            reports.push((config.step_deg, run_phantom(config, &phantom, &mut art)?));
        }
    }
    let output_dir = art.root.clone();
    let manifest = art.manifest(config)?;
    Ok(RunOutput {
        output_dir,
        manifest,
        reports,
        comparison,
    })
}

/// `<dir>/<name>.f64raw` + `<dir>/<name>.json`, given as `<dir>/<name>` with or without
/// an extension.
fn load_phantom(path: &Path) -> Result<VoxelGrid> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad phantom_path {}", path.display())))?;
    io::load_volume(dir, name)
}

fn step_label(step: f64) -> String {
    format!("step_{step}deg")
}

/// Point-source posterior and reports for each step angle.
pub fn run_point_source_sweep(
    config: &ExperimentConfig,
    art: &mut ArtifactSet,
) -> Result<Vec<(f64, Report)>> {
    let phantom = make_point_source(config.dims, config.point_value, config.pitch_mm)?;
    let mut out = Vec::new();
    for &step in &config.step_angles_deg {
        let dir = art.subdir(&step_label(step))?;
        let stack = acquire(&phantom, step, config.coverage_deg)?;
        art.record(io::save_stack(&dir, "projections", &stack)?);
        let run = posterior_reconstruction(config, &phantom, &stack, &dir, art)?;
        out.push((step, run.report));
    }
    let root = art.root();
    let fwhm = root.join("fwhm_table.csv");
    io::write_csv(
        &fwhm,
        &["step_deg", "fwhm_voxels", "fwhm_mm"],
        out.iter().map(|(s, r)| {
            [
                s.to_string(),
                opt_str(r.fwhm_voxels),
                opt_str(r.fwhm_mm),
            ]
        }),
    )?;
    let var = root.join("variance_table.csv");
    io::write_csv(
        &var,
        &[
            "step_deg",
            "central_voxel_variance",
            "mean_of_variances",
            "relative_norm",
        ],
        out.iter().map(|(s, r)| {
            [
                *s,
                r.central_voxel_variance,
                r.mean_of_variances,
                r.relative_norm,
            ]
        }),
    )?;
    art.record([fwhm, var]);
    Ok(out)
}

/// MLEM, MAP and posterior-mean reconstructions of a point source at each cube size.
///
/// MLEM and MAP get one iteration per sampler gradient evaluation of a single chain,
/// since both cost one forward and one adjoint projection.
pub fn run_algorithm_comparison(
    config: &ExperimentConfig,
    art: &mut ArtifactSet,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for &n in &config.comparison_sizes {
        let dims = Dims::cube(n);
        let dir = art.subdir(&format!("size_{n}"))?;
        let phantom = make_point_source(dims, config.point_value, config.pitch_mm)?;
        let stack = acquire(&phantom, config.step_deg, config.coverage_deg)?;
        let sized = ExperimentConfig {
            dims,
            ..config.clone()
        };
        let ppr = posterior_reconstruction(&sized, &phantom, &stack, &dir, art)?;
        let evals = ppr.chains.iter().map(|c| c.gradient_evaluations).sum::<u64>()
            / ppr.chains.len() as u64;
        let iters = config.iterative.max_iters.max(evals as usize);
        let icfg = crate::recon::IterativeConfig {
            max_iters: iters,
            ..config.iterative.clone()
        };
        let mlem = mlem_reconstruct(&stack, dims, config.pitch_mm, &icfg, Some(&phantom))?;
        let map = map_reconstruct(&stack, dims, config.pitch_mm, &icfg, Some(&phantom))?;
        for (name, grid) in [
            ("phantom", &phantom),
            ("mlem", &mlem.estimate),
            ("map", &map.estimate),
            ("ppr", &ppr.mean),
        ] {
            let p = dir.join(format!("slice_{name}.csv"));
            write_slice_csv(&p, grid)?;
            art.record([p]);
        }
        let pm = dir.join("mlem_metrics.csv");
        mlem.write_metrics_csv(&pm)?;
        let pa = dir.join("map_metrics.csv");
        map.write_metrics_csv(&pa)?;
        art.record([pm, pa]);
        rows.push(ComparisonRow {
            size: n,
            map: relative_norm(&phantom, &map.estimate)?,
            mlem: relative_norm(&phantom, &mlem.estimate)?,
            ppr: ppr.report.relative_norm,
            mlem_iters: iters,
            ppr_gradient_evaluations: evals,
        });
    }
    let t = art.root().join("comparison_table.csv");
    io::write_csv(
        &t,
        &["dims", "map", "mlem", "ppr"],
        rows.iter().map(|r| {
            [
                Dims::cube(r.size).to_string(),
                r.map.to_string(),
                r.mlem.to_string(),
                r.ppr.to_string(),
            ]
        }),
    )?;
    let b = art.root().join("budget.csv");
    io::write_csv(
        &b,
        &["dims", "em_iterations", "gradient_evaluations_per_chain"],
        rows.iter().map(|r| {
            [
                Dims::cube(r.size).to_string(),
                r.mlem_iters.to_string(),
                r.ppr_gradient_evaluations.to_string(),
            ]
        }),
    )?;
    art.record([t, b]);
    Ok(rows)
}

/// Posterior reconstruction of an arbitrary phantom at `config.step_deg`, with the
/// original and mean central slices.
pub fn run_phantom(
    config: &ExperimentConfig,
    phantom: &VoxelGrid,
    art: &mut ArtifactSet,
) -> Result<Report> {
    let sized = ExperimentConfig {
        dims: phantom.dims(),
        pitch_mm: phantom.pitch_mm(),
        ..config.clone()
    };
    let dir = art.root();
    let stack = acquire(phantom, config.step_deg, config.coverage_deg)?;
    art.record(io::save_stack(&dir, "projections", &stack)?);
    art.record(io::save_volume(&dir, "phantom", phantom)?);
    let run = posterior_reconstruction(&sized, phantom, &stack, &dir, art)?;
    let p = dir.join("slice_original.csv");
    write_slice_csv(&p, phantom)?;
    art.record([p]);
    Ok(run.report)
}

/// Projections of `phantom` over `coverage` degrees at `step` increments.
pub fn acquire(phantom: &VoxelGrid, step: f64, coverage: f64) -> Result<ProjectionStack> {
    let geometry = DetectorGeometry::for_grid(
        phantom.dims(),
        phantom.pitch_mm(),
        angles_from_step(step, coverage)?,
    )?;
    crate::projector::forward_project(phantom, &geometry)
}

/// Sample the posterior for `stack`, write chain, volume, figure and report artifacts into
/// `dir`, and return the in-memory results.
pub fn posterior_reconstruction(
    config: &ExperimentConfig,
    phantom: &VoxelGrid,
    stack: &ProjectionStack,
    dir: &Path,
    art: &mut ArtifactSet,
) -> Result<PosteriorRun> {
    let dims = config.dims;
    let pitch = config.pitch_mm;
    let model = PosteriorModel::from_stack(stack, dims, pitch, config.model.into())?;
    let chains = run_chains(&model, &config.sampler, config.num_chains)?;
    let pooled = pool_chains(&chains)?;

    let center = dims.center_index();
    let mut trace_rows = Vec::new();
    for (k, c) in chains.iter().enumerate() {
        art.record(io::save_chain(dir, &format!("chain_{k}"), c)?);
        let p = dir.join(format!("step_size_chain_{k}.csv"));
        c.write_step_size_csv(&p)?;
        art.record([p]);
        for (i, v) in c.trace(center).into_iter().enumerate() {
            trace_rows.push([k.to_string(), i.to_string(), v.to_string()]);
        }
    }
    let p = dir.join("central_voxel_trace.csv");
    io::write_csv(&p, &["chain", "draw", "value"], trace_rows)?;
    art.record([p]);

    let central_trace = pooled.trace(center);
    let mut hist = build_histogram(&central_trace, config.histogram_bins)?;
    hist.label = "central_voxel".into();
    let p = dir.join("central_voxel_histogram.csv");
    hist.write_csv(&p)?;
    art.record([p]);

    let mean = posterior_mean(&pooled, dims, pitch)?;
    let variance = voxel_variance(&pooled)?;
    let mov = mean_of_variances(&variance)?;
    art.record(io::save_volume(dir, "posterior_mean", &mean)?);
    art.record(io::save_volume_values(dir, "posterior_variance", dims, pitch, &variance)?);
    let p = dir.join("slice_posterior_mean.csv");
    write_slice_csv(&p, &mean)?;
    art.record([p]);
    let mut vhist = build_histogram(&variance, config.histogram_bins)?;
    vhist.label = "voxel_variance".into();
    let p = dir.join("variance_histogram.csv");
    vhist.write_csv(&p)?;
    art.record([p]);

    let (coords_mm, values) = central_profile(&mean, Axis::X);
    let coords: Vec<f64> = coords_mm.iter().map(|c| c / pitch).collect();
    let fit = fit_gaussian(&values, &coords).ok();
    let p = dir.join("profile_fit.csv");
    io::write_csv(
        &p,
        &["coord_mm", "coord_voxels", "value", "fit"],
        coords_mm.iter().zip(&coords).zip(&values).map(|((m, c), v)| {
            [
                m.to_string(),
                c.to_string(),
                v.to_string(),
                opt_str(fit.map(|f| f.eval(*c))),
            ]
        }),
    )?;
    art.record([p]);

    let report = Report {
        relative_norm: relative_norm(phantom, &mean)?,
        mean_of_variances: mov,
        fwhm_mm: fit.map(|f| fwhm_from_fit(&f, pitch)).transpose()?,
        fwhm_voxels: fit.map(|f| FWHM_PER_SIGMA * f.sigma_fit),
        central_voxel_variance: variance[center],
    };
    let p = dir.join("report.json");
    io::save_json(&p, &report)?;
    art.record([p]);

    let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.trace(center)).collect();
    let stats = SamplerStats {
        chains: chains
            .iter()
            .map(|c| ChainStats {
                seed: c.seed,
                step_size: c.step_size,
                accept_stat_mean: c.accept_stat_mean,
                divergence_count: c.divergence_count,
                warmup_divergence_count: c.warmup_divergence_count,
                mean_tree_depth: c.mean_tree_depth,
                gradient_evaluations: c.gradient_evaluations,
            })
            .collect(),
        central_voxel_rhat: diagnostics::split_rhat(&traces),
        central_voxel_ess: diagnostics::effective_sample_size(&traces),
    };
    let p = dir.join("sampler_stats.json");
    io::save_json(&p, &stats)?;
    art.record([p]);

    Ok(PosteriorRun {
        report,
        mean,
        variance,
        chains,
        fit,
    })
}

/// Central z-slice as `x,y,value` rows.
pub fn write_slice_csv(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let d = grid.dims();
    let cz = d.center().2;
    io::write_csv(
        path,
        &["x", "y", "value"],
        (0..d.1).flat_map(|y| {
            (0..d.0).map(move |x| [x.to_string(), y.to_string(), grid.get(x, y, cz).to_string()])
        }),
    )
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
