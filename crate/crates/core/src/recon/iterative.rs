//! ART, MLEM, OSEM and one-step-late MAP-EM.
//!
//! All solvers run on a cached [`Projector`]; `A` is never densified. The EM family shares
//! one update kernel so that the degenerate cases (one subset, `beta = 0`) reproduce MLEM
//! bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};
use crate::projector::{ProjectionStack, Projector};
use crate::uncertainty::relative_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterativeConfig {
    pub max_iters: usize,
    pub init_value: f64,
    /// MAP smoothing weight.
    pub beta: f64,
    /// OSEM subset count.
    pub num_subsets: usize,
    /// Denominator guard.
    pub epsilon: f64,
    pub art_relaxation: f64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            init_value: 1.0,
            beta: 0.0,
            num_subsets: 1,
            epsilon: 1e-12,
            art_relaxation: 1.0,
        }
    }
}

impl IterativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.init_value.is_finite() && self.init_value >= 0.0) {
            return Err(Error::invalid("init_value must be finite and nonnegative"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta must be finite and nonnegative"));
        }
        if self.num_subsets == 0 {
            return Err(Error::invalid("num_subsets must be positive"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.art_relaxation > 0.0 && self.art_relaxation <= 1.0) {
            return Err(Error::invalid("art_relaxation must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetric {
    pub iteration: usize,
    pub data_fidelity: f64,
    pub relative_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub estimate: VoxelGrid,
    pub per_iteration_metrics: Vec<IterationMetric>,
    /// MAP voxel updates skipped because the regularised denominator was not positive.
    pub skipped_updates: usize,
}

impl ReconResult {
    pub fn write_metrics_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["iteration", "data_fidelity", "relative_norm"],
            self.per_iteration_metrics.iter().map(|m| {
                [
                    m.iteration.to_string(),
                    m.data_fidelity.to_string(),
                    m.relative_norm.map(|r| r.to_string()).unwrap_or_default(),
                ]
            }),
        )
    }
}

/// `Σ (g_obs − g_est)²`.
pub fn data_fidelity(observed: &ProjectionStack, estimated: &ProjectionStack) -> Result<f64> {
    let (a, b) = (observed.geometry(), estimated.geometry());
    if a.nu != b.nu || a.nv != b.nv || a.num_angles() != b.num_angles() {
        return Err(Error::invalid("projection stacks have different shapes"));
    }
    Ok(sum_sq_diff(observed.values(), estimated.values()))
}

fn sum_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Poisson log-likelihood `Σ_i g_i log(Af)_i − (Af)_i` over rays with positive expectation.
pub fn poisson_log_likelihood(observed: &[f64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&g, &e)| if g > 0.0 { g * e.ln() - e } else { -e })
        .sum()
}

struct Tracker<'a> {
    truth: Option<&'a VoxelGrid>,
    metrics: Vec<IterationMetric>,
}

impl<'a> Tracker<'a> {
    fn new(truth: Option<&'a VoxelGrid>, dims: Dims, pitch: f64) -> Result<Self> {
        if let Some(t) = truth {
            if t.dims() != dims || t.pitch_mm() != pitch {
                return Err(Error::invalid("ground truth does not match the reconstruction grid"));
            }
        }
        Ok(Self {
            truth,
            metrics: Vec::new(),
        })
    }

    fn record(&mut self, iteration: usize, projector: &Projector, g: &[f64], f: &[f64]) {
        let data_fidelity = sum_sq_diff(g, &projector.forward(f));
        let relative_norm = self.truth.and_then(|t| {
            // truth was validated nonnegative; estimates are clamped before recording
            let est = VoxelGrid::new(t.dims(), t.pitch_mm(), f.to_vec()).ok()?;
            relative_norm(t, &est).ok()
        });
        self.metrics.push(IterationMetric {
            iteration,
            data_fidelity,
            relative_norm,
        });
    }
}

fn check_inputs(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
) -> Result<()> {
    config.validate()?;
    crate::grid::validate_layout(dims, pitch_mm)?;
    if stack.values().is_empty() {
        return Err(Error::invalid("projection stack is empty"));
    }
    Ok(())
}

fn check_nonnegative(stack: &ProjectionStack) -> Result<()> {
    if stack.values().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("EM reconstruction needs nonnegative projections"));
    }
    Ok(())
}

/// Kaczmarz-style ART: rays are swept in acquisition order, each update spreading the ray
/// residual over its voxels in proportion to their chord lengths
/// (`Δf_j = λ a_ij (g_i − a_i·f) / Σ_j a_ij²`). For unit chord lengths this is the classic
/// "residual divided by the voxel count" rule. Negative voxels are clamped after each sweep.
pub fn art_reconstruct(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ReconResult> {
    check_inputs(stack, dims, pitch_mm, config)?;
    let projector = Projector::new(stack.geometry().clone(), dims, pitch_mm)?;
    let g = stack.values();
    let mut tracker = Tracker::new(ground_truth, dims, pitch_mm)?;
    let mut f = vec![config.init_value; dims.len()];
    let norms: Vec<f64> = (0..projector.num_rays())
        .map(|i| projector.ray(i).1.iter().map(|l| l * l).sum())
        .collect();
    for it in 1..=config.max_iters {
        for (i, &norm) in norms.iter().enumerate() {
            if norm < config.epsilon {
                continue;
            }
            let (idx, len) = projector.ray(i);
            let ray_sum: f64 = idx.iter().zip(len).map(|(&j, &l)| l * f[j as usize]).sum();
            let scale = config.art_relaxation * (g[i] - ray_sum) / norm;
            for (&j, &l) in idx.iter().zip(len) {
                f[j as usize] += scale * l;
            }
        }
        for v in f.iter_mut() {
            *v = v.max(0.0);
        }
        tracker.record(it, &projector, g, &f);
    }
    Ok(ReconResult {
        estimate: VoxelGrid::new(dims, pitch_mm, f)?,
        per_iteration_metrics: tracker.metrics,
        skipped_updates: 0,
    })
}

/// One subset of an EM pass: its projector, its data and its sensitivity image.
struct EmSubset {
    projector: Projector,
    observed: Vec<f64>,
    sensitivity: Vec<f64>,
}

/// Round-robin partition of view indices: subset `s` holds views `s, s + S, s + 2S, …`.
pub fn em_subsets(num_angles: usize, num_subsets: usize) -> Result<Vec<Vec<usize>>> {
    if num_subsets == 0 || num_subsets > num_angles {
        return Err(Error::invalid(format!(
            "num_subsets must lie in 1..={num_angles}, got {num_subsets}"
        )));
    }
    Ok((0..num_subsets)
        .map(|s| (s..num_angles).step_by(num_subsets).collect())
        .collect())
}

/// Quadratic 6-neighbour smoothness gradient `R_j = Σ_{k∈N(j)} (f_j − f_k)` of the
/// energy `U(f) = ½ Σ_{j~k} (f_j − f_k)²`, summed once per neighbouring pair.
/// Neighbours outside the grid are ignored.
pub fn smoothness_gradient(dims: Dims, f: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = dims.as_array();
    let mut r = vec![0.0; f.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let j = dims.index(x, y, z);
                let fj = f[j];
                let mut acc = 0.0;
                if x > 0 {
                    acc += fj - f[j - 1];
                }
                if x + 1 < nx {
                    acc += fj - f[j + 1];
                }
                if y > 0 {
                    acc += fj - f[j - nx];
                }
                if y + 1 < ny {
                    acc += fj - f[j + nx];
                }
                if z > 0 {
                    acc += fj - f[j - nx * ny];
                }
                if z + 1 < nz {
                    acc += fj - f[j + nx * ny];
                }
                r[j] = acc;
            }
        }
    }
    r
}

/// Shared EM driver. `beta = 0` skips the regulariser entirely.
fn em_run(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
    num_subsets: usize,
    beta: f64,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ReconResult> {
    check_inputs(stack, dims, pitch_mm, config)?;
    check_nonnegative(stack)?;
    if config.init_value <= 0.0 {
        return Err(Error::invalid("EM needs a positive initial value"));
    }
    let partition = em_subsets(stack.geometry().num_angles(), num_subsets)?;
    let subsets = partition
        .iter()
        .map(|views| {
            let sub = if num_subsets == 1 {
                stack.clone()
            } else {
                stack.subset(views)?
            };
            let projector = Projector::new(sub.geometry().clone(), dims, pitch_mm)?;
            let sensitivity = projector.sensitivity();
            Ok(EmSubset {
                observed: sub.values().to_vec(),
                projector,
                sensitivity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // full-data projector for metrics and the observability mask
    let full = if num_subsets == 1 {
        subsets[0].projector.clone()
    } else {
        Projector::new(stack.geometry().clone(), dims, pitch_mm)?
    };
    let total_sens = if num_subsets == 1 {
        subsets[0].sensitivity.clone()
    } else {
        full.sensitivity()
    };
    let eps = config.epsilon;
    let mut f: Vec<f64> = total_sens
        .iter()
        .map(|&s| if s < eps { 0.0 } else { config.init_value })
        .collect();

    let mut tracker = Tracker::new(ground_truth, dims, pitch_mm)?;
    let mut skipped = 0usize;
    for it in 1..=config.max_iters {
        for sub in &subsets {
            let expected = sub.projector.forward(&f);
            let ratio: Vec<f64> = sub
                .observed
                .iter()
                .zip(&expected)
                .map(|(&g, &e)| if e < eps { 0.0 } else { g / e })
                .collect();
            let back = sub.projector.adjoint(&ratio);
            let penalty = if beta > 0.0 {
                Some(smoothness_gradient(dims, &f))
            } else {
                None
            };
            for j in 0..f.len() {
                if total_sens[j] < eps {
                    continue;
                }
                let denom = match &penalty {
                    Some(r) => sub.sensitivity[j] + beta * r[j],
                    None => sub.sensitivity[j],
                };
                if denom <= eps {
                    if penalty.is_some() && sub.sensitivity[j] >= eps {
                        skipped += 1;
                    }
                    continue;
                }
                f[j] = f[j] / denom * back[j];
            }
        }
        tracker.record(it, &full, stack.values(), &f);
    }
    Ok(ReconResult {
        estimate: VoxelGrid::new(dims, pitch_mm, f)?,
        per_iteration_metrics: tracker.metrics,
        skipped_updates: skipped,
    })
}

/// Multiplicative MLEM update
/// `f_j ← f_j / Σ_i a_ij · Σ_i a_ij g_i / (Σ_j' a_ij' f_j')`.
///
/// Rays whose expected count is below `epsilon` contribute nothing; voxels no ray sees
/// are fixed at zero.
pub fn mlem_reconstruct(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ReconResult> {
    em_run(stack, dims, pitch_mm, config, 1, 0.0, ground_truth)
}

/// Ordered-subset EM over a round-robin partition of the views.
pub fn osem_reconstruct(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ReconResult> {
    em_run(
        stack,
        dims,
        pitch_mm,
        config,
        config.num_subsets,
        0.0,
        ground_truth,
    )
}

/// One-step-late MAP-EM with the quadratic smoothness energy and weight `config.beta`.
///
/// Voxels whose denominator `Σ_i a_ij + β R_j` is not positive keep their value for that
/// iteration; the count is reported in [`ReconResult::skipped_updates`].
pub fn map_reconstruct(
    stack: &ProjectionStack,
    dims: Dims,
    pitch_mm: f64,
    config: &IterativeConfig,
    ground_truth: Option<&VoxelGrid>,
) -> Result<ReconResult> {
    em_run(stack, dims, pitch_mm, config, 1, config.beta, ground_truth)
}
