//! Posterior summaries: means, variances, histograms, Gaussian profile fits, FWHM and
//! the relative-norm accuracy metric.

use serde::{Deserialize, Serialize};

use crate::bayes::SampleChain;
use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};

/// `2·√(2·ln 2)`: FWHM of a unit-sigma Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub label: String,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["bin_left", "bin_right", "count"],
            self.counts.iter().enumerate().map(|(i, c)| {
                [
                    self.bin_edges[i].to_string(),
                    self.bin_edges[i + 1].to_string(),
                    c.to_string(),
                ]
            }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma_fit: f64,
    pub rmse: f64,
}

impl GaussianFit {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.sigma_fit;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport {
    pub mean_volume: VoxelGrid,
    pub variance_volume: Vec<f64>,
    pub mean_of_variances: f64,
    pub histogram_specs: Vec<Histogram>,
}

/// Build the report for pooled draws: mean and variance volumes plus a histogram of the
/// per-voxel variances.
pub fn summarize(chain: &SampleChain, dims: Dims, pitch_mm: f64) -> Result<UncertaintyReport> {
    let mean_volume = posterior_mean(chain, dims, pitch_mm)?;
    let variance_volume = voxel_variance(chain)?;
    let mean_of_variances = mean_of_variances(&variance_volume)?;
    let mut hist = build_histogram(&variance_volume, DEFAULT_HISTOGRAM_BINS)?;
    hist.label = "voxel_variance".into();
    Ok(UncertaintyReport {
        mean_volume,
        variance_volume,
        mean_of_variances,
        histogram_specs: vec![hist],
    })
}

pub fn posterior_mean(chain: &SampleChain, dims: Dims, pitch_mm: f64) -> Result<VoxelGrid> {
    let n = chain.num_samples();
    if n == 0 {
        return Err(Error::invalid("chain has no samples"));
    }
    if chain.num_voxels() != dims.len() {
        return Err(Error::invalid(format!(
            "chain has {} voxels, grid {dims} needs {}",
            chain.num_voxels(),
            dims.len()
        )));
    }
    let mut mean = vec![0.0; chain.num_voxels()];
    for s in chain.iter_samples() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let inv = 1.0 / n as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    VoxelGrid::new(dims, pitch_mm, mean)
}

/// Per-voxel unbiased (N − 1) sample variance, two-pass.
pub fn voxel_variance(chain: &SampleChain) -> Result<Vec<f64>> {
    let n = chain.num_samples();
    if n < 2 {
        return Err(Error::invalid("variance needs at least two samples"));
    }
    let d = chain.num_voxels();
    let mut mean = vec![0.0; d];
    for s in chain.iter_samples() {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = vec![0.0; d];
    for s in chain.iter_samples() {
        for ((acc, x), m) in ss.iter_mut().zip(s).zip(&mean) {
            let dx = x - m;
            *acc += dx * dx;
        }
    }
    Ok(ss.into_iter().map(|v| v / (n - 1) as f64).collect())
}

pub fn mean_of_variances(variances: &[f64]) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::invalid("no variances to average"));
    }
    Ok(variances.iter().sum::<f64>() / variances.len() as f64)
}

/// Uniform bins over `[min, max]`; bins are right-open except the last.
/// A constant input yields a single bin holding everything.
pub fn build_histogram(values: &[f64], num_bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::invalid("cannot histogram an empty set"));
    }
    if num_bins == 0 {
        return Err(Error::invalid("num_bins must be positive"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("histogram input must be finite"));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(Histogram {
            bin_edges: vec![lo, hi],
            counts: vec![values.len() as u64],
            label: String::new(),
        });
    }
    let width = (hi - lo) / num_bins as f64;
    let mut bin_edges: Vec<f64> = (0..=num_bins).map(|k| lo + k as f64 * width).collect();
    bin_edges[num_bins] = hi;
    let mut counts = vec![0u64; num_bins];
    for &v in values {
        let mut b = ((v - lo) / width).floor() as usize;
        if b >= num_bins {
            b = num_bins - 1;
        }
        // floating point can put a value one bin off at an edge
        while b > 0 && v < bin_edges[b] {
            b -= 1;
        }
        while b + 1 < num_bins && v >= bin_edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    Ok(Histogram {
        bin_edges,
        counts,
        label: String::new(),
    })
}

/// Least-squares fit of `a·exp(−(x−c)²/(2s²))`.
///
/// A weighted quadratic regression of `ln y` (weights `y²`) over the positive entries of
/// the peak lobe gives the starting point; up to 50 damped Gauss–Newton steps on the linear-domain
/// residual refine it.
pub fn fit_gaussian(profile: &[f64], coords: &[f64]) -> Result<GaussianFit> {
    if profile.len() != coords.len() {
        return Err(Error::invalid("profile and coordinates differ in length"));
    }
    if profile.len() < 4 {
        return Err(Error::invalid("gaussian fit needs at least four points"));
    }
    if profile.iter().chain(coords).any(|v| !v.is_finite()) {
        return Err(Error::invalid("profile must be finite"));
    }
    if profile.iter().all(|&y| y <= 0.0) {
        return Err(Error::FitFailure("profile has no positive entries".into()));
    }
    let (imax, _) = profile
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &y)| if y > acc.1 { (i, y) } else { acc });
    if imax == 0 || imax == profile.len() - 1 {
        return Err(Error::FitFailure("profile maximum is not interior".into()));
    }

    let lobe = peak_lobe(coords, profile, imax);
    let (mut a, mut c, mut s) = initial_guess(&lobe, coords, profile, imax);
    let sse = |a: f64, c: f64, s: f64| -> f64 {
        coords
            .iter()
            .zip(profile)
            .map(|(&x, &y)| {
                let z = (x - c) / s;
                let r = a * (-0.5 * z * z).exp() - y;
                r * r
            })
            .sum()
    };
    let mut cost = sse(a, c, s);
    for _ in 0..50 {
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = nalgebra::Vector3::<f64>::zeros();
        for (&x, &y) in coords.iter().zip(profile) {
            let z = (x - c) / s;
            let e = (-0.5 * z * z).exp();
            let r = a * e - y;
            let j = nalgebra::Vector3::new(e, a * e * z / s, a * e * z * z / s);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let Some(delta) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let (na, nc, ns) = (a + t * delta[0], c + t * delta[1], s + t * delta[2]);
            if ns > 0.0 && na.is_finite() {
                let nc_cost = sse(na, nc, ns);
                if nc_cost <= cost {
                    let rel = (cost - nc_cost) / cost.max(f64::MIN_POSITIVE);
                    a = na;
                    c = nc;
                    s = ns;
                    cost = nc_cost;
                    improved = rel > 1e-15;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(s > 0.0 && s.is_finite() && a.is_finite() && c.is_finite()) {
        return Err(Error::FitFailure(format!("degenerate fit (a={a}, c={c}, s={s})")));
    }
    Ok(GaussianFit {
        amplitude: a,
        center: c,
        sigma_fit: s,
        rmse: (cost / profile.len() as f64).sqrt(),
    })
}

/// Positive entries falling away monotonically on both sides of the maximum. Restricting
/// the log-domain regression to them keeps a flat background from flattening the start.
fn peak_lobe(coords: &[f64], profile: &[f64], imax: usize) -> Vec<(f64, f64)> {
    let mut lo = imax;
    while lo > 0 && profile[lo - 1] > 0.0 && profile[lo - 1] < profile[lo] {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < profile.len() && profile[hi + 1] > 0.0 && profile[hi + 1] < profile[hi] {
        hi += 1;
    }
    (lo..=hi).map(|i| (coords[i], profile[i])).collect()
}

fn initial_guess(
    positive: &[(f64, f64)],
    coords: &[f64],
    profile: &[f64],
    imax: usize,
) -> (f64, f64, f64) {
    if positive.len() >= 3 {
        // weighted normal equations for ln y = p0 + p1 x + p2 x²
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        let mut b = nalgebra::Vector3::<f64>::zeros();
        for &(x, y) in positive {
            let w = y * y;
            let phi = nalgebra::Vector3::new(1.0, x, x * x);
            m += w * phi * phi.transpose();
            b += w * y.ln() * phi;
        }
        if let Some(p) = m.lu().solve(&b) {
            if p[2] < 0.0 {
                let s = (-1.0 / (2.0 * p[2])).sqrt();
                let c = -p[1] / (2.0 * p[2]);
                let a = (p[0] - p[1] * p[1] / (4.0 * p[2])).exp();
                if s.is_finite() && c.is_finite() && a.is_finite() {
                    return (a, c, s);
                }
            }
        }
    }
    // fall back to the peak and the sample spacing
    let spacing = (coords[imax + 1] - coords[imax - 1]).abs() / 2.0;
    (profile[imax], coords[imax], spacing.max(f64::MIN_POSITIVE))
}

/// FWHM in millimetres for a fit expressed in voxel units.
pub fn fwhm_from_fit(fit: &GaussianFit, pitch_mm: f64) -> Result<f64> {
    if !(fit.sigma_fit > 0.0 && fit.sigma_fit.is_finite()) {
        return Err(Error::FitFailure("fit has no positive width".into()));
    }
    if !(pitch_mm > 0.0 && pitch_mm.is_finite()) {
        return Err(Error::invalid("pitch must be positive"));
    }
    Ok(FWHM_PER_SIGMA * fit.sigma_fit * pitch_mm)
}

/// `‖actual − recon‖₂ / ‖actual‖₂`.
pub fn relative_norm(actual: &VoxelGrid, recon: &VoxelGrid) -> Result<f64> {
    relative_norm_values(actual.values(), recon.values())
}

pub fn relative_norm_values(actual: &[f64], recon: &[f64]) -> Result<f64> {
    if actual.len() != recon.len() {
        return Err(Error::invalid("volumes differ in size"));
    }
    let den: f64 = actual.iter().map(|x| x * x).sum();
    if den == 0.0 {
        return Err(Error::invalid("reference volume is all zero"));
    }
    let num: f64 = actual
        .iter()
        .zip(recon)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Line through the grid center (`floor(n/2)` on the other axes) along `axis`.
///
/// Coordinates are millimetres relative to the center voxel. Divide by the pitch before
/// fitting when the width should come out in voxel units for [`fwhm_from_fit`].
pub fn central_profile(volume: &VoxelGrid, axis: Axis) -> (Vec<f64>, Vec<f64>) {
    let d = volume.dims();
    let (cx, cy, cz) = d.center();
    let (n, c) = match axis {
        Axis::X => (d.0, cx),
        Axis::Y => (d.1, cy),
        Axis::Z => (d.2, cz),
    };
    let pitch = volume.pitch_mm();
    let coords = (0..n).map(|i| (i as f64 - c as f64) * pitch).collect();
    let values = (0..n)
        .map(|i| match axis {
            Axis::X => volume.get(i, cy, cz),
            Axis::Y => volume.get(cx, i, cz),
            Axis::Z => volume.get(cx, cy, i),
        })
        .collect();
    (coords, values)
}
