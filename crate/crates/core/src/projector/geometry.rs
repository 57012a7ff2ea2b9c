use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;

/// Parallel-beam acquisition: a flat `nu × nv` detector rotating about the grid z axis.
///
/// At angle θ the detector normal is `n = (cos θ, sin θ, 0)`, the detector u axis is
/// `(-sin θ, cos θ, 0)` and the v axis is `+z`. Rays leave each pixel center along `-n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorGeometry {
    pub nu: usize,
    pub nv: usize,
    pub pixel_pitch_mm: f64,
    pub angles_deg: Vec<f64>,
}

/// Relative offset added to every pixel center so rays avoid voxel faces and edges.
pub const RAY_JITTER: f64 = 1e-9;

impl DetectorGeometry {
    pub fn new(nu: usize, nv: usize, pixel_pitch_mm: f64, angles_deg: Vec<f64>) -> Result<Self> {
        let g = Self {
            nu,
            nv,
            pixel_pitch_mm,
            angles_deg,
        };
        g.validate()?;
        Ok(g)
    }

    /// Detector matched to a grid: `nu = max(nx, ny)`, `nv = nz`, pixel pitch = voxel pitch.
    pub fn for_grid(dims: Dims, pitch_mm: f64, angles_deg: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        Self::new(dims.0.max(dims.1), dims.2, pitch_mm, angles_deg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nv == 0 {
            return Err(Error::invalid("detector must have at least one pixel"));
        }
        if !(self.pixel_pitch_mm.is_finite() && self.pixel_pitch_mm > 0.0) {
            return Err(Error::invalid("detector pixel pitch must be positive"));
        }
        if self.angles_deg.is_empty() {
            return Err(Error::invalid("at least one view angle is required"));
        }
        if self
            .angles_deg
            .iter()
            .any(|a| !(a.is_finite() && (0.0..360.0).contains(a)))
        {
            return Err(Error::invalid("view angles must lie in [0, 360)"));
        }
        if self.angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("view angles must be strictly increasing"));
        }
        Ok(())
    }

    pub fn num_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn pixels_per_view(&self) -> usize {
        self.nu * self.nv
    }

    pub fn num_rays(&self) -> usize {
        self.num_angles() * self.pixels_per_view()
    }

    /// Geometry restricted to a subset of the view angles (indices into `angles_deg`).
    pub fn subset(&self, angle_indices: &[usize]) -> Result<Self> {
        let angles = angle_indices
            .iter()
            .map(|&i| {
                self.angles_deg
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("angle index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.nu, self.nv, self.pixel_pitch_mm, angles)
    }

    /// The ray leaving pixel `(u, v)` of view `angle_index`, for a grid of the given size.
    pub fn ray(&self, dims: Dims, pitch_mm: f64, angle_index: usize, v: usize, u: usize) -> Ray {
        let theta = self.angles_deg[angle_index].to_radians();
        let (s, c) = theta.sin_cos();
        let n = dims.as_array();
        let half_diag = 0.5
            * pitch_mm
            * ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64).sqrt();
        let radius = half_diag + pitch_mm;
        let jitter = RAY_JITTER * pitch_mm;
        let pu = (u as f64 - (self.nu as f64 - 1.0) / 2.0) * self.pixel_pitch_mm + jitter;
        let pv = (v as f64 - (self.nv as f64 - 1.0) / 2.0) * self.pixel_pitch_mm + jitter;
        Ray {
            origin: [radius * c - pu * s, radius * s + pu * c, pv],
            direction: [-c, -s, 0.0],
        }
    }

    /// Linear ray index, matching the `(angle, v, u)` stack layout.
    #[inline]
    pub fn ray_index(&self, angle_index: usize, v: usize, u: usize) -> usize {
        (angle_index * self.nv + v) * self.nu + u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
}

impl Ray {
    /// Build a ray, normalising the direction. Zero directions are rejected.
    pub fn new(origin: [f64; 3], direction: [f64; 3]) -> Result<Self> {
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("ray direction must be a nonzero finite vector"));
        }
        Ok(Self {
            origin,
            direction: direction.map(|d| d / norm),
        })
    }
}

/// `{0, step, 2·step, …}` strictly below `coverage_deg`.
pub fn angles_from_step(step_deg: f64, coverage_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg.is_finite() && step_deg > 0.0) {
        return Err(Error::invalid(format!("step angle must be positive, got {step_deg}")));
    }
    if !(coverage_deg.is_finite() && step_deg <= coverage_deg && coverage_deg <= 360.0) {
        return Err(Error::invalid(format!(
            "coverage must satisfy step <= coverage <= 360, got step {step_deg}, coverage {coverage_deg}"
        )));
    }
    // multiply instead of accumulating so 2° steps stay exact integers
    let count = (coverage_deg / step_deg).ceil() as usize;
    Ok((0..count)
        .map(|k| k as f64 * step_deg)
        .filter(|&a| a < coverage_deg - 1e-9 * step_deg)
        .collect())
}
