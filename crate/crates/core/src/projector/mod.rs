//! Parallel-beam projection: ray traversal, forward operator and its exact adjoint.
//!
//! Two routes compute the same operator `A`:
//!
//! * [`forward_project`] / [`back_project`] trace rays on the fly;
//! * [`Projector`] traces once, caches `A` in sparse form (plus its transpose) and is
//!   what the iterative and Bayesian reconstructors use.
//!
//! Entry `a_ij` is the chord length of ray `i` in voxel `j`, in millimetres.

mod geometry;
mod matrix;
mod trace;

pub use geometry::{angles_from_step, DetectorGeometry, Ray, RAY_JITTER};
pub use matrix::{
    build_system_matrix, build_system_matrix_with_budget, SystemMatrix, DEFAULT_ELEMENT_BUDGET,
};
pub use trace::{trace_ray, RayIntersectionList};

use crate::error::{Error, Result};
use crate::grid::{validate_layout, Dims, VoxelGrid};
use crate::par;

use matrix::{trace_all, Csr};
use trace::traverse;

/// Detector images over all view angles, stored `(angle, v, u)` with `u` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    geometry: DetectorGeometry,
    values: Vec<f64>,
}

impl ProjectionStack {
    pub fn new(geometry: DetectorGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.num_rays() {
            return Err(Error::invalid(format!(
                "stack needs {} values ({} angles x {} x {}), got {}",
                geometry.num_rays(),
                geometry.num_angles(),
                geometry.nv,
                geometry.nu,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("projection values must be finite"));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: DetectorGeometry) -> Result<Self> {
        let n = geometry.num_rays();
        Self::new(geometry, vec![0.0; n])
    }

    pub fn geometry(&self) -> &DetectorGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn view(&self, angle_index: usize) -> &[f64] {
        let n = self.geometry.pixels_per_view();
        &self.values[angle_index * n..(angle_index + 1) * n]
    }

    /// Sub-stack holding only the given view angles, in the given order.
    pub fn subset(&self, angle_indices: &[usize]) -> Result<Self> {
        let geometry = self.geometry.subset(angle_indices)?;
        let values = angle_indices
            .iter()
            .flat_map(|&a| self.view(a).iter().copied())
            .collect();
        Self::new(geometry, values)
    }
}

/// Flatten a stack into one vector in `(angle, v, u)` order.
pub fn vectorize(stack: &ProjectionStack) -> Vec<f64> {
    stack.values.clone()
}

/// Inverse of [`vectorize`].
pub fn devectorize(geometry: DetectorGeometry, values: Vec<f64>) -> Result<ProjectionStack> {
    ProjectionStack::new(geometry, values)
}

/// Forward projection by on-the-fly traversal: one ray per detector pixel center,
/// each pixel receiving `Σ f_j · length_j` over the voxels it crosses.
pub fn forward_project(grid: &VoxelGrid, geometry: &DetectorGeometry) -> Result<ProjectionStack> {
    geometry.validate()?;
    let dims = grid.dims();
    let pitch = grid.pitch_mm();
    let f = grid.values();
    let per_view = geometry.pixels_per_view();
    let mut values = vec![0.0; geometry.num_rays()];
    par::fill_indexed(&mut values, |i| {
        let a = i / per_view;
        let v = (i % per_view) / geometry.nu;
        let u = i % geometry.nu;
        let ray = geometry.ray(dims, pitch, a, v, u);
        let mut acc = 0.0;
        traverse(dims, pitch, &ray, |j, len| acc += f[j] * len);
        acc
    });
    ProjectionStack::new(geometry.clone(), values)
}

/// Unfiltered back-projection `Aᵀ g` by on-the-fly traversal.
///
/// Views are processed in parallel into private volumes which are then summed in view
/// order, so the result does not depend on the thread count. The output is an operator
/// image, not an activity estimate, and may be negative.
///
/// Fails when the detector footprint cannot cover the grid (`nu·pitch` smaller than the
/// in-plane extent or `nv·pitch` smaller than the axial extent).
pub fn back_project(stack: &ProjectionStack, dims: Dims, pitch_mm: f64) -> Result<Vec<f64>> {
    validate_layout(dims, pitch_mm)?;
    let g = stack.geometry();
    check_coverage(g, dims, pitch_mm)?;
    let per_view = g.pixels_per_view();
    let partials = par::map_range(g.num_angles(), |a| {
        let mut vol = vec![0.0; dims.len()];
        for v in 0..g.nv {
            for u in 0..g.nu {
                let w = stack.values[a * per_view + v * g.nu + u];
                if w == 0.0 {
                    continue;
                }
                let ray = g.ray(dims, pitch_mm, a, v, u);
                traverse(dims, pitch_mm, &ray, |j, len| vol[j] += w * len);
            }
        }
        vol
    });
    let mut out = vec![0.0; dims.len()];
    for p in partials {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    Ok(out)
}

fn check_coverage(g: &DetectorGeometry, dims: Dims, pitch_mm: f64) -> Result<()> {
    let tol = 1e-9 * pitch_mm;
    let in_plane = dims.0.max(dims.1) as f64 * pitch_mm;
    let axial = dims.2 as f64 * pitch_mm;
    if (g.nu as f64) * g.pixel_pitch_mm + tol < in_plane || (g.nv as f64) * g.pixel_pitch_mm + tol < axial {
        return Err(Error::invalid(format!(
            "detector {}x{} at {} mm does not cover a {dims} grid at {pitch_mm} mm",
            g.nu, g.nv, g.pixel_pitch_mm
        )));
    }
    Ok(())
}

/// Cached sparse system operator for repeated forward / adjoint application.
///
/// Both passes are row-parallel over a fixed storage order (`A` for forward, `Aᵀ` for
/// adjoint), so results are bitwise independent of the number of threads.
#[derive(Debug, Clone)]
pub struct Projector {
    dims: Dims,
    pitch_mm: f64,
    geometry: DetectorGeometry,
    forward: Csr,
    adjoint: Csr,
}

impl Projector {
    pub fn new(geometry: DetectorGeometry, dims: Dims, pitch_mm: f64) -> Result<Self> {
        geometry.validate()?;
        validate_layout(dims, pitch_mm)?;
        if dims.len() > u32::MAX as usize || geometry.num_rays() > u32::MAX as usize {
            return Err(Error::invalid("grid or detector too large for 32-bit indices"));
        }
        let forward = trace_all(&geometry, dims, pitch_mm);
        let adjoint = forward.transpose();
        Ok(Self {
            dims,
            pitch_mm,
            geometry,
            forward,
            adjoint,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    pub fn geometry(&self) -> &DetectorGeometry {
        &self.geometry
    }

    pub fn num_rays(&self) -> usize {
        self.forward.nrows
    }

    pub fn num_voxels(&self) -> usize {
        self.forward.ncols
    }

    /// Stored nonzeros of `A`.
    pub fn nnz(&self) -> usize {
        self.forward.values.len()
    }

    pub fn forward_into(&self, f: &[f64], out: &mut [f64]) {
        assert_eq!(f.len(), self.num_voxels(), "voxel vector length");
        assert_eq!(out.len(), self.num_rays(), "ray vector length");
        self.forward.matvec_into(f, out);
    }

    pub fn forward(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_rays()];
        self.forward_into(f, &mut out);
        out
    }

    pub fn adjoint_into(&self, g: &[f64], out: &mut [f64]) {
        assert_eq!(g.len(), self.num_rays(), "ray vector length");
        assert_eq!(out.len(), self.num_voxels(), "voxel vector length");
        self.adjoint.matvec_into(g, out);
    }

    pub fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_voxels()];
        self.adjoint_into(g, &mut out);
        out
    }

    /// `Σ_i a_ij`, the back-projection of an all-ones stack.
    pub fn sensitivity(&self) -> Vec<f64> {
        self.adjoint(&vec![1.0; self.num_rays()])
    }

    /// Voxel indices and lengths along ray `i`, in traversal order.
    pub fn ray(&self, i: usize) -> (&[u32], &[f64]) {
        self.forward.row(i)
    }

    pub fn project(&self, grid: &VoxelGrid) -> Result<ProjectionStack> {
        if grid.dims() != self.dims || grid.pitch_mm() != self.pitch_mm {
            return Err(Error::invalid("grid does not match the projector layout"));
        }
        ProjectionStack::new(self.geometry.clone(), self.forward(grid.values()))
    }

    /// Check that a stack was acquired with this projector's geometry.
    pub fn check_stack(&self, stack: &ProjectionStack) -> Result<()> {
        if stack.geometry() != &self.geometry {
            return Err(Error::invalid("stack geometry does not match the projector"));
        }
        Ok(())
    }
}
