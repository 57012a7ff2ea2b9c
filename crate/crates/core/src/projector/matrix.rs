use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::par;

use super::geometry::DetectorGeometry;
use super::trace::traverse;

/// Default cap on `rows × cols` for a materialised system matrix.
pub const DEFAULT_ELEMENT_BUDGET: u128 = 100_000_000;

/// Explicit system matrix as sorted `(row, col, length)` triplets.
///
/// Row `i` is detector ray `i` in `(angle, v, u)` order, column `j` is the voxel's linear
/// index. Only meant for small grids: tests, inspection and CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SystemMatrix {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for &(i, j, v) in &self.triplets {
            y[i] += v * x[j];
        }
        y
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut x = vec![0.0; self.ncols];
        for &(i, j, v) in &self.triplets {
            x[j] += v * y[i];
        }
        x
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nrows];
        for &(i, _, v) in &self.triplets {
            s[i] += v;
        }
        s
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.nrows * self.ncols];
        for &(i, j, v) in &self.triplets {
            m[i * self.ncols + j] = v;
        }
        m
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_csv(
            path,
            &["row", "col", "length"],
            self.triplets
                .iter()
                .map(|&(i, j, v)| [i.to_string(), j.to_string(), v.to_string()]),
        )
    }
}

pub fn build_system_matrix(
    geometry: &DetectorGeometry,
    dims: Dims,
    pitch_mm: f64,
) -> Result<SystemMatrix> {
    build_system_matrix_with_budget(geometry, dims, pitch_mm, DEFAULT_ELEMENT_BUDGET)
}

pub fn build_system_matrix_with_budget(
    geometry: &DetectorGeometry,
    dims: Dims,
    pitch_mm: f64,
    element_budget: u128,
) -> Result<SystemMatrix> {
    geometry.validate()?;
    crate::grid::validate_layout(dims, pitch_mm)?;
    let nrows = geometry.num_rays();
    let ncols = dims.len();
    let requested = nrows as u128 * ncols as u128;
    if requested > element_budget {
        return Err(Error::Capacity {
            requested,
            budget: element_budget,
        });
    }
    let mut triplets = Vec::new();
    for a in 0..geometry.num_angles() {
        for v in 0..geometry.nv {
            for u in 0..geometry.nu {
                let row = geometry.ray_index(a, v, u);
                let ray = geometry.ray(dims, pitch_mm, a, v, u);
                let mut hits = Vec::new();
                traverse(dims, pitch_mm, &ray, |j, len| hits.push((row, j, len)));
                hits.sort_by_key(|h| h.1);
                triplets.extend(hits);
            }
        }
    }
    Ok(SystemMatrix {
        nrows,
        ncols,
        triplets,
    })
}

/// Compressed sparse rows; column indices within a row keep insertion order.
#[derive(Debug, Clone)]
pub(crate) struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter()
            .zip(val)
            .map(|(&j, &v)| v * x[j as usize])
            .sum()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        par::fill_indexed(y, |i| self.row_dot(i, x));
    }

    /// Transpose via a stable counting sort: entries of each output row stay in
    /// increasing source-row order, which fixes the summation order of adjoint passes.
    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for k in 0..self.ncols {
            counts[k + 1] += counts[k];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.indices.len()];
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.nrows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let slot = next[j as usize];
                indices[slot] = i as u32;
                values[slot] = v;
                next[j as usize] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }
}

/// Trace every ray of `geometry` once, in parallel over view angles.
pub(crate) fn trace_all(geometry: &DetectorGeometry, dims: Dims, pitch_mm: f64) -> Csr {
    let per_view = geometry.pixels_per_view();
    let views = par::map_range(geometry.num_angles(), |a| {
        let mut lens = Vec::with_capacity(per_view);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for v in 0..geometry.nv {
            for u in 0..geometry.nu {
                let ray = geometry.ray(dims, pitch_mm, a, v, u);
                let before = indices.len();
                traverse(dims, pitch_mm, &ray, |j, len| {
                    indices.push(j as u32);
                    values.push(len);
                });
                lens.push(indices.len() - before);
            }
        }
        (lens, indices, values)
    });
    let nnz = views.iter().map(|v| v.1.len()).sum();
    let mut indptr = Vec::with_capacity(geometry.num_rays() + 1);
    let mut indices = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    indptr.push(0);
    for (lens, idx, val) in views {
        for l in lens {
            indptr.push(indptr.last().unwrap() + l);
        }
        indices.extend(idx);
        values.extend(val);
    }
    Csr {
        nrows: geometry.num_rays(),
        ncols: dims.len(),
        indptr,
        indices,
        values,
    }
}
