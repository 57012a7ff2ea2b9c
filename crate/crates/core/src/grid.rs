use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent in voxels, `(nx, ny, nz)`. Serialises as a JSON array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub usize, pub usize, pub usize);

impl Dims {
    pub fn cube(n: usize) -> Self {
        Dims(n, n, n)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.0, self.1, self.2]
    }

    pub fn len(&self) -> usize {
        self.0 * self.1 * self.2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.0 == 0 || self.1 == 0 || self.2 == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {:?}",
                self.as_array()
            )));
        }
        Ok(())
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.0 * (y + self.1 * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.0;
        let y = (idx / self.0) % self.1;
        let z = idx / (self.0 * self.1);
        (x, y, z)
    }

    /// Center voxel, `floor(n / 2)` on every axis.
    pub fn center(&self) -> (usize, usize, usize) {
        (self.0 / 2, self.1 / 2, self.2 / 2)
    }

    pub fn center_index(&self) -> usize {
        let (x, y, z) = self.center();
        self.index(x, y, z)
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.0, self.1, self.2)
    }
}

/// A nonnegative activity volume with isotropic voxel pitch, stored x-fastest.
///
/// The grid is axis aligned and centered on the world origin, so voxel `(i, j, k)` covers
/// `[-nx·p/2 + i·p, -nx·p/2 + (i+1)·p]` along x, and likewise for y and z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    pitch_mm: f64,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: Dims, pitch_mm: f64, values: Vec<f64>) -> Result<Self> {
        validate_layout(dims, pitch_mm)?;
        if values.len() != dims.len() {
            return Err(Error::invalid(format!(
                "expected {} voxel values for {dims}, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(format!(
                "voxel {i} has value {v}; activities must be finite and nonnegative"
            )));
        }
        Ok(Self {
            dims,
            pitch_mm,
            values,
        })
    }

    pub fn filled(dims: Dims, pitch_mm: f64, value: f64) -> Result<Self> {
        validate_layout(dims, pitch_mm)?;
        Self::new(dims, pitch_mm, vec![value; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Re-check the type invariants. Useful for values that crossed a file boundary.
    pub fn validate(&self) -> Result<()> {
        validate_layout(self.dims, self.pitch_mm)?;
        if self.values.len() != self.dims.len() || self.values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::invalid("voxel grid invariants violated"));
        }
        Ok(())
    }

    /// World-space center of voxel `(x, y, z)` in millimetres.
    pub fn voxel_center_mm(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        voxel_center_mm(self.dims, self.pitch_mm, [x, y, z])
    }

    /// The z = center slice as a row-major `ny × nx` vector.
    pub fn central_slice_z(&self) -> Vec<f64> {
        let (_, _, zc) = self.dims.center();
        let (nx, ny) = (self.dims.0, self.dims.1);
        let start = self.dims.index(0, 0, zc);
        self.values[start..start + nx * ny].to_vec()
    }
}

pub(crate) fn validate_layout(dims: Dims, pitch_mm: f64) -> Result<()> {
    dims.validate()?;
    if !(pitch_mm.is_finite() && pitch_mm > 0.0) {
        return Err(Error::invalid(format!(
            "voxel pitch must be positive, got {pitch_mm}"
        )));
    }
    Ok(())
}

pub fn voxel_center_mm(dims: Dims, pitch_mm: f64, idx: [usize; 3]) -> [f64; 3] {
    let n = dims.as_array();
    let mut c = [0.0; 3];
    for a in 0..3 {
        c[a] = (idx[a] as f64 + 0.5 - n[a] as f64 / 2.0) * pitch_mm;
    }
    c
}
