//! Test volumes: point sources, uniform cubes and the 3D Shepp–Logan head.

use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};

/// One ellipsoid of the Shepp–Logan head, in normalised `[-1, 1]³` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub intensity: f64,
    /// Semi-axes along the (rotated) x, y and z directions.
    pub semi_axes: [f64; 3],
    pub center: [f64; 3],
    /// Rotation about the z axis, degrees.
    pub phi_deg: f64,
}

impl Ellipsoid {
    /// Whether the normalised point lies inside (or on) the ellipsoid.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let dz = p[2] - self.center[2];
        let xr = c * dx + s * dy;
        let yr = -s * dx + c * dy;
        let [a, b, cz] = self.semi_axes;
        (xr / a).powi(2) + (yr / b).powi(2) + (dz / cz).powi(2) <= 1.0
    }
}

const fn ell(intensity: f64, semi_axes: [f64; 3], center: [f64; 3], phi_deg: f64) -> Ellipsoid {
    Ellipsoid {
        intensity,
        semi_axes,
        center,
        phi_deg,
    }
}

/// Ten-ellipsoid 3D Shepp–Logan head.
///
/// The in-plane axes, centers and rotations are the Kak–Slaney table; the z semi-axes and
/// z centers are the usual 3D extension. Intensities use the higher-contrast (Toft)
/// variant so that the brain interior is visible next to the skull.
pub const SHEPP_LOGAN_3D: [Ellipsoid; 10] = [
    ell(1.0, [0.6900, 0.920, 0.810], [0.0, 0.0, 0.0], 0.0),
    ell(-0.8, [0.6624, 0.874, 0.780], [0.0, -0.0184, 0.0], 0.0),
    ell(-0.2, [0.1100, 0.310, 0.220], [0.22, 0.0, 0.0], -18.0),
    ell(-0.2, [0.1600, 0.410, 0.280], [-0.22, 0.0, 0.0], 18.0),
    ell(0.1, [0.2100, 0.250, 0.410], [0.0, 0.35, -0.15], 0.0),
    ell(0.1, [0.0460, 0.046, 0.050], [0.0, 0.1, 0.25], 0.0),
    ell(0.1, [0.0460, 0.046, 0.050], [0.0, -0.1, 0.25], 0.0),
    ell(0.1, [0.0460, 0.023, 0.050], [-0.08, -0.605, 0.0], 0.0),
    ell(0.1, [0.0230, 0.023, 0.020], [0.0, -0.606, 0.0], 0.0),
    ell(0.1, [0.0230, 0.046, 0.020], [0.06, -0.605, 0.0], 0.0),
];

pub const SHEPP_LOGAN_MIN_DIM: usize = 8;

pub fn make_point_source(dims: Dims, value: f64, pitch_mm: f64) -> Result<VoxelGrid> {
    check_value(value)?;
    let mut grid = vec![0.0; checked_len(dims)?];
    grid[dims.center_index()] = value;
    VoxelGrid::new(dims, pitch_mm, grid)
}

pub fn make_uniform(dims: Dims, value: f64, pitch_mm: f64) -> Result<VoxelGrid> {
    check_value(value)?;
    VoxelGrid::filled(dims, pitch_mm, value)
}

/// Sample the Shepp–Logan head at voxel centers; summed intensities are clamped at zero.
pub fn make_shepp_logan_3d(dims: Dims, pitch_mm: f64) -> Result<VoxelGrid> {
    dims.validate()?;
    if dims.as_array().iter().any(|&n| n < SHEPP_LOGAN_MIN_DIM) {
        return Err(Error::invalid(format!(
            "Shepp-Logan needs at least {SHEPP_LOGAN_MIN_DIM} voxels per axis, got {dims}"
        )));
    }
    let n = dims.as_array();
    let values = (0..dims.len())
        .map(|idx| {
            let (x, y, z) = dims.coords(idx);
            let p = [
                normalised(x, n[0]),
                normalised(y, n[1]),
                normalised(z, n[2]),
            ];
            shepp_logan_at(p).max(0.0)
        })
        .collect();
    VoxelGrid::new(dims, pitch_mm, values)
}

/// Unclamped sum of ellipsoid intensities at a normalised point.
pub fn shepp_logan_at(p: [f64; 3]) -> f64 {
    SHEPP_LOGAN_3D
        .iter()
        .filter(|e| e.contains(p))
        .map(|e| e.intensity)
        .sum()
}

/// Voxel-center coordinate mapped onto `[-1, 1]`.
pub fn normalised(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 + 1.0) / n as f64 - 1.0
}

fn check_value(value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::invalid(format!(
            "phantom value must be finite and nonnegative, got {value}"
        )));
    }
    Ok(())
}

fn checked_len(dims: Dims) -> Result<usize> {
    dims.validate()?;
    Ok(dims.len())
}
