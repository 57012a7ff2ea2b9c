//! Amanatides–Woo voxel traversal with exact per-voxel chord lengths.

use crate::error::{Error, Result};
use crate::grid::Dims;

use super::geometry::Ray;

/// Voxels crossed by a ray, in traversal order, with intersection lengths in mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayIntersectionList {
    pub entries: Vec<(usize, f64)>,
}

impl RayIntersectionList {
    pub fn total_length(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Trace `ray` through an axis-aligned grid centered on the origin.
///
/// The ray is a half-line starting at its origin. Returns an empty list when it misses
/// the grid box.
pub fn trace_ray(dims: Dims, pitch_mm: f64, ray: &Ray) -> Result<RayIntersectionList> {
    crate::grid::validate_layout(dims, pitch_mm)?;
    let norm2: f64 = ray.direction.iter().map(|d| d * d).sum();
    if !(norm2.is_finite() && norm2 > 0.0) {
        return Err(Error::invalid("ray direction must be nonzero"));
    }
    let mut entries = Vec::new();
    traverse(dims, pitch_mm, ray, |idx, len| entries.push((idx, len)));
    Ok(RayIntersectionList { entries })
}

/// Core traversal. Calls `visit(voxel_index, length)` for every positive-length segment.
///
/// Inputs are assumed valid; this is the hot loop behind every projector pass.
pub(crate) fn traverse(dims: Dims, pitch: f64, ray: &Ray, mut visit: impl FnMut(usize, f64)) {
    let n = dims.as_array();
    let o = ray.origin;
    let d = ray.direction;

    let mut lo = [0.0; 3];
    for a in 0..3 {
        lo[a] = -0.5 * n[a] as f64 * pitch;
    }

    // slab clip against the grid box
    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for a in 0..3 {
        let hi = -lo[a];
        if d[a] == 0.0 {
            if o[a] < lo[a] || o[a] > hi {
                return;
            }
        } else {
            let t0 = (lo[a] - o[a]) / d[a];
            let t1 = (hi - o[a]) / d[a];
            t_enter = t_enter.max(t0.min(t1));
            t_exit = t_exit.min(t0.max(t1));
        }
    }
    if t_exit.is_nan() || t_enter.is_nan() || t_exit <= t_enter {
        return;
    }

    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    for a in 0..3 {
        // entry point may sit on a face or round just outside it; clamp into the grid
        let p = o[a] + t_enter * d[a];
        let c = (((p - lo[a]) / pitch).floor() as isize).clamp(0, n[a] as isize - 1);
        cell[a] = c;
        if d[a] > 0.0 {
            step[a] = 1;
            t_max[a] = (lo[a] + (c + 1) as f64 * pitch - o[a]) / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (lo[a] + c as f64 * pitch - o[a]) / d[a];
        }
    }

    let mut t = t_enter;
    loop {
        let axis = if t_max[0] < t_max[1] && t_max[0] < t_max[2] {
            0
        } else if t_max[1] < t_max[2] {
            1
        } else {
            2
        };
        let t_next = t_max[axis].min(t_exit);
        let len = t_next - t;
        if len > 0.0 {
            let idx = cell[0] as usize + n[0] * (cell[1] as usize + n[1] * cell[2] as usize);
            visit(idx, len);
            t = t_next;
        }
        if t_next >= t_exit {
            break;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= n[axis] as isize {
            break;
        }
        // recompute from the boundary index rather than accumulating t_delta
        let k = if step[axis] > 0 { cell[axis] + 1 } else { cell[axis] };
        t_max[axis] = (lo[axis] + k as f64 * pitch - o[axis]) / d[axis];
    }
}
