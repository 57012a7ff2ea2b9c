//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spect_bayes::projector::{DetectorGeometry, Ray};
use spect_bayes::Dims;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Length of the segment `{o + t d : t >= 0}` inside the box `[lo, hi]` by the slab method.
/// `d` must be a unit vector.
pub fn slab_chord(o: [f64; 3], d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return 0.0;
            }
        } else {
            let ta = (lo[a] - o[a]) / d[a];
            let tb = (hi[a] - o[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t1 - t0).max(0.0)
}

pub fn grid_box(dims: Dims, pitch: f64) -> ([f64; 3], [f64; 3]) {
    let n = dims.as_array();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        lo[a] = -0.5 * n[a] as f64 * pitch;
        hi[a] = -lo[a];
    }
    (lo, hi)
}

/// Dense row-major system matrix where every entry is the ray's chord through that
/// voxel's own box. Quadratic cost; small grids only.
pub fn dense_oracle(geometry: &DetectorGeometry, dims: Dims, pitch: f64) -> Vec<f64> {
    let (glo, _) = grid_box(dims, pitch);
    let ncols = dims.len();
    let mut m = vec![0.0; geometry.num_rays() * ncols];
    for a in 0..geometry.num_angles() {
        for v in 0..geometry.nv {
            for u in 0..geometry.nu {
                let row = geometry.ray_index(a, v, u);
                let ray = geometry.ray(dims, pitch, a, v, u);
                let (ri, ro) = (ray.origin, ray.direction);
                for z in 0..dims.2 {
                    for y in 0..dims.1 {
                        for x in 0..dims.0 {
                            let lo = [
                                glo[0] + x as f64 * pitch,
                                glo[1] + y as f64 * pitch,
                                glo[2] + z as f64 * pitch,
                            ];
                            let hi = [lo[0] + pitch, lo[1] + pitch, lo[2] + pitch];
                            let c = slab_chord(ri, ro, lo, hi);
                            if c > 0.0 {
                                m[row * ncols + dims.index(x, y, z)] = c;
                            }
                        }
                    }
                }
            }
        }
    }
    m
}

pub fn dense_matvec(m: &[f64], ncols: usize, x: &[f64]) -> Vec<f64> {
    m.chunks(ncols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn dense_transpose_matvec(m: &[f64], ncols: usize, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ncols];
    for (row, yi) in m.chunks(ncols).zip(y) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yi;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// Ray from a random point on a sphere of radius `radius` towards a random point inside
/// the box scaled by `spread`.
pub fn random_ray(r: &mut ChaCha8Rng, radius: f64, half: [f64; 3], spread: f64) -> Ray {
    let z: f64 = r.random_range(-1.0..1.0);
    let phi: f64 = r.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    let o = [radius * s * phi.cos(), radius * s * phi.sin(), radius * z];
    let target = [
        r.random_range(-1.0..1.0) * half[0] * spread,
        r.random_range(-1.0..1.0) * half[1] * spread,
        r.random_range(-1.0..1.0) * half[2] * spread,
    ];
    Ray::new(o, [target[0] - o[0], target[1] - o[1], target[2] - o[2]]).unwrap()
}
