//! File formats: raw little-endian `f64` payloads with JSON sidecars, and CSV tables.
//!
//! Every binary artifact is a pair `<name>.f64raw` + `<name>.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::SampleChain;
use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};
use crate::projector::{DetectorGeometry, ProjectionStack};

pub const RAW_EXT: &str = "f64raw";
pub const DTYPE_F64_LE: &str = "float64-le";
pub const ORDER_X_FASTEST: &str = "x-fastest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub dims: Dims,
    pub pitch_mm: f64,
    pub dtype: String,
    pub order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSidecar {
    pub num_angles: usize,
    pub nv: usize,
    pub nu: usize,
    pub angles_deg: Vec<f64>,
    pub pixel_pitch_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub num_samples: usize,
    pub num_voxels: usize,
    pub seed: u64,
    pub divergence_count: usize,
    pub accept_stat_mean: f64,
}

/// Paths of a raw + sidecar pair rooted at `dir/name`.
pub fn pair_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.{RAW_EXT}")),
        dir.join(format!("{name}.json")),
    )
}

pub fn write_raw_f64(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_f64(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid(format!(
            "{} is not a whole number of float64 values",
            path.display()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Write any voxel-shaped field (activities, variances, back-projections).
pub fn save_volume_values(
    dir: &Path,
    name: &str,
    dims: Dims,
    pitch_mm: f64,
    values: &[f64],
) -> Result<Vec<PathBuf>> {
    if values.len() != dims.len() {
        return Err(Error::invalid("volume length does not match dims"));
    }
    let (raw, meta) = pair_paths(dir, name);
    write_raw_f64(&raw, values)?;
    write_json(
        &meta,
        &VolumeSidecar {
            dims,
            pitch_mm,
            dtype: DTYPE_F64_LE.into(),
            order: ORDER_X_FASTEST.into(),
        },
    )?;
    Ok(vec![raw, meta])
}

pub fn save_volume(dir: &Path, name: &str, grid: &VoxelGrid) -> Result<Vec<PathBuf>> {
    save_volume_values(dir, name, grid.dims(), grid.pitch_mm(), grid.values())
}

pub fn load_volume(dir: &Path, name: &str) -> Result<VoxelGrid> {
    let (raw, meta) = pair_paths(dir, name);
    let side: VolumeSidecar = read_json(&meta)?;
    if side.order != ORDER_X_FASTEST {
        return Err(Error::invalid(format!("unsupported order {:?}", side.order)));
    }
    VoxelGrid::new(side.dims, side.pitch_mm, read_raw_f64(&raw)?)
}

pub fn save_stack(dir: &Path, name: &str, stack: &ProjectionStack) -> Result<Vec<PathBuf>> {
    let g = stack.geometry();
    let (raw, meta) = pair_paths(dir, name);
    write_raw_f64(&raw, stack.values())?;
    write_json(
        &meta,
        &StackSidecar {
            num_angles: g.num_angles(),
            nv: g.nv,
            nu: g.nu,
            angles_deg: g.angles_deg.clone(),
            pixel_pitch_mm: g.pixel_pitch_mm,
        },
    )?;
    Ok(vec![raw, meta])
}

pub fn load_stack(dir: &Path, name: &str) -> Result<ProjectionStack> {
    let (raw, meta) = pair_paths(dir, name);
    let side: StackSidecar = read_json(&meta)?;
    if side.num_angles != side.angles_deg.len() {
        return Err(Error::invalid("num_angles disagrees with angles_deg"));
    }
    let geometry = DetectorGeometry::new(side.nu, side.nv, side.pixel_pitch_mm, side.angles_deg)?;
    ProjectionStack::new(geometry, read_raw_f64(&raw)?)
}

pub fn save_chain(dir: &Path, name: &str, chain: &SampleChain) -> Result<Vec<PathBuf>> {
    let (raw, meta) = pair_paths(dir, name);
    write_raw_f64(&raw, chain.samples())?;
    write_json(
        &meta,
        &ChainSidecar {
            num_samples: chain.num_samples(),
            num_voxels: chain.num_voxels(),
            seed: chain.seed,
            divergence_count: chain.divergence_count,
            accept_stat_mean: chain.accept_stat_mean,
        },
    )?;
    Ok(vec![raw, meta])
}

/// Load a chain's draws and sidecar. Warmup traces are not part of the binary format.
pub fn load_chain(dir: &Path, name: &str) -> Result<(ChainSidecar, Vec<f64>)> {
    let (raw, meta) = pair_paths(dir, name);
    let side: ChainSidecar = read_json(&meta)?;
    let values = read_raw_f64(&raw)?;
    if values.len() != side.num_samples * side.num_voxels {
        return Err(Error::invalid("chain payload does not match its sidecar"));
    }
    Ok((side, values))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

/// Write a numeric CSV table with a header row.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: ToString,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        let rec: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a CSV written by [`write_csv`]: header plus rows of strings.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}
