//! Parallel-beam SPECT reconstruction with uncertainty.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] and [`phantoms`] hold voxel volumes and the test objects built on them.
//! * [`projector`] traces detector rays through the grid (Amanatides–Woo traversal) and
//!   provides the matched forward / adjoint operator pair.
//! * [`recon`] contains the deterministic baselines (ART, MLEM, OSEM, one-step-late MAP).
//! * [`bayes`] defines the linear-Gaussian posterior over voxel activities and samples it
//!   with a self-contained NUTS engine.
//! * [`uncertainty`] turns sample chains into means, variances, histograms and FWHM.
//! * [`experiments`] wires everything into the reproducible pipelines used by the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled (default) and falls back to plain iterators otherwise.

pub mod bayes;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod par;
pub mod phantoms;
pub mod projector;
pub mod recon;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{Dims, VoxelGrid};
