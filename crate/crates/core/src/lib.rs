//! Solver and verification toolkit for degenerate orthotropic diffusion,
//! with thresholds below which the flux vanishes, and its isotropic variant.
//!
//! * [`geometry`]: cubes, cylinders, grids and shrinking cylinder families.
//! * [`flux`]: energy densities and fluxes.
//! * [`solver`]: implicit and explicit time stepping.
//! * [`degiorgi`]: level-set truncation machinery and the local bound checks.
//! * [`harness`]: configs, experiment pipelines and report files.

pub mod degiorgi;
pub mod flux;
pub mod geometry;
pub mod harness;
pub mod solver;
