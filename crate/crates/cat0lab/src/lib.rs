//! Numerical laboratory for conformal deformations of CAT(0) model spaces.
//!
//! Finite length spaces are weighted graphs sampled from model geometries
//! with exact distance oracles. On top of them the crate provides conformal
//! reweighting, comparison-triangle CAT(0) scans, discrete harmonic and
//! minimal-disc solvers, and an experiment runner tying them together.

pub mod cli;
pub mod conformal;
pub mod error;
pub mod fields;
pub mod models;
pub mod pipeline;
pub mod space;
pub mod target;
pub mod harmonic;
pub mod verify;

pub use error::{LabError, Result};
