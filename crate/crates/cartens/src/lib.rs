//! Cartesian-tensor atomistic engine.
//!
//! Feature construction from irreducible Cartesian tensors, ACE-style atomic
//! and product bases, universal invariant/equivariant attribute embeddings,
//! charge equilibration, latent Ewald electrostatics, a reverse-mode gradient
//! engine for forces and field response, a desk-scale trainer, and
//! autocorrelation-based IR/Raman spectra.

pub mod analysis;
pub mod config;
pub mod contraction;
pub mod decomp;
pub mod electrostatics;
pub mod embeddings;
pub mod error;
pub mod extxyz;
pub mod geometry;
pub mod gradients;
pub mod graph;
pub mod math;
pub mod model;
pub mod params;
pub mod radial;
pub mod tensor;
pub mod testutil;
pub mod training;

pub use error::{Error, Result};
pub use tensor::CartesianTensor;
