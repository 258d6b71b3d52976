//! Simulation laboratory for two-dimensional Ginzburg-Landau gradient
//! fields: convex-potential perturbations of the discrete Gaussian free
//! field on a box with zero boundary.
//!
//! The crate provides
//! - lattice geometry and l1-ball site sets ([`lattice`]),
//! - certified symmetric uniformly convex potentials ([`potential`]),
//! - exact Dirichlet linear algebra and DGFF sampling ([`laplace`]),
//! - MCMC samplers with checkerboard parallel sweeps ([`sampler`]),
//! - multiscale harmonic averages, schedules and kernels ([`harmonic`]),
//! - estimators for stiffness, extremes, tails, Brascamp-Lieb domination,
//!   moment generating functions, couplings and truncated counts
//!   ([`experiments`]).

pub mod error;
pub mod field;
pub mod harmonic;
pub mod laplace;
pub mod lattice;
pub mod potential;
pub mod sampler;
pub mod source;
pub mod stats;
pub mod store;

pub mod experiments;

pub use error::{Error, Result};
