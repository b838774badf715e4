//! Numerical laboratory for transport equations and flows past fractal
//! singular sets.
//!
//! The crate is `no_std` with `alloc`. Everything here is pure computation:
//! set constructors, distance evaluators, box-counting and Minkowski
//! dimension estimators, codimension-print tests, singular vector fields,
//! singularity-aware trajectory integration, a semi-Lagrangian transport
//! solver and a particle vortex-wave simulator. File formats, configuration
//! and the command line live in the `singular-flow` companion crate.
//!
//! Heavy loops (trajectory ensembles, Monte Carlo chunks, grid updates) are
//! driven through the [`exec::Executor`] trait so a caller with threads can
//! parallelise them without changing results.
#![no_std]
// NaN-rejecting `!(x > 0.0)` checks and index loops over coordinates are deliberate.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

extern crate alloc;

pub mod dimension;
pub mod distance;
pub mod error;
pub mod exec;
pub mod fields;
pub mod fit;
pub mod flow;
pub mod geometry;
pub mod integrator;
pub mod rng;
pub mod sets;
pub mod transport;
pub mod vortex_wave;

pub use error::{Error, Result};
