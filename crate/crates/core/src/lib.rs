//! Nonparametric deconvolution of dynamic tracer (PET-style) data.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery: time grids and quadrature, spatio-temporal presmoothing,
//! multiplicative functional principal component analysis, basis-level
//! deconvolution, parametric/voxelwise baselines, phantom simulation and the
//! error metrics used to compare them. File formats, the CLI and the parallel
//! experiment runner live in the companion `fpcadeconv` crate.
//!
//! The end-to-end estimator is [`pipeline::fit`]:
//!
//! 1. smooth the scan in space and time ([`presmooth`]),
//! 2. estimate the mean, multipliers, covariance and eigenfunctions ([`fpca`]),
//! 3. deconvolve the mean and eigenfunctions only ([`deconv`]),
//! 4. combine basis integrals into a per-voxel volume-of-distribution map.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod deconv;
pub mod error;
pub mod fpca;
pub mod grid;
pub mod input;
pub mod linalg;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod presmooth;
pub mod rng;
pub mod scan;
pub mod special;

pub use error::{Error, Result};
pub use grid::{DenseGrid, TimeGrid};
pub use input::InputFunction;
pub use linalg::RowMatrix;
pub use scan::{DynamicScan, Layout};

/// Decay constant of carbon-11 in 1/s.
pub const LAMBDA_C11: f64 = 5.663e-4;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
