//! Multiscale hierarchical decomposition restoration of grayscale images
//! corrupted by multiplicative gamma noise and optional Gaussian blur.
//!
//! The restoration x_k is built as a product (or log-domain sum) of
//! per-scale factors, each obtained by minimizing a data-fit term plus a
//! total-variation penalty with a geometrically growing weight. A
//! discrepancy rule picks the scale at which to stop.

pub mod degrade;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod multiscale;
pub mod operators;
pub mod solvers;
pub mod tvprox;

pub use error::{Error, Result};
pub use grid::ImageGrid;
