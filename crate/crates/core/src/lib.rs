//! Random-matrix spectral fluctuation laboratory.
//!
//! The crate samples Wigner, Gaussian-divisible and beta-Hermite ensembles,
//! computes their eigenvalues, evaluates single-eigenvalue, counting,
//! linear and mesoscopic statistics, and compares Monte Carlo estimates
//! with closed-form and quadrature predictions for their means and
//! variances. A Dyson Brownian motion integrator with shared-noise coupling
//! checks the homogenization representation of eigenvalue differences.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Quadrature tables are copied at published precision.
#![allow(clippy::excessive_precision)]

pub mod dbm;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod mesostat;
pub mod quadrature;
pub mod rng;
pub mod semicircle;
pub mod spectra;
pub mod theory;

pub use error::{Result, RmtError};
pub use num_complex;
