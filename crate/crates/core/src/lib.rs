//! Split and K-split conformal prediction for Markovian data.
//!
//! The crate is organised by concern:
//!
//! - [`chains`]: finite kernels, the lazy walk, Gaussian AR(1), simulation,
//!   stationary laws, mixing times and exact spectral gaps.
//! - [`conformal`]: residual scores, order-statistic quantiles, split and
//!   K-split calibration, and rolling-window application.
//! - [`theory`]: coverage-gap and quantile-deviation calculators, the optimal
//!   thinning step `K*`, and both real branches of the Lambert W function.
//! - [`estimation`]: empirical kernels, spectral and autocorrelation
//!   estimates of the ergodicity rate, and the adaptive thinning step.
//! - [`harness`]: model fitting and seeded Monte Carlo experiments.
//! - [`io`]: CSV series ingestion and report/plot-data emission.

pub mod chains;
pub mod conformal;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
