//! Random-matrix experiments on kernel ridgeless regression: condition numbers of Mercer
//! kernel matrices, the minimum-norm interpolant's test error, and what changes when
//! feature coordinates are dependent.

pub mod cli_io;
pub mod error;
pub mod experiments;
pub mod features;
pub mod linalg;
pub mod regression;
pub mod spectra;

pub use error::{Error, Result};
