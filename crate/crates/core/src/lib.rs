//! Gaussian graphical model estimation with structural side information.
//!
//! Node-wise weighted lasso regressions whose per-coefficient penalties are
//! derived from a side-information matrix (for example inter-node distances),
//! together with the standard comparators, tuning schemes, simulation
//! generators and graph-recovery metrics.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiments;
mod homotopy;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod penalty;
pub mod rng;
pub mod simulation;
pub mod solver;
pub mod tuning;

pub use data::{sample_covariance, DataMatrix};
pub use error::{Error, Result};
pub use linalg::SymmetricMatrix;
