//! Robust estimation of integrated regression coefficients (betas) from
//! high-frequency observations of a jump-diffusion regression model.
//!
//! The crate is organised along the estimation pipeline:
//!
//! - [`simulator`]: synthetic jump-diffusion sample paths with known betas.
//! - [`preprocessing`]: increments, bipower-variation jump truncation and
//!   standardization.
//! - [`huber_lasso`]: the per-window l1-penalized Huber regression.
//! - [`clime`]: column-wise constrained l1 precision-matrix estimation.
//! - [`pipeline`]: windowing, debiasing, integration and thresholding
//!   (RED-LASSO), plus the ED-LASSO and global LASSO baselines.
//! - [`tuning`]: data-driven selection of the tuning constants.
//! - [`evaluation`]: error norms, R² and the multi-seed benchmark.
//! - [`cli`]: configuration layering, run manifests and I/O used by the
//!   `betaflow` binary.

pub mod cli;
pub mod clime;
pub mod error;
pub mod evaluation;
pub mod huber_lasso;
pub mod pipeline;
pub mod preprocessing;
pub mod serde_ext;
pub mod simulator;
pub mod tuning;

pub use error::{Error, Result};
