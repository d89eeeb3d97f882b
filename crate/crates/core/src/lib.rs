//! Bayesian counterfactual mean embeddings and two-stage data-fusion
//! estimators for the expected ultimate effect of a policy.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel_core`]: RBF and nuclear-dominant kernels, Gram matrices, the
//!   median heuristic and jitter-safeguarded regularised solves.
//! * [`embeddings`]: conditional mean embeddings (CME), their Gaussian-process
//!   posterior, the counterfactual mean embedding (CFME) and its posterior.
//! * [`estimators`]: the plugin baseline and the CFMP, BayesRCFME and
//!   BayesCFMP estimators of `eta = E[f(R)]` under the target distribution.
//! * [`synthetic`]: data-generating processes for Settings A and B and the
//!   Monte-Carlo ground truth.
//! * [`calibration`]: credible intervals, alpha sweeps and coverage.

pub mod calibration;
pub mod embeddings;
mod error;
pub mod estimators;
pub mod kernel_core;
pub mod normal;
pub mod synthetic;

pub use error::{CfmeError, NumericalError, Result};
pub use kernel_core::{KernelFamily, KernelSpec, PointSet, SolveConfig};
