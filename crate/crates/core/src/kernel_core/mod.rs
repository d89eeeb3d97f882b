//! Kernels, Gram matrices, lengthscale heuristics and regularised solves.

mod kernel;
mod points;
mod solve;

pub use kernel::{gram, median_heuristic, nuclear_rbf_eval, rbf_eval, KernelFamily, KernelSpec};
pub use points::PointSet;
pub use solve::{reg_solve, RegFactor, RegSolution, SolveConfig};
