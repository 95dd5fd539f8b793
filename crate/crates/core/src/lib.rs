//! Sparse least-squares regression on sketched data.
//!
//! The data matrix `X` (n x d) and target `y` are compressed with a
//! Johnson-Lindenstrauss transform `A` (m x n) and the elastic net, LASSO or
//! Dantzig selector is solved on `(AX, Ay)` with the l1 weight raised from
//! `tau` to `tau + sigma`. The least-squares term keeps the original `1/(2n)`
//! scaling.
//!
//! Modules:
//! - [`matrix`]: column-major dense/sparse design matrices, libsvm and CSV I/O.
//! - [`sketch`]: Gaussian, Rademacher, CountSketch and SRHT operators.
//! - [`prox`]: composite objective, ISTA reference solver and APCG.
//! - [`dantzig`]: Dantzig selector via ADMM.
//! - [`pipeline`]: compress-then-solve and the theory diagnostics.
//! - [`experiment`]: synthetic data, config files and sweeps.

pub mod dantzig;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod pipeline;
pub mod prox;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};
pub use matrix::{DesignMatrix, TargetVector};
pub use prox::{CompositeProblem, SolverParams, SolverResult};
pub use sketch::{SketchFamily, SketchOperator};
