//! Recovery of low-rank matrices from dithered one-bit sign measurements.
//!
//! The measurement model compares linear measurements `y_j = Tr(A_j^T X)`
//! of an unknown low-rank matrix `X` against random time-varying thresholds
//! and keeps only the signs. Each sign pins `X` to a half-space, and the
//! stack of half-spaces forms a highly overdetermined feasibility
//! polyhedron. The solver interleaves a randomized Kaczmarz half-space
//! projection with a rank-r singular value projection (SVP-RKA); a hard
//! singular value thresholding (HSVT) estimator serves as the baseline.
//!
//! The [`harness`] module drives seeded Monte Carlo sweeps over the
//! oversampling factor and emits reproducible CSV.

pub mod error;
pub mod harness;
pub mod matrix;
pub mod quantize;
pub mod rng;
pub mod sensing;
pub mod solvers;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, SvdFactorization};
pub use quantize::{DitherPlan, OneBitRecord, PolyhedronRow};
pub use sensing::{GroundTruth, SensingEnsemble};
pub use solvers::{RkaConfig, RowKind, SolveTrace};
