//! Kernel methods built around reproducing-kernel regularization:
//!
//! * [`kernel`]: kernels, Gram matrices, PSD projection, pseudo-inverses,
//!   eigentruncation and pseudo-attribute coordinates;
//! * [`loss`]: margin costs and a brute-force population-minimizer oracle;
//! * [`classifier`]: hinge, logistic and squared-loss classifiers in
//!   representer form, plus an ℓ1-penalized variant;
//! * [`rke`]: positive-semidefinite kernels fitted to noisy, incomplete
//!   squared dissimilarities, out-of-sample embedding and pair-holdout tuning;
//! * [`unroll`]: the nearest-neighbour, trace-rewarding variant of the same
//!   fit, which flattens curved manifolds;
//! * [`experiments`]: synthetic data and the probability-versus-sign study.

pub mod classifier;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod loss;

pub use error::{Error, Result};
pub mod experiments;
pub mod rke;
pub mod unroll;
