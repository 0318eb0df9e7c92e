//! Numerical kernels for global covariance pooling.
//!
//! The crate provides the forward and backward passes of second-order
//! pooling layers as pure functions on dense matrices:
//!
//! - [`covpool`]: sample covariance of a feature matrix and its gradient.
//! - [`mpn`]: matrix power normalization through the eigendecomposition,
//!   with spectral-norm and Frobenius-norm variants, plus the covariance
//!   estimation objective and power-Euclidean / log-Euclidean metrics that
//!   justify it.
//! - [`gauss_embed`]: embedding of a feature distribution's mean and
//!   covariance into one SPD matrix, and its square-root layer.
//! - [`newton_schulz`]: inverse-free iterative matrix square root with
//!   pre-normalization and post-compensation, differentiable end to end.
//! - [`compact`]: progressive dimension reduction, symmetric
//!   vectorization and grouped linear maps for compact representations.
//! - [`gradcheck`]: a central finite-difference harness used to certify
//!   every analytic backward pass.
//!
//! All operations are deterministic pure functions; values can be shared
//! freely across threads.

// Indexed loops mirror the subscript form of the matrix identities.
#![allow(clippy::needless_range_loop)]

pub mod compact;
pub mod config;
pub mod covpool;
pub mod eig;
pub mod error;
pub mod gauss_embed;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod mpn;
pub mod newton_schulz;

pub use config::{PoolingConfig, DEFAULT_ALPHA, DEFAULT_NS_ITERATIONS};
pub use eig::{matpow_via_eig, matrix_log, sym_eig, EigenDecomposition, DEFAULT_TRUNCATION};
pub use error::{Error, Result};
pub use matrix::{symmetrize, DenseMatrix, FeatureMatrix, SymmetricMatrix};
