//! Sample covariance pooling of a feature matrix and its backward pass.
//!
//! With `X` of shape d x M and the centering matrix
//! `J = (1/M)(I - (1/M) 1 1^T)`, the pooled second-order statistic is
//! `Sigma = X J X^T`. The implementation evaluates the centered form
//! `(1/M)(X X^T - (X 1)(X 1)^T / M)` in O(d^2 M) without materializing J;
//! the literal product is kept as a test oracle.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, SymmetricMatrix};

/// Sample covariance `Sigma = X J X^T`.
///
/// The result is symmetric PSD with rank at most `min(d, M - 1)`. A
/// single-sample input yields the zero matrix (`J = 0` for M = 1).
pub fn covariance(x: &FeatureMatrix) -> SymmetricMatrix {
    let d = x.dim();
    let m = x.samples();
    let inv_m = 1.0 / m as f64;

    let row_sums: Vec<f64> = (0..d)
        .map(|i| (0..m).map(|c| x.get(i, c)).sum())
        .collect();

    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let gram: f64 = (0..m).map(|c| x.get(i, c) * x.get(j, c)).sum();
            let v = inv_m * (gram - row_sums[i] * row_sums[j] * inv_m);
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    SymmetricMatrix::from_dense_unchecked(out)
}

/// Backward pass of [`covariance`]: `dX = (dSigma + dSigma^T) X J`.
///
/// `d_sigma` is the upstream gradient with respect to the pooled matrix;
/// it does not need to be symmetric.
pub fn covariance_backward(x: &FeatureMatrix, d_sigma: &DenseMatrix) -> Result<DenseMatrix> {
    let d = x.dim();
    let m = x.samples();
    if d_sigma.rows() != d || d_sigma.cols() != d {
        return Err(Error::ShapeError(format!(
            "covariance gradient must be {d}x{d}, got {}x{}",
            d_sigma.rows(),
            d_sigma.cols()
        )));
    }
    let inv_m = 1.0 / m as f64;

    // X J = (1/M)(X - mean column * 1^T), columns are centered samples.
    let means: Vec<f64> = (0..d)
        .map(|i| (0..m).map(|c| x.get(i, c)).sum::<f64>() * inv_m)
        .collect();
    let mut xj = DenseMatrix::zeros(d, m);
    for i in 0..d {
        for c in 0..m {
            xj.set(i, c, (x.get(i, c) - means[i]) * inv_m);
        }
    }

    let mut sym2 = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            sym2.set(i, j, d_sigma.get(i, j) + d_sigma.get(j, i));
        }
    }
    sym2.matmul(&xj)
}

/// Global average pooling: row means of the feature matrix.
pub fn gap(x: &FeatureMatrix) -> Vec<f64> {
    let m = x.samples() as f64;
    (0..x.dim())
        .map(|i| (0..x.samples()).map(|c| x.get(i, c)).sum::<f64>() / m)
        .collect()
}

/// Literal `X J X^T` with J materialized. Test oracle for [`covariance`].
pub fn covariance_literal(x: &FeatureMatrix) -> Result<SymmetricMatrix> {
    let m = x.samples();
    let inv_m = 1.0 / m as f64;
    let mut j = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let v = if a == b { 1.0 - inv_m } else { -inv_m };
            j.set(a, b, v * inv_m);
        }
    }
    let xj = x.as_dense().matmul(&j)?;
    let sigma = xj.matmul(&x.as_dense().transpose())?;
    SymmetricMatrix::symmetrized(&sigma)
}
