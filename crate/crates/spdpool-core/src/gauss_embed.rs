//! Gaussian embedding block: a matrix partition layer that packs the
//! sample mean and covariance of a feature matrix into one (d+1)-order
//! SPD matrix, followed by a square-root SPD layer.
//!
//! The partition layer computes
//! `Y = (1/M) A X X^T A^T + (2/M) (A X 1 b^T)_sym + diag(0, .., 0, 1)`
//! with the selector `A = [I; 0^T]` and the unit vector `b = e_{d+1}`,
//! which works out to the block matrix
//! `[[Sigma + mu mu^T, mu], [mu^T, 1]]`. The implementation fills the
//! blocks directly; the selector constants are materialized only for
//! verification.

use crate::eig::DEFAULT_TRUNCATION;
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, SymmetricMatrix};
use crate::mpn::{mpn_backward, mpn_forward, MpnContext, MpnVariant};

/// Selector constants of the partition layer, materialized: the
/// (d+1) x d block selector `A = [I; 0^T]` and the last-coordinate unit
/// vector `b`. Kept for tests of the literal formula; computation uses
/// the block structure.
#[derive(Debug, Clone)]
pub struct PartitionConstants {
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

impl PartitionConstants {
    pub fn new(dim: usize) -> Self {
        let mut a = DenseMatrix::zeros(dim + 1, dim);
        for i in 0..dim {
            a.set(i, i, 1.0);
        }
        let mut b = vec![0.0; dim + 1];
        b[dim] = 1.0;
        Self { a, b }
    }
}

/// Partition layer forward: packs mean and second moment of `X` into the
/// (d+1)-order Gaussian embedding matrix.
pub fn partition_forward(x: &FeatureMatrix) -> SymmetricMatrix {
    let d = x.dim();
    let m = x.samples();
    let inv_m = 1.0 / m as f64;

    let mut y = DenseMatrix::zeros(d + 1, d + 1);
    // Top-left block: (1/M) X X^T = Sigma + mu mu^T.
    for i in 0..d {
        for j in i..d {
            let gram: f64 = (0..m).map(|c| x.get(i, c) * x.get(j, c)).sum();
            y.set(i, j, gram * inv_m);
            y.set(j, i, gram * inv_m);
        }
    }
    // Border: the mean vector; corner: 1.
    for i in 0..d {
        let mu_i: f64 = (0..m).map(|c| x.get(i, c)).sum::<f64>() * inv_m;
        y.set(i, d, mu_i);
        y.set(d, i, mu_i);
    }
    y.set(d, d, 1.0);
    SymmetricMatrix::from_dense_unchecked(y)
}

/// Literal evaluation of the partition formula with materialized
/// selector constants. Test oracle for [`partition_forward`].
pub fn partition_forward_literal(x: &FeatureMatrix) -> Result<SymmetricMatrix> {
    let d = x.dim();
    let m = x.samples();
    let inv_m = 1.0 / m as f64;
    let consts = PartitionConstants::new(d);

    let ax = consts.a.matmul(x.as_dense())?;
    let first = ax.matmul(&ax.transpose())?.scale(inv_m);

    // A X 1 b^T: outer product of the lifted row sums with b.
    let mut ax1 = vec![0.0; d + 1];
    for (i, slot) in ax1.iter_mut().enumerate() {
        *slot = (0..m).map(|c| ax.get(i, c)).sum();
    }
    let mut outer = DenseMatrix::zeros(d + 1, d + 1);
    for i in 0..=d {
        for j in 0..=d {
            outer.set(i, j, ax1[i] * consts.b[j]);
        }
    }
    let second = outer
        .add(&outer.transpose())?
        .scale(0.5)
        .scale(2.0 * inv_m);

    let mut corner = DenseMatrix::zeros(d + 1, d + 1);
    corner.set(d, d, 1.0);

    let y = first.add(&second)?.add(&corner)?;
    SymmetricMatrix::symmetrized(&y)
}

/// Cached state of the square-root SPD layer.
///
/// The layer is the matrix square root of the ridged input, i.e. matrix
/// power normalization with exponent 1/2, so the context wraps the power
/// normalization context directly.
#[derive(Debug, Clone)]
pub struct SqrtSpdContext {
    inner: MpnContext,
}

impl SqrtSpdContext {
    pub fn output(&self) -> &SymmetricMatrix {
        self.inner.output()
    }
}

/// Square-root SPD layer forward: `Z = (Y + ridge * I)^{1/2}` through the
/// symmetric eigendecomposition.
pub fn sqrtspd_forward(
    y: &SymmetricMatrix,
    ridge: f64,
) -> Result<(SymmetricMatrix, SqrtSpdContext)> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::ConfigError(format!(
            "ridge must be a nonnegative finite number, got {ridge}"
        )));
    }
    let ridged = if ridge == 0.0 {
        y.clone()
    } else {
        y.add_ridge(ridge)
    };
    let variant = MpnVariant::plain(0.5).expect("0.5 is a valid exponent");
    let (z, inner) = mpn_forward(&ridged, variant)?;
    Ok((z, SqrtSpdContext { inner }))
}

/// Square-root SPD layer backward.
///
/// The ridge is a constant shift, so its backward pass is the identity
/// and the gradient is exactly the power-normalization gradient at
/// exponent 1/2.
pub fn sqrtspd_backward(ctx: &SqrtSpdContext, d_z: &DenseMatrix) -> Result<DenseMatrix> {
    mpn_backward(&ctx.inner, d_z)
}

/// Partition layer backward:
/// `dX = (2/M) A^T (dY)_sym (A X + b 1^T)`.
pub fn partition_backward(x: &FeatureMatrix, d_y: &DenseMatrix) -> Result<DenseMatrix> {
    let d = x.dim();
    let m = x.samples();
    if d_y.rows() != d + 1 || d_y.cols() != d + 1 {
        return Err(Error::ShapeError(format!(
            "partition gradient must be {}x{}, got {}x{}",
            d + 1,
            d + 1,
            d_y.rows(),
            d_y.cols()
        )));
    }
    let scale = 2.0 / m as f64;

    // (dY)_sym restricted to its first d rows: the d x d block acts on X,
    // the border column acts on the all-ones row.
    let mut g_sym = DenseMatrix::zeros(d, d + 1);
    for i in 0..d {
        for j in 0..=d {
            g_sym.set(i, j, 0.5 * (d_y.get(i, j) + d_y.get(j, i)));
        }
    }
    let mut out = DenseMatrix::zeros(d, m);
    for i in 0..d {
        let g_border = g_sym.get(i, d);
        for c in 0..m {
            let mut acc = g_border;
            for j in 0..d {
                acc += g_sym.get(i, j) * x.get(j, c);
            }
            out.set(i, c, scale * acc);
        }
    }
    Ok(out)
}

/// Default ridge for the square-root SPD layer.
pub const DEFAULT_RIDGE: f64 = 1e-3;

/// Truncation threshold shared with the power-normalization path.
pub const TRUNCATION: f64 = DEFAULT_TRUNCATION;
