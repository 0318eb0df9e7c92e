//! Dense row-major matrices and the symmetric/feature newtypes used by
//! every layer.
//!
//! All storage is `f64`. Constructors validate finiteness; internal
//! operations that provably preserve finiteness use the unchecked path.

use crate::error::{Error, Result};

/// Dense row-major matrix of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeError(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeError(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("matrix contains NaN or Inf".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_parts_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeError("ragged row lengths".into()));
        }
        Self::new(r, c, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Row-major entry slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeError(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        // i-k-j loop order keeps the inner traversal contiguous.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += aik * s;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeError(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_parts_unchecked(self.rows, self.cols, data))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeError(format!(
                "cannot subtract {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_parts_unchecked(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        let data = self.data.iter().map(|v| v * s).collect();
        Self::from_parts_unchecked(self.rows, self.cols, data)
    }

    /// Sum of diagonal entries. Requires a square matrix.
    pub fn trace(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest |a_ij - a_ji| over a square matrix.
    pub fn max_asymmetry(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius inner product `sum_ij a_ij * b_ij`.
    pub fn dot(&self, other: &DenseMatrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeError(format!(
                "inner product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// `tr(self * other)` for square operands of equal order.
    pub fn trace_product(&self, other: &DenseMatrix) -> Result<f64> {
        if self.rows != other.cols || self.cols != other.rows {
            return Err(Error::ShapeError(format!(
                "trace product of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += self.get(i, j) * other.get(j, i);
            }
        }
        Ok(acc)
    }
}

/// Symmetric matrix with exactly mirrored storage.
///
/// Construction either verifies or enforces `a_ij == a_ji`; every mutation
/// path keeps the mirror exact, so symmetry of stored values is a hard
/// invariant rather than a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DenseMatrix,
}

impl SymmetricMatrix {
    /// Symmetrizes a square matrix: `(A + A^T) / 2`.
    pub fn symmetrized(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeError(format!(
                "cannot symmetrize a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidInput("matrix contains NaN or Inf".into()));
        }
        let d = a.rows();
        let mut inner = DenseMatrix::zeros(d, d);
        for i in 0..d {
            inner.set(i, i, a.get(i, i));
            for j in (i + 1)..d {
                let v = 0.5 * (a.get(i, j) + a.get(j, i));
                inner.set(i, j, v);
                inner.set(j, i, v);
            }
        }
        Ok(Self { inner })
    }

    /// Wraps a matrix that is already exactly symmetric.
    pub fn from_dense_exact(a: DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::ShapeError(format!(
                "symmetric matrix must be square, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::InvalidInput("matrix contains NaN or Inf".into()));
        }
        if a.max_asymmetry() != 0.0 {
            return Err(Error::InvalidInput(
                "matrix entries are not exactly symmetric".into(),
            ));
        }
        Ok(Self { inner: a })
    }

    pub(crate) fn from_dense_unchecked(a: DenseMatrix) -> Self {
        debug_assert_eq!(a.rows(), a.cols());
        debug_assert_eq!(a.max_asymmetry(), 0.0);
        Self { inner: a }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DenseMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DenseMatrix::identity(dim),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::ShapeError("empty diagonal".into()));
        }
        if !diag.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("diagonal contains NaN or Inf".into()));
        }
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.inner.set(i, i, *v);
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    /// Sets `a_ij` and `a_ji` together.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.inner.set(i, j, v);
        self.inner.set(j, i, v);
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.inner
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.inner.clone()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }

    pub fn scale(&self, s: f64) -> SymmetricMatrix {
        Self {
            inner: self.inner.scale(s),
        }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        Ok(Self {
            inner: self.inner.add(&other.inner)?,
        })
    }

    pub fn sub(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        Ok(Self {
            inner: self.inner.sub(&other.inner)?,
        })
    }

    /// Adds `v` to every diagonal entry.
    pub fn add_ridge(&self, v: f64) -> SymmetricMatrix {
        let mut out = self.clone();
        for i in 0..out.dim() {
            let cur = out.get(i, i);
            out.inner.set(i, i, cur + v);
        }
        out
    }
}

/// Matrix of local features: `dim x samples`, one feature vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    inner: DenseMatrix,
}

impl FeatureMatrix {
    pub fn new(inner: DenseMatrix) -> Result<Self> {
        if !inner.is_finite() {
            return Err(Error::InvalidInput(
                "feature matrix contains NaN or Inf".into(),
            ));
        }
        Ok(Self { inner })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    /// Feature dimension d (number of rows).
    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    /// Sample count M (number of columns).
    #[inline]
    pub fn samples(&self) -> usize {
        self.inner.cols()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.inner.get(r, c)
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.inner
    }
}

/// `(A + A^T) / 2` of a square matrix, as a symmetric value.
pub fn symmetrize(a: &DenseMatrix) -> Result<SymmetricMatrix> {
    SymmetricMatrix::symmetrized(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        let a = DenseMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        let b = DenseMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::ShapeError(_))));
    }

    #[test]
    fn matmul_small() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn symmetrize_halves_off_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let s = symmetrize(&a).unwrap();
        assert_eq!(s.get(0, 1), 1.5);
        assert_eq!(s.get(1, 0), 1.5);
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn trace_and_frobenius() {
        let s = SymmetricMatrix::diagonal(&[4.0, 1.0]).unwrap();
        assert_eq!(s.trace(), 5.0);
        assert!((s.frobenius_norm() - 17.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_symmetry_check() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0 + 1e-16, 1.0]]).unwrap();
        // 2.0 + 1e-16 rounds to 2.0 in f64, so this is exactly symmetric.
        assert!(SymmetricMatrix::from_dense_exact(a).is_ok());
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).unwrap();
        assert!(SymmetricMatrix::from_dense_exact(b).is_err());
    }
}
