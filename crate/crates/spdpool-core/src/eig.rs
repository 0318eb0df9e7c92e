//! Symmetric eigendecomposition by cyclic Jacobi rotations, plus the
//! spectral-calculus operations built on it (matrix power, matrix log).
//!
//! Jacobi is slower than tridiagonal methods for large orders but is
//! simple, unconditionally convergent for symmetric input, and accurate
//! for the orders this library targets (d <= 512). The implementation is
//! strictly sequential with a fixed sweep order, so results are
//! bit-reproducible for identical input.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SymmetricMatrix};

/// Sweep cutoff: converged once `max_ij |S_ij| <= OFF_DIAG_TOL * ||S||_F`.
const OFF_DIAG_TOL: f64 = 1e-14;

/// Hard budget on Jacobi sweeps before reporting a convergence failure.
const MAX_SWEEPS: usize = 100;

/// Default relative truncation threshold for near-zero eigenvalues.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

/// Relative floor applied to eigenvalues inside the matrix logarithm.
const LOG_EIGENVALUE_FLOOR: f64 = 1e-12;

/// Spectral factorization `S = U diag(eigenvalues) U^T`.
///
/// Eigenvalues are sorted non-increasing; `u` holds the corresponding
/// eigenvectors as columns. Each column is sign-fixed so that its entry
/// of largest magnitude is positive (ties broken by lowest row index),
/// which makes the factorization a deterministic function of the input.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    eigenvalues: Vec<f64>,
    u: DenseMatrix,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Smallest eigenvalue.
    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Orthogonal eigenvector matrix (columns match `eigenvalues`).
    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Reassembles `U diag(values) U^T` for an arbitrary spectrum
    /// substitution. The accumulation runs over rank-one terms, which
    /// keeps the result exactly symmetric in floating point.
    pub fn assemble(&self, values: &[f64]) -> SymmetricMatrix {
        let d = self.dim();
        debug_assert_eq!(values.len(), d);
        let mut out = DenseMatrix::zeros(d, d);
        for (k, &v) in values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for i in 0..d {
                let ui = self.u.get(i, k) * v;
                if ui == 0.0 {
                    continue;
                }
                for j in i..d {
                    let c = ui * self.u.get(j, k);
                    let cur = out.get(i, j);
                    out.set(i, j, cur + c);
                }
            }
        }
        // Mirror the accumulated upper triangle.
        for i in 0..d {
            for j in (i + 1)..d {
                let v = out.get(i, j);
                out.set(j, i, v);
            }
        }
        SymmetricMatrix::from_dense_unchecked(out)
    }

    /// Diagonal of `U^T G U` without forming the full congruence.
    pub fn congruence_diagonal(&self, g: &DenseMatrix) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut gu = vec![0.0; d];
        for (k, slot) in out.iter_mut().enumerate() {
            // gu = G * u_k
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += g.get(i, j) * self.u.get(j, k);
                }
                gu[i] = acc;
            }
            *slot = (0..d).map(|i| self.u.get(i, k) * gu[i]).sum();
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Rotations are applied in fixed row-cyclic order `(p, q)` with `p < q`
/// until every off-diagonal entry is at most `1e-14 * ||S||_F`, or the
/// sweep budget runs out.
pub fn sym_eig(s: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let d = s.dim();
    let mut a = s.to_dense();
    let mut u = DenseMatrix::identity(d);
    let tol = OFF_DIAG_TOL * s.frobenius_norm();

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut off_max = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                off_max = off_max.max(a.get(i, j).abs());
            }
        }
        if off_max <= tol {
            converged = true;
            break;
        }
        for p in 0..d.saturating_sub(1) {
            for q in (p + 1)..d {
                rotate(&mut a, &mut u, p, q);
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let mut off_max = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                off_max = off_max.max(a.get(i, j).abs());
            }
        }
        if off_max > tol {
            return Err(Error::ConvergenceError(MAX_SWEEPS));
        }
    }

    let mut eigenvalues: Vec<f64> = (0..d).map(|i| a.get(i, i)).collect();

    // Sort non-increasing; stable on ties so repeated eigenvalues keep
    // their Jacobi order.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());
    eigenvalues = order.iter().map(|&i| eigenvalues[i]).collect();
    let mut sorted_u = DenseMatrix::zeros(d, d);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..d {
            sorted_u.set(r, new_col, u.get(r, old_col));
        }
    }

    // Sign convention: the entry of largest magnitude in each column is
    // positive, first such entry wins on ties.
    for c in 0..d {
        let mut best_row = 0;
        let mut best_mag = sorted_u.get(0, c).abs();
        for r in 1..d {
            let mag = sorted_u.get(r, c).abs();
            if mag > best_mag {
                best_mag = mag;
                best_row = r;
            }
        }
        if sorted_u.get(best_row, c) < 0.0 {
            for r in 0..d {
                let v = sorted_u.get(r, c);
                sorted_u.set(r, c, -v);
            }
        }
    }

    Ok(EigenDecomposition {
        eigenvalues,
        u: sorted_u,
    })
}

/// One Jacobi rotation annihilating `a[p][q]`, mirrored into the full
/// square storage, with the rotation accumulated into `u`.
fn rotate(a: &mut DenseMatrix, u: &mut DenseMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let diff = a.get(q, q) - a.get(p, p);
    let t = if diff == 0.0 {
        1.0
    } else {
        let theta = 0.5 * diff / apq;
        let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    let h = t * apq;
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    a.set(p, p, app - h);
    a.set(q, q, aqq + h);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    let d = a.rows();
    for j in 0..d {
        if j == p || j == q {
            continue;
        }
        let g = a.get(j, p);
        let h = a.get(j, q);
        let gp = g - s * (h + g * tau);
        let gq = h + s * (g - h * tau);
        a.set(j, p, gp);
        a.set(p, j, gp);
        a.set(j, q, gq);
        a.set(q, j, gq);
    }
    for j in 0..d {
        let g = u.get(j, p);
        let h = u.get(j, q);
        u.set(j, p, g - s * (h + g * tau));
        u.set(j, q, h + s * (g - h * tau));
    }
}

/// Truncates the spectrum of a PSD matrix: eigenvalues below
/// `truncation * lambda_max` become zero, eigenvalues below the negative
/// tolerance are an error.
///
/// Returns the truncated spectrum. `lambda_max <= 0` is accepted only
/// when the whole spectrum truncates to zero.
pub(crate) fn truncate_psd_spectrum(eigenvalues: &[f64], truncation: f64) -> Result<Vec<f64>> {
    let lambda_max = eigenvalues[0];
    let cutoff = truncation * lambda_max.max(0.0);
    let mut out = Vec::with_capacity(eigenvalues.len());
    for &l in eigenvalues {
        if l < -cutoff {
            return Err(Error::NotPSD(format!(
                "eigenvalue {l:.6e} below tolerance -{cutoff:.6e}"
            )));
        }
        out.push(if l < cutoff || l < 0.0 { 0.0 } else { l });
    }
    Ok(out)
}

/// Matrix power through the spectral map `f(lambda) = lambda^alpha`.
///
/// Eigenvalues below `truncation * lambda_max` are zeroed before
/// powering; an eigenvalue below the negative tolerance reports `NotPSD`.
pub fn matpow_via_eig(
    s: &SymmetricMatrix,
    alpha: f64,
    truncation: f64,
) -> Result<SymmetricMatrix> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::ConfigError(format!(
            "matrix power exponent must be positive, got {alpha}"
        )));
    }
    if truncation < 0.0 {
        return Err(Error::ConfigError(format!(
            "truncation threshold must be nonnegative, got {truncation}"
        )));
    }
    let eig = sym_eig(s)?;
    let lambda = truncate_psd_spectrum(eig.eigenvalues(), truncation)?;
    let powered: Vec<f64> = lambda.iter().map(|&l| l.powf(alpha)).collect();
    Ok(eig.assemble(&powered))
}

/// Matrix logarithm of a strictly positive definite matrix.
///
/// Eigenvalues are floored at `1e-12 * lambda_max` before taking logs;
/// a non-positive eigenvalue reports `NotSPD`.
pub fn matrix_log(s: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = sym_eig(s)?;
    let lambda_max = eig.lambda_max();
    if eig.lambda_min() <= 0.0 {
        return Err(Error::NotSPD(format!(
            "matrix logarithm requires strictly positive eigenvalues, smallest is {:.6e}",
            eig.lambda_min()
        )));
    }
    let floor = LOG_EIGENVALUE_FLOOR * lambda_max;
    let logs: Vec<f64> = eig
        .eigenvalues()
        .iter()
        .map(|&l| l.max(floor).ln())
        .collect();
    Ok(eig.assemble(&logs))
}
