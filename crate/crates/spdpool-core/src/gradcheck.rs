//! Central finite-difference gradient certification.
//!
//! Every analytic backward pass in this crate is certified against
//! `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` on seeded random inputs.
//! The harness also provides the seeded SPD generators the checks run on.

use crate::eig::sym_eig;
use crate::error::Result;
use crate::matrix::{DenseMatrix, SymmetricMatrix};
use rand::Rng;
use serde::Serialize;

/// Default central-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Default relative tolerance for a passing comparison.
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Default absolute floor in the relative-error denominator.
pub const DEFAULT_ABS_TOL: f64 = 1e-8;

/// Outcome of one analytic-vs-numeric comparison.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Operation label, filled by the caller.
    pub op: String,
    /// Input shape label, e.g. "8x16".
    pub shape: String,
    /// Perturbation step used for the numeric side.
    pub epsilon: f64,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Coordinate attaining the worst relative error.
    pub worst_index: usize,
    pub pass: bool,
}

impl GradCheckReport {
    /// Attaches context labels to a bare comparison.
    pub fn named(mut self, op: &str, shape: &str, epsilon: f64) -> Self {
        self.op = op.to_string();
        self.shape = shape.to_string();
        self.epsilon = epsilon;
        self
    }
}

/// Central finite differences of a scalar function at `x`.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "perturbation step must be positive");
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&probe);
        probe[i] = orig - eps;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Compares an analytic gradient against a numeric one.
///
/// Per-coordinate relative error is `|a - n| / max(|a|, |n|, abs_tol)`;
/// the report passes when the worst relative error is at most `rel_tol`.
/// The comparison is symmetric in the two arrays.
pub fn check(analytic: &[f64], numeric: &[f64], rel_tol: f64, abs_tol: f64) -> GradCheckReport {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "gradient arrays must have equal length"
    );
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = 0usize;
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(abs_tol);
        if rel > max_rel {
            max_rel = rel;
            worst = i;
        }
        max_abs = max_abs.max(abs);
    }
    GradCheckReport {
        op: String::new(),
        shape: String::new(),
        epsilon: f64::NAN,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        worst_index: worst,
        pass: max_rel <= rel_tol,
    }
}

/// Random symmetric matrix with independent N(0, 1)-ish entries.
pub fn random_symmetric<R: Rng>(dim: usize, rng: &mut R) -> SymmetricMatrix {
    let mut m = SymmetricMatrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            m.set_sym(i, j, rng.gen_range(-1.0..1.0));
        }
    }
    m
}

/// Random SPD matrix `B B^T + margin * I`.
pub fn random_spd<R: Rng>(dim: usize, margin: f64, rng: &mut R) -> SymmetricMatrix {
    let data: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = DenseMatrix::from_parts_unchecked(dim, dim, data);
    let bbt = b.matmul(&b.transpose()).expect("square product");
    let mut s = SymmetricMatrix::symmetrized(&bbt).expect("b b^T is square and finite");
    if margin != 0.0 {
        s = s.add_ridge(margin);
    }
    s
}

/// Random SPD matrix whose consecutive eigenvalue gaps are all at least
/// `min_gap`.
///
/// Draws `B B^T` plus a staircase diagonal shift that pushes eigenvalues
/// apart, then rejects until the spectrum verifies the gap (and an SPD
/// margin of the same size). Eigendecomposition-path gradients are
/// singular at repeated eigenvalues, so their checks sample from this
/// generator.
pub fn random_spd_gapped<R: Rng>(dim: usize, min_gap: f64, rng: &mut R) -> SymmetricMatrix {
    for _ in 0..1000 {
        let mut s = random_spd(dim, min_gap, rng);
        for i in 0..dim {
            let v = s.get(i, i);
            s.set_sym(i, i, v + 2.0 * min_gap * i as f64);
        }
        let eig = sym_eig(&s).expect("random symmetric input converges");
        let lambda = eig.eigenvalues();
        let gap_ok = lambda.windows(2).all(|w| w[0] - w[1] >= min_gap);
        if gap_ok && eig.lambda_min() >= min_gap {
            return s;
        }
    }
    panic!("failed to draw a gapped SPD matrix after 1000 attempts");
}

/// Random SPD matrix with an exactly prescribed spectrum: log-spaced
/// eigenvalues between `lambda_max / cond` and `lambda_max`, rotated by a
/// random orthogonal basis.
pub fn random_spd_with_cond<R: Rng>(
    dim: usize,
    cond: f64,
    lambda_max: f64,
    rng: &mut R,
) -> Result<SymmetricMatrix> {
    let basis = sym_eig(&random_symmetric(dim, rng))?;
    let lambda_min = lambda_max / cond;
    let values: Vec<f64> = (0..dim)
        .map(|i| {
            let t = if dim == 1 {
                0.0
            } else {
                i as f64 / (dim - 1) as f64
            };
            // log-spaced from lambda_max down to lambda_min
            (lambda_max.ln() * (1.0 - t) + lambda_min.ln() * t).exp()
        })
        .collect();
    Ok(basis.assemble(&values))
}
