//! Iterative matrix square root: pre-normalization into the convergence
//! basin, the coupled Newton-Schulz iteration, post-compensation back to
//! the original scale, and the exact backward pass of the whole
//! composite.
//!
//! Forward, with `Y_0 = A`, `P_0 = I`:
//!
//! ```text
//! Y_k = 1/2 * Y_{k-1} (3I - P_{k-1} Y_{k-1})
//! P_k = 1/2 * (3I - P_{k-1} Y_{k-1}) P_{k-1}
//! ```
//!
//! `Y_k -> A^{1/2}` and `P_k -> A^{-1/2}` quadratically whenever
//! `||I - A||_2 < 1`, which pre-normalization by trace or Frobenius norm
//! guarantees for nonzero PSD input. Only matrix products are involved.
//!
//! The backward pass is the exact adjoint of the iteration as
//! implemented: it runs the coupled recursion in reverse over the cached
//! iterates, then folds in the normalizer's scale gradients from both the
//! pre-normalization and post-compensation stages. It is the gradient of
//! the computed map, independent of how well `Y_N` approximates the true
//! square root.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SymmetricMatrix};

/// Normalizer used to bring the input into the convergence basin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreNormMode {
    /// Divide by `tr(Sigma)`.
    #[default]
    Trace,
    /// Divide by `||Sigma||_F`.
    Frobenius,
}

impl PreNormMode {
    pub fn norm_value(&self, sigma: &SymmetricMatrix) -> f64 {
        match self {
            PreNormMode::Trace => sigma.trace(),
            PreNormMode::Frobenius => sigma.frobenius_norm(),
        }
    }
}

/// Cached forward state: the input, its normalizer, and every coupled
/// iterate. All of it is required by the backward recursion.
#[derive(Debug, Clone)]
pub struct NewtonSchulzContext {
    sigma: SymmetricMatrix,
    mode: PreNormMode,
    norm_value: f64,
    /// `ys[0] = A`, `ys[k] = Y_k`.
    ys: Vec<DenseMatrix>,
    /// `ps[0] = I`, `ps[k] = P_k`.
    ps: Vec<DenseMatrix>,
    iterations: usize,
}

impl NewtonSchulzContext {
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn mode(&self) -> PreNormMode {
        self.mode
    }

    pub fn norm_value(&self) -> f64 {
        self.norm_value
    }

    pub fn input(&self) -> &SymmetricMatrix {
        &self.sigma
    }

    /// Pre-normalized input `A = Sigma / norm_value`.
    pub fn a(&self) -> &DenseMatrix {
        &self.ys[0]
    }

    pub fn y(&self, k: usize) -> &DenseMatrix {
        &self.ys[k]
    }

    pub fn p(&self, k: usize) -> &DenseMatrix {
        &self.ps[k]
    }

    pub fn y_final(&self) -> &DenseMatrix {
        &self.ys[self.iterations]
    }
}

/// Pre-normalization: `A = Sigma / norm`, where `norm` is the trace or
/// the Frobenius norm of `Sigma`. The zero matrix (or an input whose
/// trace is non-positive) has no valid normalizer and is rejected.
pub fn pre_normalize(
    sigma: &SymmetricMatrix,
    mode: PreNormMode,
) -> Result<(SymmetricMatrix, f64)> {
    let norm = mode.norm_value(sigma);
    if norm <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "normalizer must be positive, got {norm:.6e}"
        )));
    }
    Ok((sigma.scale(1.0 / norm), norm))
}

/// Runs `n` coupled Newton-Schulz steps from `Y_0 = A`, `P_0 = I`,
/// caching all iterates.
fn iterate_from(a: DenseMatrix, n: usize) -> Result<(Vec<DenseMatrix>, Vec<DenseMatrix>)> {
    let d = a.rows();
    let identity = DenseMatrix::identity(d);
    let mut ys = Vec::with_capacity(n + 1);
    let mut ps = Vec::with_capacity(n + 1);
    ys.push(a);
    ps.push(identity.clone());

    for k in 1..=n {
        let prod = ps[k - 1].matmul(&ys[k - 1])?;
        // T = 3I - P Y, shared by both updates.
        let mut t = prod.scale(-1.0);
        for i in 0..d {
            let v = t.get(i, i);
            t.set(i, i, v + 3.0);
        }
        let y_next = ys[k - 1].matmul(&t)?.scale(0.5);
        let p_next = t.matmul(&ps[k - 1])?.scale(0.5);
        if !y_next.is_finite() || !p_next.is_finite() {
            return Err(Error::DivergenceError(format!(
                "non-finite iterate at step {k}"
            )));
        }
        ys.push(y_next);
        ps.push(p_next);
    }
    Ok((ys, ps))
}

/// Coupled Newton-Schulz iteration on a pre-normalized matrix.
///
/// Requires `n >= 1`. Intermediates are checked for finiteness each step;
/// divergence can only occur when the caller violates the
/// `||I - A||_2 < 1` precondition.
///
/// The returned context records a unit normalizer, i.e. it stands for
/// the composite layer evaluated at an input that is already normalized
/// (trace one). For gradients of the full layer use the context from
/// [`isqrt_forward`].
pub fn ns_iterate(a: &SymmetricMatrix, n: usize) -> Result<NewtonSchulzContext> {
    if n == 0 {
        return Err(Error::ConfigError(
            "iteration count must be at least 1".into(),
        ));
    }
    let (ys, ps) = iterate_from(a.to_dense(), n)?;
    Ok(NewtonSchulzContext {
        sigma: a.clone(),
        mode: PreNormMode::Trace,
        norm_value: 1.0,
        ys,
        ps,
        iterations: n,
    })
}

/// Post-compensation: `Z = sqrt(norm_value) * Y_N`, undoing the
/// magnitude change of pre-normalization.
pub fn post_compensate(y_final: &DenseMatrix, norm_value: f64) -> SymmetricMatrix {
    let scaled = y_final.scale(norm_value.sqrt());
    // The iterates are symmetric up to rounding; store the exact mirror.
    let d = scaled.rows();
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..d {
        out.set(i, i, scaled.get(i, i));
        for j in (i + 1)..d {
            let v = 0.5 * (scaled.get(i, j) + scaled.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    SymmetricMatrix::from_dense_unchecked(out)
}

/// Full iterative square-root layer: pre-normalize, iterate `n` steps,
/// post-compensate. Returns the approximation of `Sigma^{1/2}` and the
/// context needed for the backward pass.
pub fn isqrt_forward(
    sigma: &SymmetricMatrix,
    n: usize,
    mode: PreNormMode,
) -> Result<(SymmetricMatrix, NewtonSchulzContext)> {
    if n == 0 {
        return Err(Error::ConfigError(
            "iteration count must be at least 1".into(),
        ));
    }
    let (a, norm_value) = pre_normalize(sigma, mode)?;
    let (ys, ps) = iterate_from(a.into_dense(), n)?;
    let ctx = NewtonSchulzContext {
        sigma: sigma.clone(),
        mode,
        norm_value,
        ys,
        ps,
        iterations: n,
    };
    let z = post_compensate(ctx.y_final(), norm_value);
    Ok((z, ctx))
}

/// Maps [`isqrt_forward`] over a batch of independent matrices.
pub fn isqrt_forward_batch(
    sigmas: &[SymmetricMatrix],
    n: usize,
    mode: PreNormMode,
) -> Result<Vec<(SymmetricMatrix, NewtonSchulzContext)>> {
    sigmas.iter().map(|s| isqrt_forward(s, n, mode)).collect()
}

/// Backward pass of the full iterative square-root layer.
///
/// Given `dl/dZ`, computes in order: the post-compensation gradients
/// (mode-dependent), the reverse coupled recursion from `dl/dY_N` and
/// `dl/dP_N = 0` down to `dl/dY_1`, `dl/dP_1`, the collapse onto
/// `dl/dA`, and finally the pre-normalization gradient combined with the
/// post-compensation contribution to `dl/dSigma`. The result is
/// symmetrized, which is the projection of the raw adjoint onto the
/// symmetric perturbations the input admits.
pub fn isqrt_backward(ctx: &NewtonSchulzContext, d_z: &DenseMatrix) -> Result<DenseMatrix> {
    let d = ctx.sigma.dim();
    if d_z.rows() != d || d_z.cols() != d {
        return Err(Error::InvalidContext(format!(
            "gradient is {}x{} but the cached forward ran at order {d}",
            d_z.rows(),
            d_z.cols()
        )));
    }
    if ctx.ys.len() != ctx.iterations + 1 || ctx.ps.len() != ctx.iterations + 1 {
        return Err(Error::InvalidContext(
            "cached iterate count does not match the iteration count".into(),
        ));
    }

    let n = ctx.iterations;
    let norm = ctx.norm_value;
    let sqrt_norm = norm.sqrt();
    let y_final = ctx.y_final();

    // Post-compensation: dl/dY_N and the direct dl/dSigma contribution
    // through the sqrt(norm) factor.
    let mut g_y = d_z.scale(sqrt_norm);
    let tr_dz_yn = d_z.dot(y_final)?;
    let post_sigma = match ctx.mode {
        PreNormMode::Trace => {
            let coeff = tr_dz_yn / (2.0 * sqrt_norm);
            DenseMatrix::identity(d).scale(coeff)
        }
        PreNormMode::Frobenius => {
            let coeff = tr_dz_yn / (2.0 * norm.powf(1.5));
            ctx.sigma.as_dense().scale(coeff)
        }
    };

    // Reverse sweep over the coupled iteration.
    let mut g_p = DenseMatrix::zeros(d, d);
    for k in (2..=n).rev() {
        let y_prev = &ctx.ys[k - 1];
        let p_prev = &ctx.ps[k - 1];

        let yp = y_prev.matmul(p_prev)?;
        let mut t = yp.scale(-1.0);
        for i in 0..d {
            let v = t.get(i, i);
            t.set(i, i, v + 3.0);
        }
        let py = p_prev.matmul(y_prev)?;

        let new_g_y = g_y
            .matmul(&t)?
            .sub(&p_prev.matmul(&g_p)?.matmul(p_prev)?)?
            .sub(&py.matmul(&g_y)?)?
            .scale(0.5);
        let new_g_p = t
            .matmul(&g_p)?
            .sub(&y_prev.matmul(&g_y)?.matmul(y_prev)?)?
            .sub(&g_p.matmul(&py)?)?
            .scale(0.5);
        g_y = new_g_y;
        g_p = new_g_p;
    }

    // Collapse the first step onto A (Y_0 = A, P_0 = I).
    let a = ctx.a();
    let mut three_i_minus_a = a.scale(-1.0);
    for i in 0..d {
        let v = three_i_minus_a.get(i, i);
        three_i_minus_a.set(i, i, v + 3.0);
    }
    let g_a = g_y
        .matmul(&three_i_minus_a)?
        .sub(&g_p)?
        .sub(&a.matmul(&g_y)?)?
        .scale(0.5);

    // Pre-normalization gradient plus the post-compensation term.
    let tr_ga_sigma = g_a.dot(ctx.sigma.as_dense())?;
    let d_sigma = match ctx.mode {
        PreNormMode::Trace => {
            let first = DenseMatrix::identity(d).scale(-tr_ga_sigma / (norm * norm));
            first.add(&g_a.scale(1.0 / norm))?.add(&post_sigma)?
        }
        PreNormMode::Frobenius => {
            let first = ctx
                .sigma
                .as_dense()
                .scale(-tr_ga_sigma / (norm * norm * norm));
            first.add(&g_a.scale(1.0 / norm))?.add(&post_sigma)?
        }
    };

    // Project onto symmetric directions.
    let mut out = DenseMatrix::zeros(d, d);
    for i in 0..d {
        out.set(i, i, d_sigma.get(i, i));
        for j in (i + 1)..d {
            let v = 0.5 * (d_sigma.get(i, j) + d_sigma.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_normalize_diagonal_examples() {
        let s = SymmetricMatrix::diagonal(&[4.0, 1.0]).unwrap();
        let (a, norm) = pre_normalize(&s, PreNormMode::Trace).unwrap();
        assert_eq!(norm, 5.0);
        assert!((a.get(0, 0) - 0.8).abs() < 1e-15);
        assert!((a.get(1, 1) - 0.2).abs() < 1e-15);

        let (a, norm) = pre_normalize(&s, PreNormMode::Frobenius).unwrap();
        let r17 = 17.0f64.sqrt();
        assert!((norm - r17).abs() < 1e-15);
        assert!((a.get(0, 0) - 4.0 / r17).abs() < 1e-15);
    }

    #[test]
    fn pre_normalize_rejects_zero() {
        let z = SymmetricMatrix::zeros(3);
        assert!(matches!(
            pre_normalize(&z, PreNormMode::Trace),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            pre_normalize(&z, PreNormMode::Frobenius),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let i = SymmetricMatrix::identity(3);
        let ctx = ns_iterate(&i, 6).unwrap();
        for k in 0..=6 {
            let dy = ctx.y(k).sub(i.as_dense()).unwrap();
            let dp = ctx.p(k).sub(i.as_dense()).unwrap();
            assert!(dy.max_abs_entry() < 1e-14);
            assert!(dp.max_abs_entry() < 1e-14);
        }
    }

    /// Scalar coupled recursion, used as an independent oracle.
    fn scalar_recursion(a: f64, n: usize) -> (f64, f64) {
        let mut y = a;
        let mut p = 1.0;
        for _ in 0..n {
            let t = 3.0 - p * y;
            let y_next = 0.5 * y * t;
            let p_next = 0.5 * t * p;
            y = y_next;
            p = p_next;
        }
        (y, p)
    }

    #[test]
    fn half_identity_matches_scalar_recursion() {
        let a = SymmetricMatrix::identity(2).scale(0.5);
        let ctx = ns_iterate(&a, 5).unwrap();
        let (y5, p5) = scalar_recursion(0.5, 5);
        for i in 0..2 {
            assert!((ctx.y(5).get(i, i) - y5).abs() < 1e-14);
            assert!((ctx.p(5).get(i, i) - p5).abs() < 1e-14);
        }
        // The scalar iterate is already close to 1/sqrt(2) = 0.707107...
        assert!((y5 - 0.5f64.sqrt()).abs() < 1e-4);
        assert_eq!(format!("{y5:.5}"), "0.70711");
    }

    #[test]
    fn post_compensate_scales() {
        let y = DenseMatrix::identity(2);
        let z = post_compensate(&y, 4.0);
        assert!((z.get(0, 0) - 2.0).abs() < 1e-15);
        assert!(z.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn identity_end_to_end() {
        let s = SymmetricMatrix::identity(2);
        let (z, _) = isqrt_forward(&s, 5, PreNormMode::Trace).unwrap();
        let diff = z.as_dense().sub(&DenseMatrix::identity(2)).unwrap();
        assert!(diff.max_abs_entry() < 1e-4);
    }

    #[test]
    fn diagonal_converges_to_exact_root() {
        let s = SymmetricMatrix::diagonal(&[4.0, 1.0]).unwrap();
        let (z, _) = isqrt_forward(&s, 20, PreNormMode::Trace).unwrap();
        assert!((z.get(0, 0) - 2.0).abs() < 1e-6);
        assert!((z.get(1, 1) - 1.0).abs() < 1e-6);
        assert!(z.get(0, 1).abs() < 1e-6);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let z = SymmetricMatrix::zeros(4);
        assert!(matches!(
            isqrt_forward(&z, 5, PreNormMode::Trace),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn rejects_zero_iterations() {
        let s = SymmetricMatrix::identity(2);
        assert!(matches!(
            isqrt_forward(&s, 0, PreNormMode::Trace),
            Err(Error::ConfigError(_))
        ));
    }

    #[test]
    fn backward_zero_gradient() {
        let s = SymmetricMatrix::diagonal(&[3.0, 1.0]).unwrap();
        let (_, ctx) = isqrt_forward(&s, 4, PreNormMode::Trace).unwrap();
        let dz = DenseMatrix::zeros(2, 2);
        let ds = isqrt_backward(&ctx, &dz).unwrap();
        assert_eq!(ds.max_abs_entry(), 0.0);
    }

    #[test]
    fn backward_rejects_mismatched_gradient() {
        let s = SymmetricMatrix::diagonal(&[3.0, 1.0]).unwrap();
        let (_, ctx) = isqrt_forward(&s, 4, PreNormMode::Trace).unwrap();
        let dz = DenseMatrix::zeros(3, 3);
        assert!(matches!(
            isqrt_backward(&ctx, &dz),
            Err(Error::InvalidContext(_))
        ));
    }

    /// Forward-mode scalar derivative of the full trace-mode layer at
    /// order one, propagated through the recursion with dual numbers by
    /// hand. Oracle for the matrix backward at d = 1.
    fn scalar_layer_derivative(sigma: f64, n: usize) -> f64 {
        // Dual numbers (value, derivative w.r.t. sigma). The trace equals
        // sigma at order one, so a = sigma / tr(sigma) = 1 with zero
        // derivative; kept in full form to mirror the layer.
        let t = sigma;
        let a_val = sigma / t;
        let a_dot = 1.0 / t - sigma / (t * t);
        let (mut y, mut y_dot) = (a_val, a_dot);
        let (mut p, mut p_dot) = (1.0, 0.0);
        for _ in 0..n {
            let w = 3.0 - p * y;
            let w_dot = -(p_dot * y + p * y_dot);
            let y_next = 0.5 * y * w;
            let y_next_dot = 0.5 * (y_dot * w + y * w_dot);
            let p_next = 0.5 * w * p;
            let p_next_dot = 0.5 * (w_dot * p + w * p_dot);
            y = y_next;
            y_dot = y_next_dot;
            p = p_next;
            p_dot = p_next_dot;
        }
        // z = sqrt(sigma) * y
        0.5 / sigma.sqrt() * y + sigma.sqrt() * y_dot
    }

    #[test]
    fn scalar_case_matches_hand_unrolled_derivative() {
        let sigma = 4.0;
        let n = 3;
        let s = SymmetricMatrix::diagonal(&[sigma]).unwrap();
        let (_, ctx) = isqrt_forward(&s, n, PreNormMode::Trace).unwrap();
        let dz = DenseMatrix::identity(1); // l = Z
        let ds = isqrt_backward(&ctx, &dz).unwrap();
        let oracle = scalar_layer_derivative(sigma, n);
        assert!(
            (ds.get(0, 0) - oracle).abs() < 1e-12,
            "{} vs {}",
            ds.get(0, 0),
            oracle
        );
        // At order one, A = 1 exactly, so Z = sqrt(sigma) and the
        // derivative is 1 / (2 sqrt(sigma)).
        assert!((ds.get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn squared_iterate_residual_is_nonincreasing() {
        // || Y_k Y_k - A ||_F over the iteration, pre-normalized input.
        let s = SymmetricMatrix::symmetrized(
            &DenseMatrix::from_rows(&[
                vec![1.8, 0.4, -0.2, 0.1],
                vec![0.4, 1.2, 0.3, -0.3],
                vec![-0.2, 0.3, 0.9, 0.2],
                vec![0.1, -0.3, 0.2, 1.5],
            ])
            .unwrap(),
        )
        .unwrap();
        let (a, _) = pre_normalize(&s, PreNormMode::Trace).unwrap();
        let ctx = ns_iterate(&a, 10).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let sq = ctx.y(k).matmul(ctx.y(k)).unwrap();
            let err = sq.sub(a.as_dense()).unwrap().frobenius_norm();
            assert!(
                err.max(1e-12) <= last.max(1e-12),
                "residual grew to {err:.3e} at step {k}"
            );
            last = err;
        }
    }

    #[test]
    fn trace_and_frobenius_agree_at_convergence() {
        let s = SymmetricMatrix::symmetrized(
            &DenseMatrix::from_rows(&[
                vec![2.5, 0.6, -0.4],
                vec![0.6, 1.4, 0.2],
                vec![-0.4, 0.2, 0.8],
            ])
            .unwrap(),
        )
        .unwrap();
        let (z_trace, _) = isqrt_forward(&s, 20, PreNormMode::Trace).unwrap();
        let (z_fro, _) = isqrt_forward(&s, 20, PreNormMode::Frobenius).unwrap();
        let rel = z_trace.as_dense().sub(z_fro.as_dense()).unwrap().frobenius_norm()
            / z_trace.frobenius_norm();
        assert!(rel <= 1e-6, "modes disagree by {rel:.3e} at N = 20");
    }

    #[test]
    fn iterates_stay_symmetric() {
        let s = SymmetricMatrix::symmetrized(
            &DenseMatrix::from_rows(&[
                vec![2.0, 0.3, -0.1],
                vec![0.3, 1.5, 0.2],
                vec![-0.1, 0.2, 1.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let (_, ctx) = isqrt_forward(&s, 8, PreNormMode::Frobenius).unwrap();
        for k in 0..=8 {
            assert!(ctx.y(k).max_asymmetry() <= 1e-10);
            assert!(ctx.p(k).max_asymmetry() <= 1e-10);
        }
    }
}
