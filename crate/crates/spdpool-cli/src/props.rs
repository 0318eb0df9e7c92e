//! Numerical verification of the two structural propositions behind
//! matrix power normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spdpool_core::gradcheck::{finite_diff, random_spd, random_symmetric};
use spdpool_core::mpn::{lerm, powe_metric, vnmle_objective};
use spdpool_core::{matpow_via_eig, sym_eig, DenseMatrix, Result, SymmetricMatrix};

/// Random SPD matrix with log-uniform eigenvalues in `[lo, hi]` and a
/// random orthogonal eigenbasis.
pub fn spd_with_spectrum<R: Rng>(dim: usize, lo: f64, hi: f64, rng: &mut R) -> SymmetricMatrix {
    let basis = sym_eig(&random_symmetric(dim, rng)).expect("random symmetric converges");
    let mut values: Vec<f64> = (0..dim)
        .map(|_| rng.gen_range(lo.ln()..hi.ln()).exp())
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    basis.assemble(&values)
}

/// One row of the power-metric limit table.
#[derive(Debug, Clone, Serialize)]
pub struct PoweLimitRow {
    pub alpha: f64,
    pub mean_abs_gap: f64,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
}

/// Result of the power-metric limit verification.
#[derive(Debug, Clone)]
pub struct PoweLimitReport {
    pub rows: Vec<PoweLimitRow>,
    /// Every monotone-regime pair had a nonincreasing gap sequence.
    pub monotone: bool,
    /// Largest relative gap at the smallest exponent, full-range pairs.
    pub final_rel_gap: f64,
    pub pass: bool,
}

/// Verifies that the power-Euclidean metric approaches the log-Euclidean
/// one.
///
/// Monotone approach of `|d_alpha - LERM|` is a theorem when every
/// eigenvalue of both operands is at least one (each cross term of the
/// squared Frobenius expansion is a positive power series in alpha);
/// spectra straddling one can make the signed gap change sign inside the
/// grid. The monotone clause therefore samples spectra from `[1, 10]`
/// and the limit clause from the full `[0.1, 10]` envelope.
pub fn verify_powe_limit(
    pairs: usize,
    dim: usize,
    alphas: &[f64],
    seed: u64,
) -> Result<PoweLimitReport> {
    if alphas.len() < 2 || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(spdpool_core::Error::ConfigError(
            "exponent grid must be strictly decreasing with at least two points".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut monotone = true;
    let mut rows: Vec<PoweLimitRow> = alphas
        .iter()
        .map(|&alpha| PoweLimitRow {
            alpha,
            mean_abs_gap: 0.0,
            max_abs_gap: 0.0,
            max_rel_gap: 0.0,
        })
        .collect();

    for _ in 0..pairs {
        let a = spd_with_spectrum(dim, 1.0, 10.0, &mut rng);
        let b = spd_with_spectrum(dim, 1.0, 10.0, &mut rng);
        let reference = lerm(&a, &b)?;
        let mut last = f64::INFINITY;
        for (row, &alpha) in rows.iter_mut().zip(alphas) {
            let gap = (powe_metric(&a, &b, alpha)? - reference).abs();
            if gap > last + 1e-12 {
                monotone = false;
            }
            last = gap;
            row.mean_abs_gap += gap / pairs as f64;
            row.max_abs_gap = row.max_abs_gap.max(gap);
            row.max_rel_gap = row.max_rel_gap.max(gap / reference);
        }
    }

    // Limit clause over the full eigenvalue envelope.
    let smallest_alpha = *alphas.last().unwrap();
    let mut final_rel_gap = 0.0f64;
    for _ in 0..pairs {
        let a = spd_with_spectrum(dim, 0.1, 10.0, &mut rng);
        let b = spd_with_spectrum(dim, 0.1, 10.0, &mut rng);
        let reference = lerm(&a, &b)?;
        let gap = (powe_metric(&a, &b, smallest_alpha)? - reference).abs();
        final_rel_gap = final_rel_gap.max(gap / reference);
    }

    let monotone_final = rows.last().unwrap().max_rel_gap;
    let pass = monotone && final_rel_gap <= 1e-2 && monotone_final <= 1e-2;
    Ok(PoweLimitReport {
        rows,
        monotone,
        final_rel_gap,
        pass,
    })
}

/// Result of the estimator-minimizer verification.
#[derive(Debug, Clone, Serialize)]
pub struct VnmleReport {
    pub trials: usize,
    pub perturbations_per_trial: usize,
    /// Largest finite-difference gradient entry at the square root.
    pub max_gradient_entry: f64,
    /// Every perturbed estimate scored strictly worse.
    pub all_perturbations_larger: bool,
    pub pass: bool,
}

/// Verifies that the matrix square root of the sample covariance is the
/// stationary minimizer of the divergence-regularized objective at unit
/// regularization weight.
pub fn verify_vnmle_argmin(
    trials: usize,
    max_dim: usize,
    perturbations: usize,
    seed: u64,
) -> Result<VnmleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_gradient_entry = 0.0f64;
    let mut all_larger = true;

    for trial in 0..trials {
        let dim = 2 + (trial % (max_dim - 1));
        let s = random_spd(dim, 0.1, &mut rng);
        let root = matpow_via_eig(&s, 0.5, 0.0)?;

        let loss = |raw: &[f64]| {
            let m = DenseMatrix::new(dim, dim, raw.to_vec()).unwrap();
            let est = SymmetricMatrix::symmetrized(&m).unwrap();
            vnmle_objective(&est, &s, 1.0).unwrap()
        };
        let grad = finite_diff(loss, root.as_dense().as_slice(), 1e-5);
        let worst = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max_gradient_entry = max_gradient_entry.max(worst);

        let base = vnmle_objective(&root, &s, 1.0)?;
        let mut done = 0;
        while done < perturbations {
            let mut e = SymmetricMatrix::zeros(dim);
            for i in 0..dim {
                for j in i..dim {
                    e.set_sym(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let scale = 0.05 * root.frobenius_norm() / e.frobenius_norm();
            let candidate = root.add(&e.scale(scale))?;
            if sym_eig(&candidate)?.lambda_min() <= 1e-9 {
                continue;
            }
            done += 1;
            if vnmle_objective(&candidate, &s, 1.0)? <= base {
                all_larger = false;
            }
        }
    }

    let pass = max_gradient_entry <= 1e-4 && all_larger;
    Ok(VnmleReport {
        trials,
        perturbations_per_trial: perturbations,
        max_gradient_entry,
        all_perturbations_larger: all_larger,
        pass,
    })
}

/// Default exponent grid `2^-1 .. 2^-10`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}
