//! Spot checks of the two structural facts behind matrix power
//! normalization: the square root of the sample covariance minimizes the
//! divergence-regularized estimation objective, and the power-Euclidean
//! metric approaches the log-Euclidean one as the exponent vanishes.
//!
//! The full multi-trial verification lives in the CLI's props command and
//! the acceptance suite; these tests pin the behavior at module level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdpool_core::gradcheck::{finite_diff, random_spd};
use spdpool_core::mpn::{lerm, powe_metric, vnmle_objective};
use spdpool_core::{matpow_via_eig, DenseMatrix, SymmetricMatrix};

#[test]
fn objective_is_stationary_at_the_square_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = random_spd(4, 0.1, &mut rng);
    let root = matpow_via_eig(&s, 0.5, 0.0).unwrap();

    let loss = |raw: &[f64]| {
        let m = DenseMatrix::new(4, 4, raw.to_vec()).unwrap();
        let est = SymmetricMatrix::symmetrized(&m).unwrap();
        vnmle_objective(&est, &s, 1.0).unwrap()
    };
    let grad = finite_diff(loss, root.as_dense().as_slice(), 1e-5);
    let max_entry = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(
        max_entry <= 1e-4,
        "gradient at the square root has entry {max_entry:.3e}"
    );
}

#[test]
fn objective_grows_under_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let s = random_spd(3, 0.1, &mut rng);
    let root = matpow_via_eig(&s, 0.5, 0.0).unwrap();
    let base = vnmle_objective(&root, &s, 1.0).unwrap();

    let mut tested = 0;
    while tested < 25 {
        let mut e = SymmetricMatrix::zeros(3);
        for i in 0..3 {
            for j in i..3 {
                e.set_sym(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let scale = 0.05 * root.frobenius_norm() / e.frobenius_norm();
        let candidate = root.add(&e.scale(scale)).unwrap();
        if spdpool_core::sym_eig(&candidate).unwrap().lambda_min() <= 1e-9 {
            continue;
        }
        tested += 1;
        let perturbed = vnmle_objective(&candidate, &s, 1.0).unwrap();
        assert!(
            perturbed > base,
            "perturbed objective {perturbed} did not exceed minimum {base}"
        );
    }
}

/// Random SPD matrix with log-uniform eigenvalues in `[lo, hi]`.
fn spd_with_spectrum(
    dim: usize,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> SymmetricMatrix {
    let basis = spdpool_core::sym_eig(&spdpool_core::gradcheck::random_symmetric(dim, rng))
        .unwrap();
    let mut values: Vec<f64> = (0..dim)
        .map(|_| rng.gen_range(lo.ln()..hi.ln()).exp())
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    basis.assemble(&values)
}

#[test]
fn power_metric_approaches_log_metric() {
    // Monotone approach of |d_alpha - LERM| is guaranteed when every
    // eigenvalue of both operands is at least 1 (each cross term
    // (lambda^a - mu^a)/a of the squared norm is then a power series
    // with positive coefficients, so it exceeds its limit and shrinks as
    // the exponent does). Spectra straddling 1 can make the signed gap
    // cross zero inside the grid, so the monotone clause samples [1, 10].
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..5 {
        let a = spd_with_spectrum(4, 1.0, 10.0, &mut rng);
        let b = spd_with_spectrum(4, 1.0, 10.0, &mut rng);
        let reference = lerm(&a, &b).unwrap();

        let mut last_gap = f64::INFINITY;
        for k in 1..=10 {
            let alpha = 0.5f64.powi(k);
            let gap = (powe_metric(&a, &b, alpha).unwrap() - reference).abs();
            assert!(
                gap <= last_gap + 1e-12,
                "gap grew from {last_gap:.3e} to {gap:.3e} at alpha = 2^-{k}"
            );
            last_gap = gap;
        }
        assert!(
            last_gap / reference <= 1e-2,
            "relative gap {:.3e} at alpha = 2^-10",
            last_gap / reference
        );
    }

    // The limit itself holds across the whole [0.1, 10] envelope.
    for _ in 0..5 {
        let a = spd_with_spectrum(5, 0.1, 10.0, &mut rng);
        let b = spd_with_spectrum(5, 0.1, 10.0, &mut rng);
        let reference = lerm(&a, &b).unwrap();
        let alpha = 0.5f64.powi(10);
        let gap = (powe_metric(&a, &b, alpha).unwrap() - reference).abs();
        assert!(gap / reference <= 1e-2);
    }
}
