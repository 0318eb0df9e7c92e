//! Property tests for the algebraic invariants of the pooling kernels.

use proptest::prelude::*;
use spdpool_core::compact::{devectorize_sym, group_linear_apply, vectorize_sym, GroupLinear};
use spdpool_core::covpool::covariance;
use spdpool_core::gradcheck::check;
use spdpool_core::mpn::{mpn_forward, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_forward, PreNormMode};
use spdpool_core::{sym_eig, DenseMatrix, FeatureMatrix, SymmetricMatrix};

fn finite_entry() -> impl Strategy<Value = f64> {
    (-3.0..3.0f64).prop_map(|v| (v * 1000.0).round() / 1000.0)
}

fn feature_matrix(max_d: usize, max_m: usize) -> impl Strategy<Value = FeatureMatrix> {
    (2..=max_d, 2..=max_m).prop_flat_map(|(d, m)| {
        prop::collection::vec(finite_entry(), d * m).prop_map(move |data| {
            FeatureMatrix::new(DenseMatrix::new(d, m, data).unwrap()).unwrap()
        })
    })
}

fn symmetric_matrix(max_d: usize) -> impl Strategy<Value = SymmetricMatrix> {
    (2..=max_d).prop_flat_map(|d| {
        prop::collection::vec(finite_entry(), d * d).prop_map(move |data| {
            SymmetricMatrix::symmetrized(&DenseMatrix::new(d, d, data).unwrap()).unwrap()
        })
    })
}

fn spd_matrix(max_d: usize) -> impl Strategy<Value = SymmetricMatrix> {
    (2..=max_d).prop_flat_map(|d| {
        prop::collection::vec(finite_entry(), d * d).prop_map(move |data| {
            let b = DenseMatrix::new(d, d, data).unwrap();
            let bbt = b.matmul(&b.transpose()).unwrap();
            SymmetricMatrix::symmetrized(&bbt).unwrap().add_ridge(0.05)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_is_shift_invariant(x in feature_matrix(6, 8), shift in prop::collection::vec(-2.0..2.0f64, 6)) {
        let d = x.dim();
        let m = x.samples();
        let base = covariance(&x);
        let mut shifted = x.as_dense().clone();
        for (i, s) in shift.iter().enumerate().take(d) {
            for c in 0..m {
                let v = shifted.get(i, c);
                shifted.set(i, c, v + s);
            }
        }
        let shifted = covariance(&FeatureMatrix::new(shifted).unwrap());
        let err = base.as_dense().sub(shifted.as_dense()).unwrap().max_abs_entry();
        prop_assert!(err <= 1e-10, "shift moved covariance by {err:.3e}");
    }

    #[test]
    fn covariance_is_psd(x in feature_matrix(5, 7)) {
        let sigma = covariance(&x);
        let eig = sym_eig(&sigma).unwrap();
        prop_assert!(eig.lambda_min() >= -1e-12);
        let rank_bound = x.dim().min(x.samples() - 1);
        let above: usize = eig.eigenvalues().iter().filter(|l| **l > 1e-9).count();
        prop_assert!(above <= rank_bound, "rank {above} exceeds bound {rank_bound}");
    }

    #[test]
    fn embedding_matrix_is_psd(x in feature_matrix(5, 7)) {
        let y = spdpool_core::gauss_embed::partition_forward(&x);
        let eig = sym_eig(&y).unwrap();
        prop_assert!(eig.lambda_min() >= -1e-10);
    }

    #[test]
    fn vectorization_round_trips(z in symmetric_matrix(8)) {
        let v = vectorize_sym(&z);
        prop_assert_eq!(v.len(), z.dim() * (z.dim() + 1) / 2);
        let back = devectorize_sym(&v, z.dim()).unwrap();
        prop_assert_eq!(back.as_dense().as_slice(), z.as_dense().as_slice());
    }

    #[test]
    fn comparison_is_symmetric(pair in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..20)) {
        let a: Vec<f64> = pair.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pair.iter().map(|p| p.1).collect();
        let r1 = check(&a, &b, 1e-4, 1e-8);
        let r2 = check(&b, &a, 1e-4, 1e-8);
        prop_assert_eq!(r1.max_rel_error.to_bits(), r2.max_rel_error.to_bits());
        prop_assert_eq!(r1.max_abs_error.to_bits(), r2.max_abs_error.to_bits());
        prop_assert_eq!(r1.pass, r2.pass);
    }

    #[test]
    fn power_normalization_preserves_eigenvalue_order(sigma in spd_matrix(6), alpha in 0.2..1.6f64) {
        // The spectral map is nondecreasing for positive exponents, so
        // the output spectrum is ordered the same way as the input's.
        let (z, _) = mpn_forward(&sigma, MpnVariant::plain(alpha).unwrap()).unwrap();
        let out = sym_eig(&z).unwrap();
        let lambda = out.eigenvalues();
        prop_assert!(lambda.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let input = sym_eig(&sigma).unwrap();
        let expect: Vec<f64> = input.eigenvalues().iter().map(|l| l.max(0.0).powf(alpha)).collect();
        for (a, e) in lambda.iter().zip(&expect) {
            prop_assert!((a - e).abs() <= 1e-8 * expect[0].max(1.0));
        }
    }

    #[test]
    fn mpn_output_is_symmetric(sigma in spd_matrix(6)) {
        for variant in [
            MpnVariant::plain(0.5).unwrap(),
            MpnVariant::matrix_l2(0.5).unwrap(),
            MpnVariant::matrix_fro(0.5).unwrap(),
        ] {
            let (z, _) = mpn_forward(&sigma, variant).unwrap();
            prop_assert!(z.as_dense().max_asymmetry() <= 1e-12);
        }
    }

    #[test]
    fn iterative_root_squares_back(sigma in spd_matrix(5)) {
        let (z, _) = isqrt_forward(&sigma, 20, PreNormMode::Trace).unwrap();
        let z_sq = z.as_dense().matmul(z.as_dense()).unwrap();
        let err = z_sq.sub(sigma.as_dense()).unwrap().frobenius_norm();
        let scale = sigma.frobenius_norm();
        prop_assert!(err <= 1e-6 * scale.max(1.0), "residual {err:.3e} vs scale {scale:.3e}");
    }

    #[test]
    fn grouped_map_equals_block_diagonal_embedding(
        seed in 0u64..1000,
        z in prop::collection::vec(finite_entry(), 12)
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for groups in [1usize, 2, 3] {
            let gl = GroupLinear::glorot(12, 6, groups, true, &mut rng).unwrap();
            let grouped = group_linear_apply(&z, &gl).unwrap();
            let dense = gl.to_dense();
            for (r, g) in grouped.iter().enumerate() {
                let mut acc: f64 = (0..12).map(|c| dense.get(r, c) * z[c]).sum();
                if let Some(b) = gl.bias() {
                    acc += b[r];
                }
                prop_assert!((g - acc).abs() <= 1e-12);
            }
            prop_assert_eq!(gl.param_count(), 12 * 6 / groups + 6);
        }
    }
}
