//! Finite-difference certification of every analytic backward pass.
//!
//! Losses are random linear functionals `l = <C, output>`; the numeric
//! side perturbs raw input entries (symmetric inputs are rebuilt through
//! the symmetrizing constructor, so perturbations stay inside the input
//! space the layers are defined on).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdpool_core::compact::{
    group_linear_apply, group_linear_backward, reduce_backward, reduce_forward, vectorize_sym,
    vectorize_sym_backward, GroupLinear, ReductionChain,
};
use spdpool_core::covpool::{covariance, covariance_backward};
use spdpool_core::gauss_embed::{
    partition_backward, partition_forward, sqrtspd_backward, sqrtspd_forward,
};
use spdpool_core::gradcheck::{check, finite_diff, random_spd_gapped, DEFAULT_EPSILON};
use spdpool_core::mpn::{mpn_backward, mpn_forward, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_backward, isqrt_forward, PreNormMode};
use spdpool_core::{DenseMatrix, FeatureMatrix, SymmetricMatrix};

fn random_dense<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

fn sym_from_raw(raw: &[f64], d: usize) -> SymmetricMatrix {
    let m = DenseMatrix::new(d, d, raw.to_vec()).unwrap();
    SymmetricMatrix::symmetrized(&m).unwrap()
}

#[test]
fn covariance_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for (d, m) in [(3usize, 6usize), (8, 16)] {
        for _ in 0..5 {
            let x = FeatureMatrix::new(random_dense(d, m, &mut rng)).unwrap();
            let c = random_dense(d, d, &mut rng);

            let analytic = covariance_backward(&x, &c).unwrap();
            let loss = |raw: &[f64]| {
                let xm =
                    FeatureMatrix::new(DenseMatrix::new(d, m, raw.to_vec()).unwrap()).unwrap();
                covariance(&xm).as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, x.as_dense().as_slice(), DEFAULT_EPSILON);
            let report = check(analytic.as_slice(), &numeric, 1e-6, 1e-10);
            assert!(
                report.pass,
                "covariance gradient at {d}x{m} off by {:.3e}",
                report.max_rel_error
            );
        }
    }
}

#[test]
fn mpn_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let variants = [
        MpnVariant::plain(0.5).unwrap(),
        MpnVariant::plain(1.0).unwrap(),
        MpnVariant::matrix_l2(0.5).unwrap(),
        MpnVariant::matrix_l2(1.0).unwrap(),
        MpnVariant::matrix_fro(0.5).unwrap(),
        MpnVariant::matrix_fro(1.0).unwrap(),
    ];
    for variant in variants {
        for d in [3usize, 5, 16] {
            let sigma = random_spd_gapped(d, if d == 16 { 1e-2 } else { 0.1 }, &mut rng);
            let c = random_dense(d, d, &mut rng);

            let (_, ctx) = mpn_forward(&sigma, variant).unwrap();
            let analytic = mpn_backward(&ctx, &c).unwrap();
            let loss = |raw: &[f64]| {
                let s = sym_from_raw(raw, d);
                let (z, _) = mpn_forward(&s, variant).unwrap();
                z.as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, sigma.as_dense().as_slice(), DEFAULT_EPSILON);
            let report = check(analytic.as_slice(), &numeric, 1e-5, 1e-8);
            assert!(
                report.pass,
                "{variant:?} gradient off by {:.3e}",
                report.max_rel_error
            );
        }
    }
}

#[test]
fn gauss_embedding_composite_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let ridge = 1e-3;
    let mut done = 0;
    while done < 3 {
        let (d, m) = (3, 7);
        let x = FeatureMatrix::new(random_dense(d, m, &mut rng)).unwrap();
        let y = partition_forward(&x);
        // The eigendecomposition gradient needs separated eigenvalues.
        let eig = spdpool_core::sym_eig(&y.add_ridge(ridge)).unwrap();
        if eig
            .eigenvalues()
            .windows(2)
            .any(|w| w[0] - w[1] < 1e-2)
        {
            continue;
        }
        done += 1;

        let c = random_dense(d + 1, d + 1, &mut rng);
        let (_, ctx) = sqrtspd_forward(&y, ridge).unwrap();
        let dy = sqrtspd_backward(&ctx, &c).unwrap();
        let analytic = partition_backward(&x, &dy).unwrap();

        let loss = |raw: &[f64]| {
            let xm = FeatureMatrix::new(DenseMatrix::new(d, m, raw.to_vec()).unwrap()).unwrap();
            let y = partition_forward(&xm);
            let (z, _) = sqrtspd_forward(&y, ridge).unwrap();
            z.as_dense().dot(&c).unwrap()
        };
        let numeric = finite_diff(loss, x.as_dense().as_slice(), DEFAULT_EPSILON);
        let report = check(analytic.as_slice(), &numeric, 1e-5, 1e-8);
        assert!(
            report.pass,
            "embedding composite gradient off by {:.3e}",
            report.max_rel_error
        );
    }
}

#[test]
fn isotropic_sqrtspd_gradient_closed_form() {
    // Y = c * I: dY = sym(dZ) / (2 sqrt(c)).
    let c_val = 5.0;
    let y = SymmetricMatrix::identity(4).scale(c_val);
    let (_, ctx) = sqrtspd_forward(&y, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let dz = random_dense(4, 4, &mut rng);
    let dy = sqrtspd_backward(&ctx, &dz).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let expect = 0.5 * (dz.get(i, j) + dz.get(j, i)) / (2.0 * c_val.sqrt());
            assert!((dy.get(i, j) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn isqrt_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for mode in [PreNormMode::Trace, PreNormMode::Frobenius] {
        for n in [1usize, 3, 5] {
            let d = 6;
            let sigma = random_spd_gapped(d, 1e-2, &mut rng);
            let c = random_dense(d, d, &mut rng);

            let (_, ctx) = isqrt_forward(&sigma, n, mode).unwrap();
            let analytic = isqrt_backward(&ctx, &c).unwrap();
            let loss = |raw: &[f64]| {
                let s = sym_from_raw(raw, d);
                let (z, _) = isqrt_forward(&s, n, mode).unwrap();
                z.as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, sigma.as_dense().as_slice(), DEFAULT_EPSILON);
            let report = check(analytic.as_slice(), &numeric, 1e-4, 1e-8);
            assert!(
                report.pass,
                "{mode:?} N={n} gradient off by {:.3e}",
                report.max_rel_error
            );
        }
    }
}

#[test]
fn isqrt_backward_is_additive_in_upstream_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let sigma = random_spd_gapped(5, 1e-2, &mut rng);
    let (_, ctx) = isqrt_forward(&sigma, 4, PreNormMode::Trace).unwrap();
    let g1 = random_dense(5, 5, &mut rng);
    let g2 = random_dense(5, 5, &mut rng);
    let lhs = isqrt_backward(&ctx, &g1.add(&g2).unwrap()).unwrap();
    let rhs = isqrt_backward(&ctx, &g1)
        .unwrap()
        .add(&isqrt_backward(&ctx, &g2).unwrap())
        .unwrap();
    let err = lhs.sub(&rhs).unwrap().max_abs_entry();
    let scale = lhs.max_abs_entry().max(1.0);
    assert!(err <= 1e-12 * scale, "additivity broken by {err:.3e}");
}

#[test]
fn reduction_covariance_power_composite_matches_finite_differences() {
    // reduce (16 -> 8 -> 4) -> covariance -> matrix power, gradient with
    // respect to the input features.
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let variant = MpnVariant::plain(0.5).unwrap();
    let chain = ReductionChain::glorot(&[16, 8, 4], true, false, &mut rng).unwrap();
    let m = 12;

    let mut attempt = 0;
    let (x, c) = loop {
        attempt += 1;
        assert!(attempt < 50, "could not find a well-separated draw");
        let x = FeatureMatrix::new(random_dense(16, m, &mut rng)).unwrap();
        let (reduced, _) = reduce_forward(&x, &chain).unwrap();
        let sigma = covariance(&reduced);
        let eig = spdpool_core::sym_eig(&sigma).unwrap();
        if eig.lambda_min() > 1e-3
            && eig.eigenvalues().windows(2).all(|w| w[0] - w[1] >= 1e-2)
        {
            break (x, random_dense(4, 4, &mut rng));
        }
    };

    let (reduced, red_ctx) = reduce_forward(&x, &chain).unwrap();
    let sigma = covariance(&reduced);
    let (_, mpn_ctx) = mpn_forward(&sigma, variant).unwrap();
    let d_sigma = mpn_backward(&mpn_ctx, &c).unwrap();
    let d_reduced = covariance_backward(&reduced, &d_sigma).unwrap();
    let grads = reduce_backward(&chain, &red_ctx, &d_reduced).unwrap();

    let loss = |raw: &[f64]| {
        let xm = FeatureMatrix::new(DenseMatrix::new(16, m, raw.to_vec()).unwrap()).unwrap();
        let reduced = reduce_dim_like(&xm, &chain);
        let sigma = covariance(&reduced);
        let (z, _) = mpn_forward(&sigma, variant).unwrap();
        z.as_dense().dot(&c).unwrap()
    };
    let numeric = finite_diff(loss, x.as_dense().as_slice(), DEFAULT_EPSILON);
    let report = check(grads.d_input.as_slice(), &numeric, 1e-4, 1e-8);
    assert!(
        report.pass,
        "reduce/cov/power composite off by {:.3e}",
        report.max_rel_error
    );
}

fn reduce_dim_like(x: &FeatureMatrix, chain: &ReductionChain) -> FeatureMatrix {
    reduce_forward(x, chain).unwrap().0
}

#[test]
fn full_compact_pipeline_matches_finite_differences() {
    // reduce (6 -> 4, linear) -> covariance -> iterative sqrt ->
    // symmetric vectorization -> grouped linear -> loss.
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let chain = ReductionChain::glorot(&[6, 4], false, false, &mut rng).unwrap();
    let gl = GroupLinear::glorot(10, 4, 2, true, &mut rng).unwrap();
    let m = 12;
    let n_iters = 3;
    let x = FeatureMatrix::new(random_dense(6, m, &mut rng)).unwrap();
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let forward = |raw: &[f64]| -> f64 {
        let xm = FeatureMatrix::new(DenseMatrix::new(6, m, raw.to_vec()).unwrap()).unwrap();
        let (reduced, _) = reduce_forward(&xm, &chain).unwrap();
        let sigma = covariance(&reduced);
        let (z, _) = isqrt_forward(&sigma, n_iters, PreNormMode::Trace).unwrap();
        let v = vectorize_sym(&z);
        let out = group_linear_apply(&v, &gl).unwrap();
        out.iter().zip(&c).map(|(o, w)| o * w).sum()
    };

    // Analytic chain.
    let (reduced, red_ctx) = reduce_forward(&x, &chain).unwrap();
    let sigma = covariance(&reduced);
    let (z, ns_ctx) = isqrt_forward(&sigma, n_iters, PreNormMode::Trace).unwrap();
    let v = vectorize_sym(&z);
    let gl_grads = group_linear_backward(&gl, &v, &c).unwrap();
    let dz = vectorize_sym_backward(&gl_grads.d_input, 4).unwrap();
    let d_sigma = isqrt_backward(&ns_ctx, &dz).unwrap();
    let d_reduced = covariance_backward(&reduced, &d_sigma).unwrap();
    let grads = reduce_backward(&chain, &red_ctx, &d_reduced).unwrap();

    let numeric = finite_diff(forward, x.as_dense().as_slice(), DEFAULT_EPSILON);
    let report = check(grads.d_input.as_slice(), &numeric, 1e-4, 1e-8);
    assert!(
        report.pass,
        "compact pipeline gradient off by {:.3e}",
        report.max_rel_error
    );
}

#[test]
fn rectified_chain_gradient_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let chain = ReductionChain::glorot(&[5, 3], true, true, &mut rng).unwrap();
    let m = 7;
    // Resample until every pre-activation is well away from the ReLU
    // kink, where the subgradient convention and finite differences
    // would legitimately disagree.
    let min_preactivation = |cand: &FeatureMatrix| -> f64 {
        let w = &chain.stages()[0].weight;
        let b = chain.stages()[0].bias.as_ref().unwrap();
        let mut min = f64::INFINITY;
        for col in 0..m {
            for (r, bias) in b.iter().enumerate() {
                let mut acc = *bias;
                for k in 0..5 {
                    acc += w.get(r, k) * cand.get(k, col);
                }
                min = min.min(acc.abs());
            }
        }
        min
    };
    let x = loop {
        let cand = FeatureMatrix::new(random_dense(5, m, &mut rng)).unwrap();
        if min_preactivation(&cand) > 1e-3 {
            break cand;
        }
    };
    let c = random_dense(3, m, &mut rng);

    let (_, ctx) = reduce_forward(&x, &chain).unwrap();
    let grads = reduce_backward(&chain, &ctx, &c).unwrap();
    let loss = |raw: &[f64]| {
        let xm = FeatureMatrix::new(DenseMatrix::new(5, m, raw.to_vec()).unwrap()).unwrap();
        let (out, _) = reduce_forward(&xm, &chain).unwrap();
        out.as_dense().dot(&c).unwrap()
    };
    let numeric = finite_diff(loss, x.as_dense().as_slice(), DEFAULT_EPSILON);
    let report = check(grads.d_input.as_slice(), &numeric, 1e-6, 1e-10);
    assert!(
        report.pass,
        "rectified chain gradient off by {:.3e}",
        report.max_rel_error
    );
}

#[test]
fn group_linear_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let gl = GroupLinear::glorot(6, 4, 2, true, &mut rng).unwrap();
    let z: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let grads = group_linear_backward(&gl, &z, &c).unwrap();
    let loss = |raw: &[f64]| {
        let out = group_linear_apply(raw, &gl).unwrap();
        out.iter().zip(&c).map(|(o, w)| o * w).sum()
    };
    let numeric = finite_diff(loss, &z, DEFAULT_EPSILON);
    let report = check(&grads.d_input, &numeric, 1e-7, 1e-10);
    assert!(report.pass);
}
