//! Finite-difference certification runners for every backward pass,
//! shared by the `gradcheck` subcommand and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spdpool_core::covpool::{covariance, covariance_backward};
use spdpool_core::gauss_embed::{
    partition_backward, partition_forward, sqrtspd_backward, sqrtspd_forward, DEFAULT_RIDGE,
};
use spdpool_core::gradcheck::{
    check, finite_diff, random_spd_gapped, GradCheckReport, DEFAULT_ABS_TOL, DEFAULT_EPSILON,
    DEFAULT_REL_TOL,
};
use spdpool_core::mpn::{mpn_backward, mpn_forward, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_backward, isqrt_forward, PreNormMode};
use spdpool_core::{sym_eig, DenseMatrix, FeatureMatrix, Result, SymmetricMatrix};

/// Operation selected for certification.
#[derive(Debug, Clone, Copy)]
pub enum CertifyOp {
    /// Covariance pooling gradient with respect to the features.
    Covariance,
    /// Power normalization gradient with respect to the input matrix.
    Mpn { variant: MpnVariant },
    /// Partition + square-root composite, gradient with respect to the
    /// features.
    GaussEmbed,
    /// Iterative square root, gradient with respect to the input matrix.
    Isqrt { mode: PreNormMode, iterations: usize },
}

impl CertifyOp {
    pub fn label(&self) -> String {
        match self {
            CertifyOp::Covariance => "covariance".into(),
            CertifyOp::Mpn { variant } => {
                let kind = match variant.kind() {
                    spdpool_core::mpn::MpnKind::Plain => "plain",
                    spdpool_core::mpn::MpnKind::MatrixL2 => "ml2",
                    spdpool_core::mpn::MpnKind::MatrixFro => "mfro",
                };
                format!("mpn-{kind}-a{}", variant.alpha())
            }
            CertifyOp::GaussEmbed => "gauss-embed".into(),
            CertifyOp::Isqrt { mode, iterations } => {
                let m = match mode {
                    PreNormMode::Trace => "trace",
                    PreNormMode::Frobenius => "fro",
                };
                format!("isqrt-{m}-n{iterations}")
            }
        }
    }
}

/// Certification settings. Defaults match the harness defaults
/// (epsilon 1e-5, relative tolerance 1e-4, absolute floor 1e-8).
#[derive(Debug, Clone)]
pub struct TrialSettings {
    pub dim: usize,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Minimum eigenvalue gap of random SPD draws.
    pub min_gap: f64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            dim: 6,
            samples: 12,
            trials: 20,
            seed: 12345,
            epsilon: DEFAULT_EPSILON,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            min_gap: 1e-2,
        }
    }
}

fn random_dense<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::new(rows, cols, data).expect("finite random entries")
}

fn sym_from_raw(raw: &[f64], d: usize) -> SymmetricMatrix {
    let m = DenseMatrix::new(d, d, raw.to_vec()).expect("finite probe");
    SymmetricMatrix::symmetrized(&m).expect("square probe")
}

/// Runs one certification trial; returns the named report.
fn run_trial(op: CertifyOp, settings: &TrialSettings, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let d = settings.dim;
    let m = settings.samples;
    let eps = settings.epsilon;
    let report = match op {
        CertifyOp::Covariance => {
            let x = FeatureMatrix::new(random_dense(d, m, rng))?;
            let c = random_dense(d, d, rng);
            let analytic = covariance_backward(&x, &c)?;
            let loss = |raw: &[f64]| {
                let xm = FeatureMatrix::new(DenseMatrix::new(d, m, raw.to_vec()).unwrap()).unwrap();
                covariance(&xm).as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, x.as_dense().as_slice(), eps);
            check(analytic.as_slice(), &numeric, settings.rel_tol, settings.abs_tol)
                .named(&op.label(), &format!("{d}x{m}"), eps)
        }
        CertifyOp::Mpn { variant } => {
            let sigma = random_spd_gapped(d, settings.min_gap, rng);
            let c = random_dense(d, d, rng);
            let (_, ctx) = mpn_forward(&sigma, variant)?;
            let analytic = mpn_backward(&ctx, &c)?;
            let loss = |raw: &[f64]| {
                let s = sym_from_raw(raw, d);
                let (z, _) = mpn_forward(&s, variant).unwrap();
                z.as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, sigma.as_dense().as_slice(), eps);
            check(analytic.as_slice(), &numeric, settings.rel_tol, settings.abs_tol)
                .named(&op.label(), &format!("{d}x{d}"), eps)
        }
        CertifyOp::GaussEmbed => {
            // Resample until the embedded spectrum is separated enough
            // for the eigendecomposition-path gradient.
            let x = loop {
                let cand = FeatureMatrix::new(random_dense(d, m, rng))?;
                let y = partition_forward(&cand).add_ridge(DEFAULT_RIDGE);
                let eig = sym_eig(&y)?;
                let separated = eig
                    .eigenvalues()
                    .windows(2)
                    .all(|w| w[0] - w[1] >= settings.min_gap);
                if separated {
                    break cand;
                }
            };
            let c = random_dense(d + 1, d + 1, rng);
            let y = partition_forward(&x);
            let (_, ctx) = sqrtspd_forward(&y, DEFAULT_RIDGE)?;
            let dy = sqrtspd_backward(&ctx, &c)?;
            let analytic = partition_backward(&x, &dy)?;
            let loss = |raw: &[f64]| {
                let xm = FeatureMatrix::new(DenseMatrix::new(d, m, raw.to_vec()).unwrap()).unwrap();
                let y = partition_forward(&xm);
                let (z, _) = sqrtspd_forward(&y, DEFAULT_RIDGE).unwrap();
                z.as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, x.as_dense().as_slice(), eps);
            check(analytic.as_slice(), &numeric, settings.rel_tol, settings.abs_tol)
                .named(&op.label(), &format!("{d}x{m}"), eps)
        }
        CertifyOp::Isqrt { mode, iterations } => {
            let sigma = random_spd_gapped(d, settings.min_gap, rng);
            let c = random_dense(d, d, rng);
            let (_, ctx) = isqrt_forward(&sigma, iterations, mode)?;
            let analytic = isqrt_backward(&ctx, &c)?;
            let loss = |raw: &[f64]| {
                let s = sym_from_raw(raw, d);
                let (z, _) = isqrt_forward(&s, iterations, mode).unwrap();
                z.as_dense().dot(&c).unwrap()
            };
            let numeric = finite_diff(loss, sigma.as_dense().as_slice(), eps);
            check(analytic.as_slice(), &numeric, settings.rel_tol, settings.abs_tol)
                .named(&op.label(), &format!("{d}x{d}"), eps)
        }
    };
    Ok(report)
}

/// Runs `settings.trials` seeded trials of one operation.
pub fn run_trials(op: CertifyOp, settings: &TrialSettings) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    (0..settings.trials)
        .map(|_| run_trial(op, settings, &mut rng))
        .collect()
}

/// The full certification matrix of the acceptance gate: covariance,
/// every power-normalization variant at alpha in {0.5, 1.0}, the
/// embedding composite, and the iterative square root in both modes at
/// N in {1, 3, 5}.
pub fn acceptance_ops() -> Vec<CertifyOp> {
    let mut ops = vec![CertifyOp::Covariance];
    for alpha in [0.5, 1.0] {
        ops.push(CertifyOp::Mpn {
            variant: MpnVariant::plain(alpha).expect("valid alpha"),
        });
        ops.push(CertifyOp::Mpn {
            variant: MpnVariant::matrix_l2(alpha).expect("valid alpha"),
        });
        ops.push(CertifyOp::Mpn {
            variant: MpnVariant::matrix_fro(alpha).expect("valid alpha"),
        });
    }
    ops.push(CertifyOp::GaussEmbed);
    for mode in [PreNormMode::Trace, PreNormMode::Frobenius] {
        for n in [1usize, 3, 5] {
            ops.push(CertifyOp::Isqrt { mode, iterations: n });
        }
    }
    ops
}
