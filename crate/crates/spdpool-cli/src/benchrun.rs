//! Wall-clock and accuracy comparison of the eigendecomposition path
//! against the iterative square root on random SPD batches.
//!
//! CSV schema (one row per method/dim/iteration-count):
//! `method,dim,batch,iters,forward_ms,backward_ms,rel_err_vs_eig` —
//! `iters` and `rel_err_vs_eig` are empty on `eig` rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spdpool_core::gradcheck::random_spd_with_cond;
use spdpool_core::mpn::{mpn_backward, mpn_forward, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_backward, isqrt_forward, PreNormMode};
use spdpool_core::{DenseMatrix, Result, SymmetricMatrix};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub dims: Vec<usize>,
    pub batch: usize,
    pub ns_iters: Vec<usize>,
    /// Condition number of the random SPD draws.
    pub cond: f64,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            dims: vec![16, 32, 64],
            batch: 8,
            ns_iters: vec![1, 5, 20],
            cond: 10.0,
            seed: 12345,
        }
    }
}

/// One benchmark row.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub dim: usize,
    pub batch: usize,
    pub iters: Option<usize>,
    pub forward_ms: f64,
    pub backward_ms: f64,
    /// Mean relative Frobenius error of the square root against the
    /// eigendecomposition result; empty for the eig rows.
    pub rel_err_vs_eig: Option<f64>,
}

fn random_gradient<R: Rng>(d: usize, rng: &mut R) -> DenseMatrix {
    let data: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DenseMatrix::new(d, d, data).expect("finite entries")
}

/// Times both square-root paths over seeded batches and reports the
/// iterative path's error against the eigendecomposition oracle.
pub fn run(settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    let variant = MpnVariant::plain(0.5).expect("valid exponent");
    let mut rows = Vec::new();

    for &dim in &settings.dims {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ dim as u64);
        let sigmas: Vec<SymmetricMatrix> = (0..settings.batch)
            .map(|_| random_spd_with_cond(dim, settings.cond, 4.0, &mut rng))
            .collect::<Result<_>>()?;
        let grads: Vec<DenseMatrix> = (0..settings.batch)
            .map(|_| random_gradient(dim, &mut rng))
            .collect();

        // Eigendecomposition path.
        let start = Instant::now();
        let eig_results: Vec<_> = sigmas
            .iter()
            .map(|s| mpn_forward(s, variant))
            .collect::<Result<_>>()?;
        let eig_forward_ms = start.elapsed().as_secs_f64() * 1e3;

        let start = Instant::now();
        for ((_, ctx), g) in eig_results.iter().zip(&grads) {
            mpn_backward(ctx, g)?;
        }
        let eig_backward_ms = start.elapsed().as_secs_f64() * 1e3;

        rows.push(BenchRow {
            method: "eig".into(),
            dim,
            batch: settings.batch,
            iters: None,
            forward_ms: eig_forward_ms,
            backward_ms: eig_backward_ms,
            rel_err_vs_eig: None,
        });

        for &n in &settings.ns_iters {
            let start = Instant::now();
            let ns_results: Vec<_> = sigmas
                .iter()
                .map(|s| isqrt_forward(s, n, PreNormMode::Trace))
                .collect::<Result<_>>()?;
            let forward_ms = start.elapsed().as_secs_f64() * 1e3;

            let start = Instant::now();
            for ((_, ctx), g) in ns_results.iter().zip(&grads) {
                isqrt_backward(ctx, g)?;
            }
            let backward_ms = start.elapsed().as_secs_f64() * 1e3;

            let mut err_sum = 0.0;
            for ((z_ns, _), (z_eig, _)) in ns_results.iter().zip(&eig_results) {
                let diff = z_ns.as_dense().sub(z_eig.as_dense())?;
                err_sum += diff.frobenius_norm() / z_eig.frobenius_norm();
            }
            rows.push(BenchRow {
                method: "ns".into(),
                dim,
                batch: settings.batch,
                iters: Some(n),
                forward_ms,
                backward_ms,
                rel_err_vs_eig: Some(err_sum / settings.batch as f64),
            });
        }
    }
    Ok(rows)
}
