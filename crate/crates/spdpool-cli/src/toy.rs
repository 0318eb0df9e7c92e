//! Synthetic second-order classification task.
//!
//! Every class has a zero mean vector and its own covariance matrix, so
//! first-order pooling carries no class signal by construction while
//! second-order pooling separates the classes. Bags of samples are drawn
//! per class; the classifier never sees the generating covariances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spdpool_core::gradcheck::random_symmetric;
use spdpool_core::{matpow_via_eig, sym_eig, DenseMatrix, FeatureMatrix, Result, SymmetricMatrix};

/// Parameters of the synthetic task. Class covariances are seeded random
/// rotations of a fixed log-spaced spectrum, kept pairwise apart by a
/// Frobenius-distance margin.
#[derive(Debug, Clone)]
pub struct SyntheticTaskSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_bag: usize,
    pub bags_per_class: usize,
    /// Smallest and largest covariance eigenvalue.
    pub eigenvalue_range: (f64, f64),
    /// Minimum pairwise Frobenius distance between class covariances.
    pub margin: f64,
    /// Scale of isotropic noise added to every sample.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            dim: 8,
            samples_per_bag: 64,
            bags_per_class: 60,
            eigenvalue_range: (0.25, 4.0),
            margin: 2.0,
            noise: 0.1,
            seed: 12345,
        }
    }
}

/// One labeled bag of feature vectors.
#[derive(Debug, Clone)]
pub struct Bag {
    pub features: FeatureMatrix,
    pub label: usize,
}

/// Generated dataset with a stratified 80/20 split by bag.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub train: Vec<Bag>,
    pub test: Vec<Bag>,
    pub class_covariances: Vec<SymmetricMatrix>,
}

fn log_spaced_spectrum(dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let t = if dim == 1 {
                0.0
            } else {
                i as f64 / (dim - 1) as f64
            };
            (hi.ln() * (1.0 - t) + lo.ln() * t).exp()
        })
        .collect()
}

/// Draws the class covariances: same spectrum, independent random
/// orthogonal bases, rejected until pairwise Frobenius distances meet the
/// margin.
fn draw_class_covariances(
    spec: &SyntheticTaskSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SymmetricMatrix>> {
    let spectrum = log_spaced_spectrum(spec.dim, spec.eigenvalue_range.0, spec.eigenvalue_range.1);
    let mut out: Vec<SymmetricMatrix> = Vec::with_capacity(spec.classes);
    let mut attempts = 0;
    while out.len() < spec.classes {
        attempts += 1;
        if attempts > 1000 {
            return Err(spdpool_core::Error::ConfigError(
                "could not draw class covariances respecting the margin; lower it".into(),
            ));
        }
        let basis = sym_eig(&random_symmetric(spec.dim, rng))?;
        let candidate = basis.assemble(&spectrum);
        let far_enough = out.iter().all(|prev| {
            candidate
                .as_dense()
                .sub(prev.as_dense())
                .map(|d| d.frobenius_norm() >= spec.margin)
                .unwrap_or(false)
        });
        if far_enough {
            out.push(candidate);
        }
    }
    Ok(out)
}

fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("normal draws are finite")
}

/// Generates the dataset. Deterministic for a fixed spec.
pub fn generate(spec: &SyntheticTaskSpec) -> Result<SyntheticDataset> {
    if spec.classes < 2 || spec.dim == 0 || spec.samples_per_bag == 0 || spec.bags_per_class < 5 {
        return Err(spdpool_core::Error::ConfigError(
            "task needs at least 2 classes, positive dims, and 5 bags per class".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let covariances = draw_class_covariances(spec, &mut rng)?;
    let roots: Vec<SymmetricMatrix> = covariances
        .iter()
        .map(|c| matpow_via_eig(c, 0.5, 0.0))
        .collect::<Result<_>>()?;

    let mut train = Vec::new();
    let mut test = Vec::new();
    let test_per_class = spec.bags_per_class / 5; // 20% holdout
    for (label, root) in roots.iter().enumerate() {
        // Seeded shuffle of the holdout positions.
        let mut positions: Vec<usize> = (0..spec.bags_per_class).collect();
        for i in (1..positions.len()).rev() {
            let j = rng.gen_range(0..=i);
            positions.swap(i, j);
        }
        let holdout: std::collections::HashSet<usize> =
            positions[..test_per_class].iter().copied().collect();

        for b in 0..spec.bags_per_class {
            let g = standard_normal_matrix(spec.dim, spec.samples_per_bag, &mut rng);
            let mut x = root.as_dense().matmul(&g)?;
            if spec.noise > 0.0 {
                let h = standard_normal_matrix(spec.dim, spec.samples_per_bag, &mut rng);
                x = x.add(&h.scale(spec.noise))?;
            }
            let bag = Bag {
                features: FeatureMatrix::new(x)?,
                label,
            };
            if holdout.contains(&b) {
                test.push(bag);
            } else {
                train.push(bag);
            }
        }
    }
    Ok(SyntheticDataset {
        train,
        test,
        class_covariances: covariances,
    })
}
