//! Training loop for the synthetic task: a trainable linear front map,
//! one pooling layer, and a linear softmax classifier, optimized with
//! minibatch SGD with momentum and weight decay.
//!
//! Gradients reach the front map through the pooling layer's backward
//! pass, so a training run exercises the analytic backward path of the
//! selected pooling method on every step.

use crate::toy::{Bag, SyntheticDataset, SyntheticTaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use spdpool_core::compact::{
    reduce_backward, reduce_forward, vectorize_sym, vectorize_sym_backward, ReductionChain,
};
use spdpool_core::covpool::{covariance, covariance_backward, gap};
use spdpool_core::mpn::{mpn_backward, mpn_forward, MpnVariant};
use spdpool_core::newton_schulz::{isqrt_backward, isqrt_forward, PreNormMode};
use spdpool_core::{DenseMatrix, Error, FeatureMatrix, Result};

/// Pooling method under test.
#[derive(Debug, Clone, Copy)]
pub enum Pooling {
    /// First-order baseline: per-dimension means.
    Gap,
    /// Matrix power normalization through the eigendecomposition.
    MatrixPower { variant: MpnVariant },
    /// Iterative matrix square root.
    IterativeSqrt { iterations: usize, mode: PreNormMode },
}

impl Pooling {
    pub fn label(&self) -> &'static str {
        match self {
            Pooling::Gap => "gap",
            Pooling::MatrixPower { .. } => "mpncov",
            Pooling::IterativeSqrt { .. } => "isqrt",
        }
    }

    fn output_len(&self, dim: usize) -> usize {
        match self {
            Pooling::Gap => dim,
            _ => dim * (dim + 1) / 2,
        }
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate of the front map (smaller, it feeds a curved layer).
    pub front_learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            front_learning_rate: 0.02,
            momentum: 0.9,
            weight_decay: 5e-4,
            epochs: 100,
            batch_size: 16,
            seed: 12345,
            threads: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.front_learning_rate <= 0.0
            || !(0.0..1.0).contains(&self.momentum)
            || self.weight_decay < 0.0
            || self.epochs == 0
            || self.batch_size == 0
            || self.threads == 0
        {
            return Err(Error::ConfigError(
                "training settings must be positive (momentum in [0, 1))".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize)]
pub struct ToyReport {
    pub method: String,
    pub alpha: Option<f64>,
    pub iters: Option<usize>,
    pub epn: bool,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Element-wise signed square root followed by l2 normalization.
pub fn epn(v: &[f64]) -> Vec<f64> {
    let rooted: Vec<f64> = v.iter().map(|x| x.signum() * x.abs().sqrt()).collect();
    let norm = rooted.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return rooted;
    }
    rooted.iter().map(|x| x / norm).collect()
}

/// Backward of [`epn`]. The signed square root has unbounded slope at
/// zero; the slope is clamped there to keep training finite.
fn epn_backward(v: &[f64], d_out: &[f64]) -> Vec<f64> {
    let rooted: Vec<f64> = v.iter().map(|x| x.signum() * x.abs().sqrt()).collect();
    let norm = rooted.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    // d(u / ||u||) = (I - w w^T) / ||u||, w = u / ||u||.
    let w: Vec<f64> = rooted.iter().map(|x| x / norm).collect();
    let dot: f64 = w.iter().zip(d_out).map(|(a, b)| a * b).sum();
    let d_rooted: Vec<f64> = d_out
        .iter()
        .zip(&w)
        .map(|(g, wi)| (g - dot * wi) / norm)
        .collect();
    v.iter()
        .zip(&d_rooted)
        .map(|(x, g)| g * 0.5 / x.abs().sqrt().max(1e-6))
        .collect()
}

struct BagGradients {
    loss: f64,
    d_logits: Vec<f64>,
    pooled: Vec<f64>,
    d_front_weight: DenseMatrix,
}

struct Model {
    front: ReductionChain,
    w: DenseMatrix,
    b: Vec<f64>,
}

impl Model {
    fn pooled(&self, bag: &Bag, pooling: Pooling, use_epn: bool) -> Result<Vec<f64>> {
        let (xf, _) = reduce_forward(&bag.features, &self.front)?;
        let pooled = pooled_of(&xf, pooling)?;
        Ok(if use_epn { epn(&pooled) } else { pooled })
    }
}

fn pooled_of(xf: &FeatureMatrix, pooling: Pooling) -> Result<Vec<f64>> {
    match pooling {
        Pooling::Gap => Ok(gap(xf)),
        Pooling::MatrixPower { variant } => {
            let sigma = covariance(xf);
            let (z, _) = mpn_forward(&sigma, variant)?;
            Ok(vectorize_sym(&z))
        }
        Pooling::IterativeSqrt { iterations, mode } => {
            let sigma = covariance(xf);
            let (z, _) = isqrt_forward(&sigma, iterations, mode)?;
            Ok(vectorize_sym(&z))
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Forward + backward for one bag; returns per-parameter gradients.
fn bag_gradients(model: &Model, bag: &Bag, pooling: Pooling, use_epn: bool) -> Result<BagGradients> {
    let (xf, front_ctx) = reduce_forward(&bag.features, &model.front)?;
    let classes = model.b.len();
    let dim = xf.dim();

    // Pooling forward with cached layer state.
    let raw_pooled: Vec<f64>;
    enum PoolState {
        Gap,
        Power(spdpool_core::mpn::MpnContext),
        Root(spdpool_core::newton_schulz::NewtonSchulzContext),
    }
    let state = match pooling {
        Pooling::Gap => {
            raw_pooled = gap(&xf);
            PoolState::Gap
        }
        Pooling::MatrixPower { variant } => {
            let sigma = covariance(&xf);
            let (z, ctx) = mpn_forward(&sigma, variant)?;
            raw_pooled = vectorize_sym(&z);
            PoolState::Power(ctx)
        }
        Pooling::IterativeSqrt { iterations, mode } => {
            let sigma = covariance(&xf);
            let (z, ctx) = isqrt_forward(&sigma, iterations, mode)?;
            raw_pooled = vectorize_sym(&z);
            PoolState::Root(ctx)
        }
    };
    let pooled = if use_epn { epn(&raw_pooled) } else { raw_pooled.clone() };

    // Linear softmax classifier with cross-entropy.
    let logits: Vec<f64> = (0..classes)
        .map(|c| {
            model.b[c]
                + pooled
                    .iter()
                    .enumerate()
                    .map(|(i, p)| model.w.get(c, i) * p)
                    .sum::<f64>()
        })
        .collect();
    let probs = softmax(&logits);
    let loss = -probs[bag.label].max(1e-300).ln();

    let mut d_logits = probs;
    d_logits[bag.label] -= 1.0;

    // Gradient into the pooled vector.
    let mut d_pooled = vec![0.0; pooled.len()];
    for (c, dl) in d_logits.iter().enumerate() {
        for (i, slot) in d_pooled.iter_mut().enumerate() {
            *slot += model.w.get(c, i) * dl;
        }
    }
    let d_raw_pooled = if use_epn {
        epn_backward(&raw_pooled, &d_pooled)
    } else {
        d_pooled
    };

    // Through the pooling layer back to the front features.
    let d_xf = match &state {
        PoolState::Gap => {
            let m = xf.samples() as f64;
            let mut g = DenseMatrix::zeros(dim, xf.samples());
            for i in 0..dim {
                for c in 0..xf.samples() {
                    g.set(i, c, d_raw_pooled[i] / m);
                }
            }
            g
        }
        PoolState::Power(ctx) => {
            let dz = vectorize_sym_backward(&d_raw_pooled, dim)?;
            let d_sigma = mpn_backward(ctx, &dz)?;
            covariance_backward(&xf, &d_sigma)?
        }
        PoolState::Root(ctx) => {
            let dz = vectorize_sym_backward(&d_raw_pooled, dim)?;
            let d_sigma = isqrt_backward(ctx, &dz)?;
            covariance_backward(&xf, &d_sigma)?
        }
    };

    let front_grads = reduce_backward(&model.front, &front_ctx, &d_xf)?;
    Ok(BagGradients {
        loss,
        d_logits,
        pooled,
        d_front_weight: front_grads.d_weights.into_iter().next().unwrap(),
    })
}

fn accuracy(model: &Model, bags: &[Bag], pooling: Pooling, use_epn: bool) -> Result<f64> {
    let mut correct = 0usize;
    for bag in bags {
        let pooled = model.pooled(bag, pooling, use_epn)?;
        let logits: Vec<f64> = (0..model.b.len())
            .map(|c| {
                model.b[c]
                    + pooled
                        .iter()
                        .enumerate()
                        .map(|(i, p)| model.w.get(c, i) * p)
                        .sum::<f64>()
            })
            .collect();
        let predicted = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if predicted == bag.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / bags.len() as f64)
}

/// Trains the classifier on pre-generated data and reports accuracies.
pub fn toy_train_on(
    data: &SyntheticDataset,
    spec: &SyntheticTaskSpec,
    cfg: &TrainConfig,
    pooling: Pooling,
    use_epn: bool,
) -> Result<ToyReport> {
    cfg.validate()?;
    let classes = spec.classes;
    let pooled_len = pooling.output_len(spec.dim);

    let mut model = Model {
        front: ReductionChain::identity(spec.dim),
        w: DenseMatrix::zeros(classes, pooled_len),
        b: vec![0.0; classes],
    };
    let mut vel_w = DenseMatrix::zeros(classes, pooled_len);
    let mut vel_b = vec![0.0; classes];
    let mut vel_front = DenseMatrix::zeros(spec.dim, spec.dim);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut final_loss = f64::NAN;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?;

    for _epoch in 0..cfg.epochs {
        // Seeded Fisher-Yates shuffle.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // Per-bag gradients are independent; reduce in index order so
            // results do not depend on the thread count.
            let grads: Vec<BagGradients> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| bag_gradients(&model, &data.train[i], pooling, use_epn))
                    .collect::<Result<Vec<_>>>()
            })?;

            let scale = 1.0 / batch.len() as f64;
            let mut d_w = DenseMatrix::zeros(classes, pooled_len);
            let mut d_b = vec![0.0; classes];
            let mut d_front = DenseMatrix::zeros(spec.dim, spec.dim);
            for g in &grads {
                epoch_loss += g.loss;
                for c in 0..classes {
                    d_b[c] += g.d_logits[c] * scale;
                    for i in 0..pooled_len {
                        let v = d_w.get(c, i);
                        d_w.set(c, i, v + g.d_logits[c] * g.pooled[i] * scale);
                    }
                }
                for r in 0..spec.dim {
                    for c2 in 0..spec.dim {
                        let v = d_front.get(r, c2);
                        d_front.set(r, c2, v + g.d_front_weight.get(r, c2) * scale);
                    }
                }
            }

            // Weight decay on the weight matrices, not the bias.
            for c in 0..classes {
                for i in 0..pooled_len {
                    let v = d_w.get(c, i) + cfg.weight_decay * model.w.get(c, i);
                    let vel = cfg.momentum * vel_w.get(c, i) - cfg.learning_rate * v;
                    vel_w.set(c, i, vel);
                    model.w.set(c, i, model.w.get(c, i) + vel);
                }
                vel_b[c] = cfg.momentum * vel_b[c] - cfg.learning_rate * d_b[c];
                model.b[c] += vel_b[c];
            }
            let front_w = &mut model.front.stages_mut()[0].weight;
            for r in 0..spec.dim {
                for c2 in 0..spec.dim {
                    let v = d_front.get(r, c2) + cfg.weight_decay * front_w.get(r, c2);
                    let vel = cfg.momentum * vel_front.get(r, c2) - cfg.front_learning_rate * v;
                    vel_front.set(r, c2, vel);
                    front_w.set(r, c2, front_w.get(r, c2) + vel);
                }
            }
        }
        final_loss = epoch_loss / data.train.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::DivergenceError(format!(
                "training loss became non-finite ({final_loss})"
            )));
        }
    }

    let (alpha, iters) = match pooling {
        Pooling::Gap => (None, None),
        Pooling::MatrixPower { variant } => (Some(variant.alpha()), None),
        Pooling::IterativeSqrt { iterations, .. } => (Some(0.5), Some(iterations)),
    };
    Ok(ToyReport {
        method: pooling.label().to_string(),
        alpha,
        iters,
        epn: use_epn,
        train_accuracy: accuracy(&model, &data.train, pooling, use_epn)?,
        test_accuracy: accuracy(&model, &data.test, pooling, use_epn)?,
        final_loss,
        epochs: cfg.epochs,
        seed: cfg.seed,
    })
}

/// Generates the dataset and trains once.
pub fn toy_train(
    spec: &SyntheticTaskSpec,
    cfg: &TrainConfig,
    pooling: Pooling,
    use_epn: bool,
) -> Result<ToyReport> {
    let data = crate::toy::generate(spec)?;
    toy_train_on(&data, spec, cfg, pooling, use_epn)
}
