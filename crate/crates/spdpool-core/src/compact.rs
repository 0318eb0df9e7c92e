//! Compact covariance representations: progressive linear dimension
//! reduction applied columnwise before pooling, symmetric vectorization
//! of the pooled matrix, and a grouped (block-diagonal) linear transform
//! after pooling.

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, SymmetricMatrix};
use rand::Rng;

/// One reduction stage: a linear map on feature columns plus optional
/// bias.
#[derive(Debug, Clone)]
pub struct ReductionStage {
    pub weight: DenseMatrix,
    pub bias: Option<Vec<f64>>,
}

/// Chain of per-column linear maps `d_0 -> d_1 -> ... -> d_K` with
/// non-increasing widths, optionally rectified after each stage.
#[derive(Debug, Clone)]
pub struct ReductionChain {
    stages: Vec<ReductionStage>,
    rectify: bool,
}

impl ReductionChain {
    /// Validates stage shapes: consecutive widths must be compatible and
    /// non-increasing (an identity-width stage is allowed).
    pub fn new(stages: Vec<ReductionStage>, rectify: bool) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::ConfigError("reduction chain has no stages".into()));
        }
        for (k, stage) in stages.iter().enumerate() {
            let (out_dim, in_dim) = (stage.weight.rows(), stage.weight.cols());
            if out_dim > in_dim {
                return Err(Error::ConfigError(format!(
                    "stage {k} expands {in_dim} -> {out_dim}; widths must be non-increasing"
                )));
            }
            if let Some(b) = &stage.bias {
                if b.len() != out_dim {
                    return Err(Error::ShapeError(format!(
                        "stage {k} bias has length {}, expected {out_dim}",
                        b.len()
                    )));
                }
            }
            if k > 0 && stages[k - 1].weight.rows() != in_dim {
                return Err(Error::ShapeError(format!(
                    "stage {k} consumes width {in_dim} but the previous stage produces {}",
                    stages[k - 1].weight.rows()
                )));
            }
        }
        Ok(Self { stages, rectify })
    }

    /// Identity single-stage chain (no bias, no rectification).
    pub fn identity(dim: usize) -> Self {
        Self {
            stages: vec![ReductionStage {
                weight: DenseMatrix::identity(dim),
                bias: None,
            }],
            rectify: false,
        }
    }

    /// Random chain through the given widths with uniform
    /// `[-s, s]` weights, `s = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng>(dims: &[usize], bias: bool, rectify: bool, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::ConfigError(
                "need at least an input and an output width".into(),
            ));
        }
        let mut stages = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-s..=s))
                .collect();
            stages.push(ReductionStage {
                weight: DenseMatrix::new(fan_out, fan_in, data)?,
                bias: bias.then(|| vec![0.0; fan_out]),
            });
        }
        Self::new(stages, rectify)
    }

    pub fn stages(&self) -> &[ReductionStage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [ReductionStage] {
        &mut self.stages
    }

    pub fn rectify(&self) -> bool {
        self.rectify
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.stages.last().unwrap().weight.rows()
    }

    /// Weight parameters plus bias parameters.
    pub fn param_count(&self) -> usize {
        self.stages
            .iter()
            .map(|s| {
                s.weight.rows() * s.weight.cols() + s.bias.as_ref().map_or(0, Vec::len)
            })
            .sum()
    }
}

/// Per-stage cached activations for the backward pass.
#[derive(Debug, Clone)]
pub struct ReductionContext {
    /// Input to each stage (so `inputs[0]` is the original X).
    inputs: Vec<DenseMatrix>,
    /// Pre-rectification outputs of each stage.
    preacts: Vec<DenseMatrix>,
}

/// Gradients of a reduction chain application.
#[derive(Debug, Clone)]
pub struct ReductionGradients {
    pub d_input: DenseMatrix,
    pub d_weights: Vec<DenseMatrix>,
    pub d_biases: Vec<Option<Vec<f64>>>,
}

fn apply_stage(stage: &ReductionStage, x: &DenseMatrix, rectify: bool) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut pre = stage.weight.matmul(x)?;
    if let Some(b) = &stage.bias {
        for r in 0..pre.rows() {
            for c in 0..pre.cols() {
                let v = pre.get(r, c);
                pre.set(r, c, v + b[r]);
            }
        }
    }
    let out = if rectify {
        let data = pre.as_slice().iter().map(|v| v.max(0.0)).collect();
        DenseMatrix::new(pre.rows(), pre.cols(), data)?
    } else {
        pre.clone()
    };
    Ok((pre, out))
}

/// Applies the chain to each feature column, caching activations.
pub fn reduce_forward(
    x: &FeatureMatrix,
    chain: &ReductionChain,
) -> Result<(FeatureMatrix, ReductionContext)> {
    if x.dim() != chain.input_dim() {
        return Err(Error::ShapeError(format!(
            "chain expects input width {}, features have dimension {}",
            chain.input_dim(),
            x.dim()
        )));
    }
    let mut inputs = Vec::with_capacity(chain.stages.len());
    let mut preacts = Vec::with_capacity(chain.stages.len());
    let mut cur = x.as_dense().clone();
    for stage in &chain.stages {
        inputs.push(cur.clone());
        let (pre, out) = apply_stage(stage, &cur, chain.rectify)?;
        preacts.push(pre);
        cur = out;
    }
    Ok((FeatureMatrix::new(cur)?, ReductionContext { inputs, preacts }))
}

/// Applies the chain without caching. See [`reduce_forward`].
pub fn reduce_dim(x: &FeatureMatrix, chain: &ReductionChain) -> Result<FeatureMatrix> {
    Ok(reduce_forward(x, chain)?.0)
}

/// Backward pass through the chain. `d_out` is the gradient with respect
/// to the final feature matrix.
pub fn reduce_backward(
    chain: &ReductionChain,
    ctx: &ReductionContext,
    d_out: &DenseMatrix,
) -> Result<ReductionGradients> {
    let n = chain.stages.len();
    if ctx.inputs.len() != n || ctx.preacts.len() != n {
        return Err(Error::InvalidContext(
            "cached stage count does not match the chain".into(),
        ));
    }
    let mut d_weights = vec![DenseMatrix::zeros(1, 1); n];
    let mut d_biases: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut grad = d_out.clone();

    for k in (0..n).rev() {
        let stage = &chain.stages[k];
        let pre = &ctx.preacts[k];
        if grad.rows() != pre.rows() || grad.cols() != pre.cols() {
            return Err(Error::ShapeError(format!(
                "gradient for stage {k} is {}x{}, expected {}x{}",
                grad.rows(),
                grad.cols(),
                pre.rows(),
                pre.cols()
            )));
        }
        let d_pre = if chain.rectify {
            let mut g = grad.clone();
            for r in 0..g.rows() {
                for c in 0..g.cols() {
                    if pre.get(r, c) <= 0.0 {
                        g.set(r, c, 0.0);
                    }
                }
            }
            g
        } else {
            grad.clone()
        };
        d_weights[k] = d_pre.matmul(&ctx.inputs[k].transpose())?;
        if stage.bias.is_some() {
            let db: Vec<f64> = (0..d_pre.rows())
                .map(|r| (0..d_pre.cols()).map(|c| d_pre.get(r, c)).sum())
                .collect();
            d_biases[k] = Some(db);
        }
        grad = stage.weight.transpose().matmul(&d_pre)?;
    }
    Ok(ReductionGradients {
        d_input: grad,
        d_weights,
        d_biases,
    })
}

/// Upper triangle of a symmetric matrix, row-major, diagonal included, no
/// rescaling. Length `d (d + 1) / 2`.
pub fn vectorize_sym(z: &SymmetricMatrix) -> Vec<f64> {
    let d = z.dim();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(z.get(i, j));
        }
    }
    out
}

/// Exact inverse of [`vectorize_sym`].
pub fn devectorize_sym(v: &[f64], dim: usize) -> Result<SymmetricMatrix> {
    if v.len() != dim * (dim + 1) / 2 {
        return Err(Error::ShapeError(format!(
            "expected {} packed entries for order {dim}, got {}",
            dim * (dim + 1) / 2,
            v.len()
        )));
    }
    let mut out = SymmetricMatrix::zeros(dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in i..dim {
            out.set_sym(i, j, v[idx]);
            idx += 1;
        }
    }
    Ok(out)
}

/// Adjoint of [`vectorize_sym`] as a map on full matrices: places each
/// packed gradient entry at its upper-triangle position and zero below
/// the diagonal. Feeding the result to a backward pass that accepts an
/// arbitrary (not necessarily symmetric) upstream gradient reproduces
/// the gradient of a loss defined on the packed vector.
pub fn vectorize_sym_backward(d_v: &[f64], dim: usize) -> Result<DenseMatrix> {
    if d_v.len() != dim * (dim + 1) / 2 {
        return Err(Error::ShapeError(format!(
            "expected {} packed entries for order {dim}, got {}",
            dim * (dim + 1) / 2,
            d_v.len()
        )));
    }
    let mut out = DenseMatrix::zeros(dim, dim);
    let mut idx = 0;
    for i in 0..dim {
        for j in i..dim {
            out.set(i, j, d_v[idx]);
            idx += 1;
        }
    }
    Ok(out)
}

/// Block-diagonal linear map: the input is split into `groups` equal
/// chunks, each transformed by its own weight block.
#[derive(Debug, Clone)]
pub struct GroupLinear {
    groups: usize,
    in_dim: usize,
    out_dim: usize,
    /// One `(out_dim / groups) x (in_dim / groups)` block per group.
    blocks: Vec<DenseMatrix>,
    bias: Option<Vec<f64>>,
}

impl GroupLinear {
    pub fn new(blocks: Vec<DenseMatrix>, bias: Option<Vec<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::ConfigError("grouped map needs at least one block".into()));
        }
        let (rows, cols) = (blocks[0].rows(), blocks[0].cols());
        if blocks.iter().any(|b| b.rows() != rows || b.cols() != cols) {
            return Err(Error::ShapeError("group blocks differ in shape".into()));
        }
        let groups = blocks.len();
        let out_dim = rows * groups;
        let in_dim = cols * groups;
        if let Some(b) = &bias {
            if b.len() != out_dim {
                return Err(Error::ShapeError(format!(
                    "bias length {} does not match output width {out_dim}",
                    b.len()
                )));
            }
        }
        Ok(Self {
            groups,
            in_dim,
            out_dim,
            blocks,
            bias,
        })
    }

    /// Builds a grouped map of the given widths, checking divisibility.
    pub fn glorot<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        groups: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if groups == 0 || !in_dim.is_multiple_of(groups) || !out_dim.is_multiple_of(groups) {
            return Err(Error::ConfigError(format!(
                "group count {groups} must divide input width {in_dim} and output width {out_dim}"
            )));
        }
        let (bc, br) = (in_dim / groups, out_dim / groups);
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let blocks = (0..groups)
            .map(|_| {
                let data: Vec<f64> = (0..br * bc).map(|_| rng.gen_range(-s..=s)).collect();
                DenseMatrix::new(br, bc, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks, bias.then(|| vec![0.0; out_dim]))
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn blocks(&self) -> &[DenseMatrix] {
        &self.blocks
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    /// Weight parameters (`in_dim * out_dim / groups`) plus bias
    /// parameters when present.
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim / self.groups + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// The dense matrix this map is a block-diagonal embedding of.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut w = DenseMatrix::zeros(self.out_dim, self.in_dim);
        let (br, bc) = (self.out_dim / self.groups, self.in_dim / self.groups);
        for (g, block) in self.blocks.iter().enumerate() {
            for r in 0..br {
                for c in 0..bc {
                    w.set(g * br + r, g * bc + c, block.get(r, c));
                }
            }
        }
        w
    }
}

/// Applies the grouped map: `out = blockdiag(W_g) z + bias`.
pub fn group_linear_apply(z: &[f64], gl: &GroupLinear) -> Result<Vec<f64>> {
    if z.len() != gl.in_dim {
        return Err(Error::ShapeError(format!(
            "input has length {}, map expects {}",
            z.len(),
            gl.in_dim
        )));
    }
    let (br, bc) = (gl.out_dim / gl.groups, gl.in_dim / gl.groups);
    let mut out = vec![0.0; gl.out_dim];
    for (g, block) in gl.blocks.iter().enumerate() {
        let zin = &z[g * bc..(g + 1) * bc];
        for r in 0..br {
            let mut acc = 0.0;
            for c in 0..bc {
                acc += block.get(r, c) * zin[c];
            }
            out[g * br + r] = acc;
        }
    }
    if let Some(b) = &gl.bias {
        for (o, bv) in out.iter_mut().zip(b) {
            *o += bv;
        }
    }
    Ok(out)
}

/// Gradients of the grouped map.
#[derive(Debug, Clone)]
pub struct GroupLinearGradients {
    pub d_input: Vec<f64>,
    pub d_blocks: Vec<DenseMatrix>,
    pub d_bias: Option<Vec<f64>>,
}

/// Backward pass of [`group_linear_apply`].
pub fn group_linear_backward(
    gl: &GroupLinear,
    z: &[f64],
    d_out: &[f64],
) -> Result<GroupLinearGradients> {
    if z.len() != gl.in_dim || d_out.len() != gl.out_dim {
        return Err(Error::ShapeError(format!(
            "backward shapes ({}, {}) do not match map ({}, {})",
            z.len(),
            d_out.len(),
            gl.in_dim,
            gl.out_dim
        )));
    }
    let (br, bc) = (gl.out_dim / gl.groups, gl.in_dim / gl.groups);
    let mut d_input = vec![0.0; gl.in_dim];
    let mut d_blocks = Vec::with_capacity(gl.groups);
    for (g, block) in gl.blocks.iter().enumerate() {
        let zin = &z[g * bc..(g + 1) * bc];
        let gout = &d_out[g * br..(g + 1) * br];
        let mut db = DenseMatrix::zeros(br, bc);
        for r in 0..br {
            for c in 0..bc {
                db.set(r, c, gout[r] * zin[c]);
                d_input[g * bc + c] += block.get(r, c) * gout[r];
            }
        }
        d_blocks.push(db);
    }
    let d_bias = gl.bias.as_ref().map(|_| d_out.to_vec());
    Ok(GroupLinearGradients {
        d_input,
        d_blocks,
        d_bias,
    })
}
