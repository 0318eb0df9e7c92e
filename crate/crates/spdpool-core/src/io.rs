//! Shared text formats.
//!
//! Matrix files: first line `rows cols`, then whitespace-separated
//! entries in row-major order (line breaks are not significant). Entries
//! are decimal doubles; NaN and Inf are rejected on read.
//!
//! Weight files carry a one-line JSON header describing the structure,
//! followed by the constituent matrices and bias vectors in the matrix
//! format.

use crate::compact::{GroupLinear, ReductionChain, ReductionStage};
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, FeatureMatrix, SymmetricMatrix};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

fn parse_token(tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::ParseError(format!("bad numeric token `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::ParseError(format!("non-finite entry `{tok}`")));
    }
    Ok(v)
}

/// Reads a matrix in the shared text format.
pub fn read_matrix<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut reader = BufReader::new(reader);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::ParseError(format!(
            "header must be `rows cols`, got `{}`",
            header.trim_end()
        )));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| Error::ParseError(format!("bad row count `{}`", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| Error::ParseError(format!("bad column count `{}`", dims[1])))?;

    let mut body = String::new();
    reader.read_to_string(&mut body)?;
    let data = body
        .split_whitespace()
        .map(parse_token)
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        return Err(Error::ParseError(format!(
            "expected {} entries, found {}",
            rows * cols,
            data.len()
        )));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn read_matrix_file<P: AsRef<Path>>(path: P) -> Result<DenseMatrix> {
    read_matrix(std::fs::File::open(path)?)
}

pub fn read_feature_matrix_file<P: AsRef<Path>>(path: P) -> Result<FeatureMatrix> {
    FeatureMatrix::new(read_matrix_file(path)?)
}

/// Reads a square matrix and symmetrizes it.
pub fn read_symmetric_file<P: AsRef<Path>>(path: P) -> Result<SymmetricMatrix> {
    let m = read_matrix_file(path)?;
    SymmetricMatrix::symmetrized(&m)
}

/// Renders a matrix in the shared text format. `f64` display output
/// round-trips exactly.
pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn write_matrix_file<P: AsRef<Path>>(path: P, m: &DenseMatrix) -> Result<()> {
    std::fs::write(path, format_matrix(m))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainHeader {
    kind: String,
    dims: Vec<usize>,
    bias: bool,
    rectify: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupHeader {
    kind: String,
    groups: usize,
    in_dim: usize,
    out_dim: usize,
    bias: bool,
}

fn bias_as_matrix(b: &[f64]) -> DenseMatrix {
    DenseMatrix::from_parts_unchecked(1, b.len(), b.to_vec())
}

/// Serializes a reduction chain: JSON header line, then each stage's
/// weight matrix followed by its bias row when present.
pub fn format_reduction_chain(chain: &ReductionChain) -> String {
    let mut dims = vec![chain.input_dim()];
    dims.extend(chain.stages().iter().map(|s| s.weight.rows()));
    let has_bias = chain.stages().iter().any(|s| s.bias.is_some());
    let header = ChainHeader {
        kind: "reduction-chain".into(),
        dims,
        bias: has_bias,
        rectify: chain.rectify(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for stage in chain.stages() {
        out.push_str(&format_matrix(&stage.weight));
        if let Some(b) = &stage.bias {
            out.push_str(&format_matrix(&bias_as_matrix(b)));
        }
    }
    out
}

pub fn write_reduction_chain_file<P: AsRef<Path>>(path: P, chain: &ReductionChain) -> Result<()> {
    std::fs::write(path, format_reduction_chain(chain))?;
    Ok(())
}

pub fn read_reduction_chain<R: Read>(reader: R) -> Result<ReductionChain> {
    let mut reader = BufReader::new(reader);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: ChainHeader = serde_json::from_str(header_line.trim())
        .map_err(|e| Error::ParseError(format!("bad weight header: {e}")))?;
    if header.kind != "reduction-chain" {
        return Err(Error::ParseError(format!(
            "expected a reduction-chain file, found kind `{}`",
            header.kind
        )));
    }
    let mut body = String::new();
    reader.read_to_string(&mut body)?;
    let mut tokens = body.split_whitespace();

    let mut next_matrix = |rows_hint: Option<(usize, usize)>| -> Result<DenseMatrix> {
        let rows: usize = tokens
            .next()
            .ok_or_else(|| Error::ParseError("missing matrix header".into()))?
            .parse()
            .map_err(|_| Error::ParseError("bad matrix row count".into()))?;
        let cols: usize = tokens
            .next()
            .ok_or_else(|| Error::ParseError("missing matrix header".into()))?
            .parse()
            .map_err(|_| Error::ParseError("bad matrix column count".into()))?;
        if let Some((er, ec)) = rows_hint {
            if er != rows || ec != cols {
                return Err(Error::ParseError(format!(
                    "expected a {er}x{ec} block, found {rows}x{cols}"
                )));
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::ParseError("matrix body truncated".into()))?;
            data.push(parse_token(tok)?);
        }
        DenseMatrix::new(rows, cols, data)
    };

    let mut stages = Vec::new();
    for w in header.dims.windows(2) {
        let weight = next_matrix(Some((w[1], w[0])))?;
        let bias = if header.bias {
            Some(next_matrix(Some((1, w[1])))?.as_slice().to_vec())
        } else {
            None
        };
        stages.push(ReductionStage { weight, bias });
    }
    ReductionChain::new(stages, header.rectify)
}

pub fn read_reduction_chain_file<P: AsRef<Path>>(path: P) -> Result<ReductionChain> {
    read_reduction_chain(std::fs::File::open(path)?)
}

/// Serializes a grouped linear map: JSON header line, per-group weight
/// blocks, then the bias row when present.
pub fn format_group_linear(gl: &GroupLinear) -> String {
    let header = GroupHeader {
        kind: "group-linear".into(),
        groups: gl.groups(),
        in_dim: gl.in_dim(),
        out_dim: gl.out_dim(),
        bias: gl.bias().is_some(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for block in gl.blocks() {
        out.push_str(&format_matrix(block));
    }
    if let Some(b) = gl.bias() {
        out.push_str(&format_matrix(&bias_as_matrix(b)));
    }
    out
}

pub fn read_group_linear<R: Read>(reader: R) -> Result<GroupLinear> {
    let mut reader = BufReader::new(reader);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: GroupHeader = serde_json::from_str(header_line.trim())
        .map_err(|e| Error::ParseError(format!("bad weight header: {e}")))?;
    if header.kind != "group-linear" {
        return Err(Error::ParseError(format!(
            "expected a group-linear file, found kind `{}`",
            header.kind
        )));
    }
    let remaining: Result<Vec<DenseMatrix>> = {
        let mut body = String::new();
        reader.read_to_string(&mut body)?;
        let mut tokens = body.split_whitespace().peekable();
        let mut mats = Vec::new();
        while tokens.peek().is_some() {
            let rows: usize = tokens
                .next()
                .unwrap()
                .parse()
                .map_err(|_| Error::ParseError("bad matrix row count".into()))?;
            let cols: usize = tokens
                .next()
                .ok_or_else(|| Error::ParseError("missing matrix header".into()))?
                .parse()
                .map_err(|_| Error::ParseError("bad matrix column count".into()))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::ParseError("matrix body truncated".into()))?;
                data.push(parse_token(tok)?);
            }
            mats.push(DenseMatrix::new(rows, cols, data)?);
        }
        Ok(mats)
    };
    let mut mats = remaining?;
    let bias = if header.bias {
        let b = mats
            .pop()
            .ok_or_else(|| Error::ParseError("missing bias row".into()))?;
        Some(b.as_slice().to_vec())
    } else {
        None
    };
    if mats.len() != header.groups {
        return Err(Error::ParseError(format!(
            "expected {} weight blocks, found {}",
            header.groups,
            mats.len()
        )));
    }
    GroupLinear::new(mats, bias)
}

pub fn read_group_linear_file<P: AsRef<Path>>(path: P) -> Result<GroupLinear> {
    read_group_linear(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = DenseMatrix::from_rows(&[
            vec![1.0 / 3.0, -2.5e-17, 4.0],
            vec![0.1, 7.0, -0.30000000000000004],
        ])
        .unwrap();
        let text = format_matrix(&m);
        let back = read_matrix(text.as_bytes()).unwrap();
        assert_eq!(m.as_slice(), back.as_slice());
    }

    #[test]
    fn reader_rejects_nan_inf_and_shape_lies() {
        assert!(read_matrix("1 2\n1.0 NaN\n".as_bytes()).is_err());
        assert!(read_matrix("1 2\n1.0 inf\n".as_bytes()).is_err());
        assert!(read_matrix("2 2\n1.0 2.0 3.0\n".as_bytes()).is_err());
        assert!(read_matrix("nope\n".as_bytes()).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chain =
            crate::compact::ReductionChain::glorot(&[6, 4, 2], true, true, &mut rng).unwrap();
        let text = format_reduction_chain(&chain);
        let back = read_reduction_chain(text.as_bytes()).unwrap();
        assert_eq!(back.input_dim(), 6);
        assert_eq!(back.output_dim(), 2);
        assert_eq!(back.param_count(), chain.param_count());
        for (a, b) in chain.stages().iter().zip(back.stages()) {
            assert_eq!(a.weight.as_slice(), b.weight.as_slice());
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn group_linear_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gl = crate::compact::GroupLinear::glorot(6, 4, 2, true, &mut rng).unwrap();
        let text = format_group_linear(&gl);
        let back = read_group_linear(text.as_bytes()).unwrap();
        assert_eq!(back.groups(), 2);
        assert_eq!(back.param_count(), gl.param_count());
        let z = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(
            crate::compact::group_linear_apply(&z, &gl).unwrap(),
            crate::compact::group_linear_apply(&z, &back).unwrap()
        );
    }
}
