//! Parameter checkpoints: one JSON header line, then every tensor as
//! little-endian `f64`s in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use cit_core::linalg::Matrix;
use cit_core::model::{FrozenBackbones, TrainableParams};
use cit_core::{Dims, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::jsonl::create;

pub const FORMAT: &str = "cit-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub dims: Dims,
    /// Initialization seed of the run that produced the checkpoint.
    pub seed: u64,
    /// Optimizer steps taken.
    pub step: u64,
    pub tensors: Vec<TensorInfo>,
}

fn tensors(p: &ModelParams) -> Vec<(&'static str, &[f64])> {
    let mut out = vec![
        ("vision_map", p.frozen.vision_map.as_slice()),
        ("text_map", p.frozen.text_map.as_slice()),
    ];
    out.extend(p.trainable.tensors().map(|t| (t.name, t.data)));
    out
}

pub fn write_checkpoint(path: &Path, params: &ModelParams, seed: u64, step: u64) -> Result<()> {
    let ts = tensors(params);
    let header = Header {
        format: FORMAT.into(),
        dims: params.dims,
        seed,
        step,
        tensors: ts
            .iter()
            .map(|(name, data)| TensorInfo {
                name: (*name).into(),
                len: data.len(),
            })
            .collect(),
    };
    let mut w = create(path)?;
    let json = serde_json::to_string(&header).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(json.as_bytes()).map_err(io_err(path))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    for (_, data) in ts {
        for x in data {
            w.write_all(&x.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, Header)> {
    let bad = |msg: String| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut line = String::new();
    r.read_line(&mut line).map_err(io_err(path))?;
    let header: Header = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
    if header.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", header.format)));
    }
    header.dims.validate()?;

    let d = &header.dims;
    let mut trainable = TrainableParams::zeros(d);
    let expected: Vec<(&str, usize)> = [
        ("vision_map", d.raw_img_dim * d.backbone_dim),
        ("text_map", d.raw_txt_dim * d.hidden_dim),
    ]
    .into_iter()
    .chain(trainable.tensors().map(|t| (t.name, t.data.len())))
    .collect();
    let got: Vec<(&str, usize)> = header
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t.len))
        .collect();
    if expected != got {
        return Err(bad(format!(
            "tensor table {got:?} does not match dims (expected {expected:?})"
        )));
    }

    let mut read = |len: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes).map_err(io_err(path))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    };
    let vision_map = Matrix::new(d.raw_img_dim, d.backbone_dim, read(expected[0].1)?)?;
    let text_map = Matrix::new(d.raw_txt_dim, d.hidden_dim, read(expected[1].1)?)?;
    let flat_len: usize = expected[2..].iter().map(|e| e.1).sum();
    trainable.assign_flat(&read(flat_len)?)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io_err(path))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    let params = ModelParams {
        dims: header.dims,
        frozen: FrozenBackbones {
            vision_map,
            text_map,
        },
        trainable,
    };
    Ok((params, header))
}
