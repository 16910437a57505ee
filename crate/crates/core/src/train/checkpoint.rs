//! Plain-text checkpoints:
//!
//! ```text
//! kgtrust-checkpoint 1
//! {"model":{...},"feature_shapes":[[5,3],[3,2]]}
//! tensor projection.user 4 3
//! 0.1 0.2 0.3
//! ...
//! ```
//!
//! One line per matrix row. Values use the shortest representation that
//! reads back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAGIC: &str = "kgtrust-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    feature_shapes: [(usize, usize); 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub feature_shapes: [(usize, usize); 2],
    pub params: ModelParams,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        model: ckpt.model.clone(),
        feature_shapes: ckpt.feature_shapes,
    };
    let mut out = format!("{MAGIC} {VERSION}\n");
    out.push_str(&serde_json::to_string(&header).map_err(|e| bad(e.to_string()))?);
    out.push('\n');
    for (name, m) in ckpt.params.named() {
        let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| bad("empty file"))?;
    match first.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(bad(format!("unsupported version {v}"))),
        _ => return Err(bad("not a checkpoint file")),
    }
    let header: Header = serde_json::from_str(lines.next().ok_or_else(|| bad("missing header"))?)
        .map_err(|e| bad(format!("header: {e}")))?;
    let [(nu, du), (no, dobj)] = header.feature_shapes;
    let mut params = ModelParams::init(&header.model, &[Matrix::zeros(nu, du), Matrix::zeros(no, dobj)], 0)?;

    for (name, slot) in params.named_mut() {
        let line = lines.next().ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let shape = match fields.as_slice() {
            ["tensor", n, r, c] if *n == name => (
                r.parse::<usize>()
                    .map_err(|_| bad(format!("bad row count for {name}")))?,
                c.parse::<usize>()
                    .map_err(|_| bad(format!("bad column count for {name}")))?,
            ),
            _ => return Err(bad(format!("expected tensor {name}, found {line:?}"))),
        };
        if shape != slot.shape() {
            return Err(bad(format!(
                "tensor {name} has shape {shape:?}, model expects {:?}",
                slot.shape()
            )));
        }
        for r in 0..shape.0 {
            let line = lines.next().ok_or_else(|| bad(format!("truncated tensor {name}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("bad value in {name}")))?;
            if vals.len() != shape.1 {
                return Err(bad(format!("row {r} of {name} has {} values", vals.len())));
            }
            slot.row_mut(r).copy_from_slice(&vals);
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing data"));
    }
    Ok(Checkpoint {
        model: header.model,
        feature_shapes: header.feature_shapes,
        params,
    })
}
