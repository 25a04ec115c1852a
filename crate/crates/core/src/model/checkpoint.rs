//! Binary checkpoint layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "HAMCKPT1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"num_users", "num_items", "dim", "epochs", "hyper", "config"}
//! U            num_users * dim       f64, row-major
//! V            (num_items + 1) * dim f64, row-major, last row is the pad
//! W            num_items * dim       f64, row-major
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{HyperParams, Matrix, ModelError, ModelParams};

const MAGIC: &[u8; 8] = b"HAMCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyper: HyperParams,
    pub params: ModelParams,
    /// Number of epochs the stored parameters were trained for.
    pub epochs: usize,
    /// Free-form run configuration embedded for provenance.
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    num_users: usize,
    num_items: usize,
    dim: usize,
    epochs: usize,
    hyper: HyperParams,
    config: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<(), ModelError> {
    let p = &ckpt.params;
    let header = Header {
        num_users: p.num_users(),
        num_items: p.num_items(),
        dim: p.dim(),
        epochs: ckpt.epochs,
        hyper: ckpt.hyper.clone(),
        config: ckpt.config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(
        8 * (p.user.as_slice().len() + p.source.as_slice().len() + p.target.as_slice().len()),
    );
    for m in [&p.user, &p.source, &p.target] {
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<Matrix, ModelError> {
    let mut bytes = vec![0u8; rows * cols * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|e| ModelError::Checkpoint(format!("truncated matrix data: {e}")))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, ModelError> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(ModelError::Checkpoint(format!(
            "header length {len} too large"
        )));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if header.hyper.d != header.dim {
        return Err(ModelError::ShapeMismatch {
            what: "embedding dimension",
            expected: header.hyper.d,
            found: header.dim,
        });
    }
    let user = read_matrix(&mut input, header.num_users, header.dim)?;
    let source = read_matrix(&mut input, header.num_items + 1, header.dim)?;
    let target = read_matrix(&mut input, header.num_items, header.dim)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(ModelError::Checkpoint(format!(
            "{} trailing bytes",
            rest.len()
        )));
    }
    Ok(Checkpoint {
        hyper: header.hyper,
        params: ModelParams {
            user,
            source,
            target,
        },
        epochs: header.epochs,
        config: header.config,
    })
}
