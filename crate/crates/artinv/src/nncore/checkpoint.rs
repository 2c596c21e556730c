//! Model checkpoint format: magic `AIVM`, a length-prefixed JSON header
//! describing the network and its parameter blocks, then raw little-endian
//! `f32` blocks in declaration order. Parameters are rounded to f32 before
//! saving, so save -> load -> save is byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, MODEL_MAGIC};

use super::{Layout, Params};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockHeader {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    pub format_version: u32,
    /// Network kind tag, e.g. "aai", "xvector", "sid".
    pub kind: String,
    /// Kind-specific metadata (architecture, scheme, provenance).
    pub meta: serde_json::Value,
    pub blocks: Vec<BlockHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// All parameter values, concatenated in block declaration order.
    pub values: Vec<f32>,
}

const MAX_HEADER_LEN: usize = 1 << 20;
const MAX_PARAMS: usize = 1 << 28;

/// Parse a checkpoint. Fuzz entry point: total on arbitrary bytes.
pub fn parse_checkpoint_bytes(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    if bytes.len() < 8 {
        return Err("truncated while reading magic/header length".into());
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[0..4]),
            String::from_utf8_lossy(MODEL_MAGIC)
        ));
    }
    let header_len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if header_len > MAX_HEADER_LEN {
        return Err(format!("header length {header_len} exceeds limit"));
    }
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or("truncated while reading header")?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| format!("header json: {e}"))?;

    let mut total = 0usize;
    for block in &header.blocks {
        let len: usize = block
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| format!("block {} shape overflows", block.name))?;
        total = total
            .checked_add(len)
            .ok_or("total parameter count overflows")?;
    }
    if total > MAX_PARAMS {
        return Err(format!("parameter count {total} exceeds limit"));
    }
    let payload = &bytes[header_end..];
    if payload.len() != total * 4 {
        return Err(format!(
            "parameter payload is {} bytes, header declares {}",
            payload.len(),
            total * 4
        ));
    }
    let mut values = Vec::with_capacity(total);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(format!("parameter {i} is not finite"));
        }
        values.push(v);
    }
    Ok(Checkpoint { header, values })
}

pub fn encode_checkpoint(
    kind: &str,
    meta: &serde_json::Value,
    layout: &Layout,
    params: &Params,
) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format_version: 1,
        kind: kind.to_string(),
        meta: meta.clone(),
        blocks: layout
            .blocks()
            .iter()
            .map(|b| BlockHeader {
                name: b.name.clone(),
                shape: b.shape.clone(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Config(format!("serializing checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(8 + header_json.len() + params.data.len() * 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for &v in &params.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(
    path: &Path,
    kind: &str,
    meta: &serde_json::Value,
    layout: &Layout,
    params: &Params,
) -> Result<()> {
    io::write_atomic(path, &encode_checkpoint(kind, meta, layout, params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint_bytes(&bytes)
        .map_err(|detail| Error::format(path.display().to_string(), detail))
}

/// Check that a checkpoint's blocks match a freshly built layout and copy the
/// values into a parameter vector.
pub fn restore_params(checkpoint: &Checkpoint, layout: &Layout, file: &str) -> Result<Params> {
    let expected: Vec<BlockHeader> = layout
        .blocks()
        .iter()
        .map(|b| BlockHeader {
            name: b.name.clone(),
            shape: b.shape.clone(),
        })
        .collect();
    if checkpoint.header.blocks != expected {
        return Err(Error::format(
            file,
            format!(
                "parameter blocks do not match the declared architecture \
                 ({} blocks in file, {} expected)",
                checkpoint.header.blocks.len(),
                expected.len()
            ),
        ));
    }
    Ok(Params {
        data: checkpoint.values.iter().map(|&v| f64::from(v)).collect(),
    })
}
