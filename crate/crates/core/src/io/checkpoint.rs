//! Binary model checkpoints.
//!
//! Layout: magic `LFCY`, format version (u32 LE), header length (u32 LE),
//! JSON header, then every parameter as f32 LE in canonical order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::net::{ArchConfig, InterpolatorModel, ModelAxis};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LFCY";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: ArchConfig,
    pub axis: ModelAxis,
    /// How the weights were produced, e.g. `pretrained` or `finetuned/self`.
    pub provenance: String,
    pub seed: u64,
    pub param_count: usize,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn encode_checkpoint(model: &InterpolatorModel<f32>, provenance: &str, seed: u64, notes: &[String]) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        arch: model.config().clone(),
        axis: model.axis(),
        provenance: provenance.into(),
        seed,
        param_count: model.config().param_count(),
        notes: notes.to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * header.param_count);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(Error::TruncatedBlob { expected: at + 4, found: bytes.len() })?;
    Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(InterpolatorModel<f32>, CheckpointHeader)> {
    let magic: [u8; 4] = bytes
        .get(..4)
        .ok_or(Error::TruncatedBlob { expected: 4, found: bytes.len() })?
        .try_into()
        .expect("four bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = u32_at(bytes, 4)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let header_len = u32_at(bytes, 8)? as usize;
    let header_end = 12 + header_len;
    let json = bytes.get(12..header_end).ok_or(Error::TruncatedBlob { expected: header_end, found: bytes.len() })?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    header.arch.validate()?;
    if header.param_count != header.arch.param_count() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint header declares {} parameters but the architecture has {}",
            header.param_count,
            header.arch.param_count()
        )));
    }
    let blob = &bytes[header_end..];
    let expected = 4 * header.param_count;
    if blob.len() != expected {
        return Err(Error::TruncatedBlob { expected, found: blob.len() });
    }
    let mut values = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")));
    let params = header
        .arch
        .param_specs()
        .iter()
        .map(|(_, shape)| {
            let n = shape.iter().product();
            Tensor::new(shape, values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let model = InterpolatorModel::from_params(header.arch.clone(), header.axis, params)?;
    if !model.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok((model, header))
}

pub fn save_checkpoint(model: &InterpolatorModel<f32>, path: &Path, provenance: &str, seed: u64, notes: &[String]) -> Result<()> {
    let bytes = encode_checkpoint(model, provenance, seed, notes)?;
    super::ensure_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(InterpolatorModel<f32>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Json(j) => Error::format(path, format!("checkpoint header: {j}")),
        other => other,
    })
}
