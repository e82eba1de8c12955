//! Prompt-artifact persistence.
//!
//! Layout mirrors the checkpoint format: 8-byte magic, u32 version,
//! length-prefixed JSON header (origin checkpoint hash, prompt token ids,
//! training metadata), the k x d matrix as little-endian 64-bit values,
//! then a SHA-256 of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

use super::{PromptEmbedding, TrainMeta};

const MAGIC: &[u8; 8] = b"PGRDPRMT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    origin_hash: String,
    tokens: Vec<usize>,
    rows: usize,
    cols: usize,
    meta: TrainMeta,
}

pub fn save_artifact<T: Scalar>(p: &PromptEmbedding<T>, path: &Path) -> Result<()> {
    let header = Header {
        origin_hash: hex(p.origin_hash()),
        tokens: p.tokens().to_vec(),
        rows: p.matrix().rows(),
        cols: p.matrix().cols(),
        meta: p.meta().clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for &v in p.matrix().data() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    let hash: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&hash);
    fs::write(path, buf)?;
    Ok(())
}

/// Loads an artifact. When a checkpoint is supplied, origin-hash
/// compatibility is verified before returning.
pub fn load_artifact<T: Scalar>(
    path: &Path,
    expected: Option<&ModelCheckpoint<T>>,
) -> Result<PromptEmbedding<T>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(Error::Parse("artifact file truncated".to_string()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Parse("bad artifact magic".to_string()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(Error::Parse("artifact header truncated".to_string()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;
    let matrix_bytes = header.rows * header.cols * 8;
    let expected_len = 16 + header_len + matrix_bytes + 32;
    if bytes.len() != expected_len {
        return Err(Error::Parse(format!(
            "artifact is {} bytes, expected {} (truncated or trailing data)",
            bytes.len(),
            expected_len
        )));
    }
    let (body, stored_hash) = bytes.split_at(bytes.len() - 32);
    let actual: [u8; 32] = Sha256::digest(body).into();
    if actual != stored_hash {
        return Err(Error::Integrity(
            "artifact content hash mismatch".to_string(),
        ));
    }

    let mut data = Vec::with_capacity(header.rows * header.cols);
    let weights = &bytes[16 + header_len..16 + header_len + matrix_bytes];
    for chunk in weights.chunks_exact(8) {
        data.push(T::from_f64(f64::from_le_bytes(chunk.try_into().unwrap())));
    }
    let matrix = Tensor2::from_vec(header.rows, header.cols, data)?;
    let origin_hash = unhex(&header.origin_hash)?;
    let prompt = PromptEmbedding::from_parts(header.tokens, matrix, origin_hash, header.meta)?;
    if let Some(ckpt) = expected {
        prompt.check_compatible(ckpt)?;
    }
    Ok(prompt)
}

fn hex(bytes: &[u8; 32]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::Parse("origin hash must be 64 hex chars".to_string()));
    }
    let mut out = [0u8; 32];
    for i in 0..32 {
        out[i] = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::Parse("bad hex in origin hash".to_string()))?;
    }
    Ok(out)
}
