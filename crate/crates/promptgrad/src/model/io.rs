//! Checkpoint persistence.
//!
//! Layout: 8-byte magic, u32 version, length-prefixed JSON header (config,
//! vocabulary), raw little-endian 64-bit weight blocks in declared order,
//! then a SHA-256 of everything before it. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

use super::{ModelCheckpoint, ModelConfig, Vocabulary};

const MAGIC: &[u8; 8] = b"PGRDCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tokens: Vec<String>,
    eos_id: usize,
}

/// Serializes a checkpoint. Weight values are widened to f64 on disk
/// regardless of the in-memory scalar type.
pub fn save_checkpoint<T: Scalar>(ckpt: &ModelCheckpoint<T>, path: &Path) -> Result<()> {
    let header = Header {
        config: ckpt.config().clone(),
        tokens: ckpt.vocabulary().tokens().to_vec(),
        eos_id: ckpt.vocabulary().eos_id(),
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for w in ckpt.weights() {
        for &v in w.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let hash: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&hash);
    fs::write(path, buf)?;
    Ok(())
}

/// Loads a checkpoint, verifying magic, version and content hash.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelCheckpoint<T>> {
    let bytes = fs::read(path)?;
    let mut cursor = Cursor::new(&bytes);

    let magic = cursor.take(8)?;
    if magic != MAGIC {
        return Err(Error::Parse("bad checkpoint magic".to_string()));
    }
    let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(cursor.take(header_len)?)?;
    header.config.validate()?;
    let vocabulary = Vocabulary::from_tokens(header.tokens, header.eos_id)?;

    let shapes = weight_shapes(&header.config);
    let weight_bytes: usize = shapes.iter().map(|&(r, c)| r * c * 8).sum();
    let expected_len = cursor.pos + weight_bytes + 32;
    if bytes.len() != expected_len {
        return Err(Error::Parse(format!(
            "checkpoint is {} bytes, expected {} (truncated or trailing data)",
            bytes.len(),
            expected_len
        )));
    }

    // Body hash covers everything before the trailing 32 bytes.
    let (body, stored_hash) = bytes.split_at(bytes.len() - 32);
    let actual: [u8; 32] = Sha256::digest(body).into();
    if actual != stored_hash {
        return Err(Error::Integrity(
            "checkpoint content hash mismatch".to_string(),
        ));
    }

    let mut tensors = Vec::with_capacity(shapes.len());
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let raw = cursor.take(8)?;
            data.push(T::from_f64(f64::from_le_bytes(raw.try_into().unwrap())));
        }
        tensors.push(Tensor2::from_vec(rows, cols, data)?);
    }
    ModelCheckpoint::from_parts(header.config, vocabulary, tensors)
}

/// Declared weight order and shapes implied by a config.
fn weight_shapes(config: &ModelConfig) -> Vec<(usize, usize)> {
    let d = config.d;
    let mut shapes = vec![(config.vocab, d), (config.max_seq, d)];
    for _ in 0..config.layers {
        shapes.extend([
            (1, d),
            (1, d),
            (d, d),
            (d, d),
            (d, d),
            (d, d),
            (1, d),
            (1, d),
            (d, config.d_ff),
            (1, config.d_ff),
            (config.d_ff, d),
            (1, d),
        ]);
    }
    shapes.extend([(1, d), (1, d), (d, config.vocab), (1, config.vocab)]);
    shapes
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!(
                "file truncated: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> ModelCheckpoint<f64> {
        let vocab = Vocabulary::from_corpus("xyz 01");
        let config = ModelConfig {
            d: 8,
            layers: 2,
            heads: 2,
            d_ff: 16,
            max_seq: 10,
            vocab: vocab.len(),
        };
        ModelCheckpoint::init_random(config, vocab, 42).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded: ModelCheckpoint<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.weights_hash(), ckpt.weights_hash());
    }

    #[test]
    fn flipped_weight_byte_fails_integrity() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [bytes.len() / 3, 10, bytes.len() - 5] {
            fs::write(&path, &bytes[..cut]).unwrap();
            match load_checkpoint::<f64>(&path) {
                Err(Error::Parse(_)) => {}
                other => panic!("expected parse error at cut {cut}, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        fs::write(&path, b"NOTMAGIC__________________________________").unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&sample(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
