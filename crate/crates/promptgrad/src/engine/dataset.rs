//! Labeled datasets: one JSON record per line with "input" and "target".

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vocabulary;

use super::TrainingExample;

/// One raw dataset record before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub input: String,
    pub target: String,
}

/// Reads a JSONL dataset; parse failures report the 1-based line number.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line {}: {}", i + 1, e)))?;
        records.push(record);
    }
    Ok(records)
}

pub fn save_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Tokenizes records into training examples. When `append_eos` is set the
/// EOS token is appended to every target so the model learns to stop.
/// Errors name the 1-based record number.
pub fn tokenize_records(
    records: &[DatasetRecord],
    vocab: &Vocabulary,
    append_eos: bool,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let build = || -> Result<TrainingExample> {
            let input = vocab.tokenize(&r.input)?;
            let mut target = vocab.tokenize(&r.target)?;
            if append_eos {
                target.push(vocab.eos_id());
            }
            TrainingExample::new(input, target)
        };
        out.push(build().map_err(|e| Error::Parse(format!("record {}: {}", i + 1, e)))?);
    }
    Ok(out)
}
