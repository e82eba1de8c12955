//! Deployment-phase generation and evaluation.
//!
//! The optimized prompt matrix is concatenated with the embedded user
//! query and decoded greedily, re-running the full forward pass each step
//! (no KV cache at desk scale). Every step's complete next-token
//! distribution is recorded so the diagnostics can work offline from the
//! trace alone.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{PromptEmbedding, TrainingExample};
use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::scalar::Scalar;
use crate::tensor::{softmax_rows, Tensor2};

/// Why a generation loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenStop {
    Eos,
    MaxTokens,
}

/// Full record of one greedy decode: chosen tokens and the complete
/// next-token distribution at every step.
#[derive(Debug, Clone)]
pub struct GenerationTrace<T> {
    pub tokens: Vec<usize>,
    /// One row per step, V columns, each row summing to 1.
    pub distributions: Tensor2<T>,
    pub stop: GenStop,
    /// Per-step Shannon entropies in bits, filled in by diagnostics.
    pub step_entropy_bits: Option<Vec<f64>>,
}

impl<T: Scalar> GenerationTrace<T> {
    /// Steps taken (the trace length the entropy mean runs over).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Generated text up to (not including) the EOS token.
    pub fn text(&self, ckpt: &ModelCheckpoint<T>) -> Result<String> {
        let eos = ckpt.vocabulary().eos_id();
        let visible: Vec<usize> = self
            .tokens
            .iter()
            .copied()
            .take_while(|&t| t != eos)
            .collect();
        ckpt.vocabulary().detokenize(&visible)
    }
}

/// Greedy decode from a prompt embedding plus user input text.
///
/// Each step forwards the whole concatenated sequence, takes the argmax of
/// the final position's distribution (ties broken by lowest token id),
/// appends that token's embedding row and repeats until EOS, `max_tokens`,
/// or the model's sequence capacity (which truncates with `MaxTokens`
/// rather than erroring).
pub fn generate<T: Scalar>(
    p: &PromptEmbedding<T>,
    user_input: &str,
    ckpt: &ModelCheckpoint<T>,
    max_tokens: usize,
    eos_token: Option<usize>,
) -> Result<GenerationTrace<T>> {
    p.check_compatible(ckpt)?;
    let input_tokens = ckpt.vocabulary().tokenize(user_input)?;
    let input_rows = ckpt.token_rows(&input_tokens)?;
    let rows = Tensor2::concat_rows(&[p.matrix(), &input_rows])?;
    decode_greedy(rows, ckpt, max_tokens, eos_token)
}

/// Greedy decode from plain text (no prompt artifact): tokenize, embed,
/// decode. With an unoptimized prompt embedding this produces a trace
/// byte-identical to [`generate`], because initialization is an exact
/// embedding lookup.
pub fn generate_from_text<T: Scalar>(
    text: &str,
    ckpt: &ModelCheckpoint<T>,
    max_tokens: usize,
    eos_token: Option<usize>,
) -> Result<GenerationTrace<T>> {
    let tokens = ckpt.vocabulary().tokenize(text)?;
    let rows = ckpt.token_rows(&tokens)?;
    decode_greedy(rows, ckpt, max_tokens, eos_token)
}

/// Shared decode loop over token-embedding rows (positions are applied
/// inside, on the full concatenated sequence, every step).
fn decode_greedy<T: Scalar>(
    mut rows: Tensor2<T>,
    ckpt: &ModelCheckpoint<T>,
    max_tokens: usize,
    eos_token: Option<usize>,
) -> Result<GenerationTrace<T>> {
    let vocab = ckpt.config().vocab;
    let max_seq = ckpt.config().max_seq;
    let eos = eos_token.unwrap_or_else(|| ckpt.vocabulary().eos_id());
    if rows.rows() > max_seq {
        return Err(Error::Capacity {
            needed: rows.rows(),
            max_seq,
        });
    }
    if rows.rows() == 0 {
        return Err(Error::Usage(
            "cannot decode from an empty sequence".to_string(),
        ));
    }

    let mut tokens = Vec::new();
    let mut dists: Vec<Vec<T>> = Vec::new();
    let mut stop = GenStop::MaxTokens;
    for _ in 0..max_tokens {
        if rows.rows() > max_seq {
            // Out of room mid-generation: truncate, do not error.
            stop = GenStop::MaxTokens;
            break;
        }
        let seq = rows.rows();
        let h0 = rows.add(&ckpt.position_rows(seq)?)?;
        let (logits, _) = ckpt.forward(&h0)?;
        let last = logits.slice_rows(seq - 1, 1)?;
        let dist = softmax_rows(&last);
        let next = argmax_lowest(dist.row(0));
        tokens.push(next);
        dists.push(dist.row(0).to_vec());
        if next == eos {
            stop = GenStop::Eos;
            break;
        }
        let next_row = ckpt.token_rows(&[next])?;
        rows = Tensor2::concat_rows(&[&rows, &next_row])?;
    }

    let mut flat = Vec::with_capacity(dists.len() * vocab);
    for d in &dists {
        flat.extend_from_slice(d);
    }
    Ok(GenerationTrace {
        distributions: Tensor2::from_vec(dists.len(), vocab, flat)?,
        tokens,
        stop,
        step_entropy_bits: None,
    })
}

/// Greedy argmax with ties broken by the lowest token id.
pub(crate) fn argmax_lowest<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

// ── Evaluation ───────────────────────────────────────────────────────

/// How generated text is compared to the reference answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "marker")]
pub enum Matcher {
    /// Whitespace-trimmed exact match.
    Exact,
    /// Compare only the text after the last occurrence of a marker
    /// (answer-extraction convention for delimited outputs).
    AfterMarker(String),
}

impl Matcher {
    pub fn matches(&self, generated: &str, reference: &str) -> bool {
        match self {
            Matcher::Exact => generated.trim() == reference.trim(),
            Matcher::AfterMarker(marker) => {
                let extract = |s: &str| {
                    s.rfind(marker.as_str())
                        .map(|i| s[i + marker.len()..].trim().to_string())
                };
                match (extract(generated), extract(reference)) {
                    (Some(g), Some(r)) => g == r,
                    // Unparseable output counts as incorrect.
                    _ => false,
                }
            }
        }
    }
}

/// One evaluated example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalCase {
    pub input: String,
    pub generated: String,
    pub reference: String,
    pub correct: bool,
}

/// Aggregate accuracy over a test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<EvalCase>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Generates greedily for every test example and scores it with the
/// matcher. EOS tokens on the reference side are stripped before
/// comparison.
pub fn evaluate<T: Scalar>(
    p: &PromptEmbedding<T>,
    test: &[TrainingExample],
    ckpt: &ModelCheckpoint<T>,
    matcher: &Matcher,
    max_tokens: usize,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Usage("test set is empty".to_string()));
    }
    let vocab = ckpt.vocabulary();
    let eos = vocab.eos_id();
    let mut cases = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for ex in test {
        let input_text = vocab.detokenize(&ex.input)?;
        let ref_ids: Vec<usize> = ex.target.iter().copied().filter(|&t| t != eos).collect();
        let reference = vocab.detokenize(&ref_ids)?;
        let trace = generate(p, &input_text, ckpt, max_tokens, None)?;
        let generated = trace.text(ckpt)?;
        let ok = matcher.matches(&generated, &reference);
        correct += ok as usize;
        cases.push(EvalCase {
            input: input_text,
            generated,
            reference,
            correct: ok,
        });
    }
    let total = cases.len();
    Ok(EvalReport {
        cases,
        correct,
        total,
        accuracy: correct as f64 / total as f64,
    })
}

// ── Trace export ─────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct TraceFile {
    tokens: Vec<usize>,
    stop: GenStop,
    vocab: usize,
    distributions: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    step_entropy_bits: Option<Vec<f64>>,
}

/// Writes a trace as JSON (tokens, per-step distributions, stop reason).
pub fn save_trace<T: Scalar>(trace: &GenerationTrace<T>, path: &Path) -> Result<()> {
    let rows = (0..trace.distributions.rows())
        .map(|r| {
            trace
                .distributions
                .row(r)
                .iter()
                .map(|v| v.as_f64())
                .collect()
        })
        .collect();
    let file = TraceFile {
        tokens: trace.tokens.clone(),
        stop: trace.stop,
        vocab: trace.distributions.cols(),
        distributions: rows,
        step_entropy_bits: trace.step_entropy_bits.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Reads a trace written by [`save_trace`].
pub fn load_trace<T: Scalar>(path: &Path) -> Result<GenerationTrace<T>> {
    let file: TraceFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let mut flat = Vec::with_capacity(file.tokens.len() * file.vocab);
    for row in &file.distributions {
        if row.len() != file.vocab {
            return Err(Error::Parse(format!(
                "trace row has {} entries, vocab is {}",
                row.len(),
                file.vocab
            )));
        }
        flat.extend(row.iter().map(|&v| T::from_f64(v)));
    }
    Ok(GenerationTrace {
        distributions: Tensor2::from_vec(file.distributions.len(), file.vocab, flat)?,
        tokens: file.tokens,
        stop: file.stop,
        step_entropy_bits: file.step_entropy_bits,
    })
}
