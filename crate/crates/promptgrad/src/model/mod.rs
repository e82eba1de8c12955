//! The frozen miniature autoregressive transformer.
//!
//! Pre-norm blocks with causal multi-head attention and a GELU feedforward,
//! learned absolute position embeddings, character-level vocabulary, and a
//! linear output head. The forward pass is always expressed through a
//! [`GradTape`], so training and inference share one code path; inference
//! simply discards the tape afterwards.

mod io;
mod pretrain;
mod vocab;

pub use io::{load_checkpoint, save_checkpoint};
pub use pretrain::{pretrain_base, PretrainReport};
pub use vocab::{Vocabulary, EOS_SYMBOL};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{GradTape, ValueId};
use crate::tensor::Tensor2;

/// Default layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Transformer layer count (0 is allowed for degenerate testing).
    pub layers: usize,
    /// Attention head count; must divide `d`.
    pub heads: usize,
    /// Feedforward hidden width.
    pub d_ff: usize,
    /// Maximum sequence length (prompt + input + generation).
    pub max_seq: usize,
    /// Vocabulary size.
    pub vocab: usize,
}

impl ModelConfig {
    /// Desk-scale default: small enough for finite-difference testing in
    /// seconds, big enough to learn the bundled tasks.
    pub fn desk_scale(vocab: usize) -> Self {
        ModelConfig {
            d: 64,
            layers: 4,
            heads: 4,
            d_ff: 256,
            max_seq: 256,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d_ff == 0 || self.max_seq == 0 || self.vocab == 0
        {
            return Err(Error::Param(
                "d, heads, d_ff, max_seq and vocab must all be >= 1".to_string(),
            ));
        }
        if self.d % self.heads != 0 {
            return Err(Error::Param(format!(
                "embedding dimension {} not divisible by {} heads",
                self.d, self.heads
            )));
        }
        Ok(())
    }
}

/// Weights of one pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_gain: Tensor2<T>,
    pub ln1_bias: Tensor2<T>,
    pub wq: Tensor2<T>,
    pub wk: Tensor2<T>,
    pub wv: Tensor2<T>,
    pub wo: Tensor2<T>,
    pub ln2_gain: Tensor2<T>,
    pub ln2_bias: Tensor2<T>,
    pub w1: Tensor2<T>,
    pub b1: Tensor2<T>,
    pub w2: Tensor2<T>,
    pub b2: Tensor2<T>,
}

/// The frozen base model: configuration, vocabulary and all weights.
///
/// Nothing in the public API hands out mutable weight references; after
/// construction (or load) a checkpoint only ever changes through
/// [`pretrain_base`], which owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint<T> {
    config: ModelConfig,
    vocabulary: Vocabulary,
    embedding: Tensor2<T>,
    pos_embedding: Tensor2<T>,
    layers: Vec<LayerWeights<T>>,
    lnf_gain: Tensor2<T>,
    lnf_bias: Tensor2<T>,
    w_out: Tensor2<T>,
    b_out: Tensor2<T>,
}

/// Per-layer activations `h^(0)..h^(L)` from one forward pass.
#[derive(Debug, Clone)]
pub struct HiddenStates<T> {
    layers: Vec<Tensor2<T>>,
}

impl<T: Scalar> HiddenStates<T> {
    /// Number of recorded states (always layer count + 1).
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, i: usize) -> &Tensor2<T> {
        &self.layers[i]
    }

    /// Hidden state of the final sequence position at layer `i`.
    pub fn last_position(&self, i: usize) -> &[T] {
        let t = &self.layers[i];
        t.row(t.rows() - 1)
    }
}

/// Tape handles for every checkpoint weight, in declared order.
pub struct TapeParams {
    pub embedding: ValueId,
    pub pos_embedding: ValueId,
    pub layers: Vec<LayerParamIds>,
    pub lnf_gain: ValueId,
    pub lnf_bias: ValueId,
    pub w_out: ValueId,
    pub b_out: ValueId,
}

pub struct LayerParamIds {
    pub ln1_gain: ValueId,
    pub ln1_bias: ValueId,
    pub wq: ValueId,
    pub wk: ValueId,
    pub wv: ValueId,
    pub wo: ValueId,
    pub ln2_gain: ValueId,
    pub ln2_bias: ValueId,
    pub w1: ValueId,
    pub b1: ValueId,
    pub w2: ValueId,
    pub b2: ValueId,
}

/// Output handles of a taped forward pass.
pub struct ForwardNodes {
    pub logits: ValueId,
    pub hidden: Vec<ValueId>,
}

impl<T: Scalar> ModelCheckpoint<T> {
    /// Fresh checkpoint with N(0, 0.02) weights, unit layer-norm gains and
    /// zero biases. Deterministic in `seed`.
    pub fn init_random(config: ModelConfig, vocabulary: Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocabulary.len() != config.vocab {
            return Err(Error::Param(format!(
                "config vocab {} does not match vocabulary size {}",
                config.vocab,
                vocabulary.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid stddev");
        let mut randn = |rows: usize, cols: usize| {
            Tensor2::from_fn(rows, cols, |_, _| T::from_f64(normal.sample(&mut rng)))
        };
        let d = config.d;
        let embedding = randn(config.vocab, d);
        let pos_embedding = randn(config.max_seq, d);
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                ln1_gain: ones(1, d),
                ln1_bias: Tensor2::zeros(1, d),
                wq: randn(d, d),
                wk: randn(d, d),
                wv: randn(d, d),
                wo: randn(d, d),
                ln2_gain: ones(1, d),
                ln2_bias: Tensor2::zeros(1, d),
                w1: randn(d, config.d_ff),
                b1: Tensor2::zeros(1, config.d_ff),
                w2: randn(config.d_ff, d),
                b2: Tensor2::zeros(1, d),
            })
            .collect();
        let lnf_gain = ones(1, d);
        let lnf_bias = Tensor2::zeros(1, d);
        let w_out = randn(d, config.vocab);
        let b_out = Tensor2::zeros(1, config.vocab);
        Ok(ModelCheckpoint {
            config,
            vocabulary,
            embedding,
            pos_embedding,
            layers,
            lnf_gain,
            lnf_bias,
            w_out,
            b_out,
        })
    }

    /// Rebuilds a checkpoint from weight tensors in declared order
    /// (deserialization and test-construction path). Shapes are validated
    /// against the config.
    pub fn from_parts(
        config: ModelConfig,
        vocabulary: Vocabulary,
        mut tensors: Vec<Tensor2<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut template = Self::init_random(config, vocabulary, 0)?;
        let expected: Vec<(usize, usize)> = template.weights().iter().map(|w| w.shape()).collect();
        if tensors.len() != expected.len() {
            return Err(Error::Parse(format!(
                "expected {} weight tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (i, (tensor, shape)) in tensors.iter().zip(&expected).enumerate() {
            if tensor.shape() != *shape {
                return Err(Error::Parse(format!(
                    "weight {} has shape {:?}, expected {:?}",
                    i,
                    tensor.shape(),
                    shape
                )));
            }
        }
        for slot in template.weights_mut() {
            *slot = tensors.remove(0);
        }
        Ok(template)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// The token embedding table E (V x d).
    pub fn embedding(&self) -> &Tensor2<T> {
        &self.embedding
    }

    /// All weight tensors in declared (serialization) order.
    pub fn weights(&self) -> Vec<&Tensor2<T>> {
        let mut out: Vec<&Tensor2<T>> = vec![&self.embedding, &self.pos_embedding];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain,
                &l.ln1_bias,
                &l.wq,
                &l.wk,
                &l.wv,
                &l.wo,
                &l.ln2_gain,
                &l.ln2_bias,
                &l.w1,
                &l.b1,
                &l.w2,
                &l.b2,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.w_out, &self.b_out]);
        out
    }

    pub(crate) fn weights_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut out: Vec<&mut Tensor2<T>> = vec![&mut self.embedding, &mut self.pos_embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.wq,
                &mut l.wk,
                &mut l.wv,
                &mut l.wo,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        out.extend([
            &mut self.lnf_gain,
            &mut self.lnf_bias,
            &mut self.w_out,
            &mut self.b_out,
        ]);
        out
    }

    /// SHA-256 over all weights (64-bit little-endian, declared order).
    /// This is the frozen-model witness: it must be identical before and
    /// after any prompt optimization.
    pub fn weights_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for w in self.weights() {
            for &v in w.data() {
                hasher.update(v.as_f64().to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    /// Hex form of [`Self::weights_hash`], used in artifact metadata.
    pub fn weights_hash_hex(&self) -> String {
        self.weights_hash().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Token-embedding rows only, without the positional component.
    pub fn token_rows(&self, tokens: &[usize]) -> Result<Tensor2<T>> {
        let v = self.config.vocab;
        let mut out = Tensor2::zeros(tokens.len(), self.config.d);
        for (r, &t) in tokens.iter().enumerate() {
            if t >= v {
                return Err(Error::Index { index: t, limit: v });
            }
            let src = self.embedding.row(t).to_vec();
            out.row_mut(r).copy_from_slice(&src);
        }
        Ok(out)
    }

    /// Embeds a token sequence: embedding row plus position row per token.
    pub fn embed(&self, tokens: &[usize]) -> Result<Tensor2<T>> {
        if tokens.len() > self.config.max_seq {
            return Err(Error::Capacity {
                needed: tokens.len(),
                max_seq: self.config.max_seq,
            });
        }
        let rows = self.token_rows(tokens)?;
        let pos = self.pos_embedding.slice_rows(0, tokens.len())?;
        rows.add(&pos)
    }

    /// Position-embedding rows `0..len`, for callers assembling mixed
    /// prompt/input sequences.
    pub fn position_rows(&self, len: usize) -> Result<Tensor2<T>> {
        if len > self.config.max_seq {
            return Err(Error::Capacity {
                needed: len,
                max_seq: self.config.max_seq,
            });
        }
        self.pos_embedding.slice_rows(0, len)
    }

    /// Registers every weight on a tape, as leaves when `trainable` (the
    /// pretraining path) or as constants (the frozen path everywhere else).
    /// Leaf registration order matches [`Self::weights`].
    pub fn register_params(&self, tape: &mut GradTape<T>, trainable: bool) -> TapeParams {
        let mut reg = |t: &Tensor2<T>| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let embedding = reg(&self.embedding);
        let pos_embedding = reg(&self.pos_embedding);
        let layers = self
            .layers
            .iter()
            .map(|l| LayerParamIds {
                ln1_gain: reg(&l.ln1_gain),
                ln1_bias: reg(&l.ln1_bias),
                wq: reg(&l.wq),
                wk: reg(&l.wk),
                wv: reg(&l.wv),
                wo: reg(&l.wo),
                ln2_gain: reg(&l.ln2_gain),
                ln2_bias: reg(&l.ln2_bias),
                w1: reg(&l.w1),
                b1: reg(&l.b1),
                w2: reg(&l.w2),
                b2: reg(&l.b2),
            })
            .collect();
        TapeParams {
            embedding,
            pos_embedding,
            layers,
            lnf_gain: reg(&self.lnf_gain),
            lnf_bias: reg(&self.lnf_bias),
            w_out: reg(&self.w_out),
            b_out: reg(&self.b_out),
        }
    }

    /// The transformer stack on a tape: pre-norm causal attention and GELU
    /// feedforward per layer, closing layer norm (when L >= 1), linear head.
    /// `h0` must already contain token plus position rows.
    pub fn forward_on_tape(
        &self,
        tape: &mut GradTape<T>,
        h0: ValueId,
        params: &TapeParams,
    ) -> Result<ForwardNodes> {
        let seq = tape.value(h0)?.rows();
        if seq > self.config.max_seq {
            return Err(Error::Capacity {
                needed: seq,
                max_seq: self.config.max_seq,
            });
        }
        let eps = T::from_f64(LN_EPS);
        let d_head = self.config.d / self.config.heads;
        let scale = T::from_f64(1.0 / (d_head as f64).sqrt());

        let mut x = h0;
        let mut hidden = vec![x];
        for layer in &params.layers {
            let normed = tape.layer_norm(x, layer.ln1_gain, layer.ln1_bias, eps)?;
            let q = tape.matmul(normed, layer.wq)?;
            let k = tape.matmul(normed, layer.wk)?;
            let v = tape.matmul(normed, layer.wv)?;
            let mut contexts = Vec::with_capacity(self.config.heads);
            for h in 0..self.config.heads {
                let start = h * d_head;
                let qh = tape.slice_cols(q, start, d_head)?;
                let kh = tape.slice_cols(k, start, d_head)?;
                let vh = tape.slice_cols(v, start, d_head)?;
                let scores = tape.matmul_nt(qh, kh)?;
                let scaled = tape.scale(scores, scale)?;
                let attn = tape.causal_softmax(scaled)?;
                contexts.push(tape.matmul(attn, vh)?);
            }
            let ctx = if contexts.len() == 1 {
                contexts[0]
            } else {
                tape.concat_cols(&contexts)?
            };
            let proj = tape.matmul(ctx, layer.wo)?;
            x = tape.add(x, proj)?;

            let normed2 = tape.layer_norm(x, layer.ln2_gain, layer.ln2_bias, eps)?;
            let ff1 = tape.matmul(normed2, layer.w1)?;
            let ff1 = tape.add_row(ff1, layer.b1)?;
            let act = tape.gelu(ff1)?;
            let ff2 = tape.matmul(act, layer.w2)?;
            let ff2 = tape.add_row(ff2, layer.b2)?;
            x = tape.add(x, ff2)?;
            hidden.push(x);
        }

        let head_in = if self.layers.is_empty() {
            x
        } else {
            tape.layer_norm(x, params.lnf_gain, params.lnf_bias, eps)?
        };
        let logits = tape.matmul(head_in, params.w_out)?;
        let logits = tape.add_row(logits, params.b_out)?;
        Ok(ForwardNodes { logits, hidden })
    }

    /// Plain forward pass: logits and all hidden states for an embedded
    /// sequence. Pure; the internal tape is discarded.
    pub fn forward(&self, input_embeds: &Tensor2<T>) -> Result<(Tensor2<T>, HiddenStates<T>)> {
        let mut tape = GradTape::new();
        let params = self.register_params(&mut tape, false);
        let h0 = tape.constant(input_embeds.clone());
        let nodes = self.forward_on_tape(&mut tape, h0, &params)?;
        let logits = tape.value(nodes.logits)?.clone();
        let layers = nodes
            .hidden
            .iter()
            .map(|&id| Ok(tape.value(id)?.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok((logits, HiddenStates { layers }))
    }
}

fn ones<T: Scalar>(rows: usize, cols: usize) -> Tensor2<T> {
    Tensor2::from_fn(rows, cols, |_, _| T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_checkpoint(layers: usize) -> ModelCheckpoint<f64> {
        let vocab = Vocabulary::from_corpus("abcdef");
        let config = ModelConfig {
            d: 8,
            layers,
            heads: 2,
            d_ff: 16,
            max_seq: 12,
            vocab: vocab.len(),
        };
        ModelCheckpoint::init_random(config, vocab, 7).unwrap()
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        let cfg = ModelConfig {
            d: 10,
            layers: 1,
            heads: 3,
            d_ff: 4,
            max_seq: 8,
            vocab: 5,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn embed_empty_sequence() {
        let ckpt = tiny_checkpoint(1);
        let e = ckpt.embed(&[]).unwrap();
        assert_eq!(e.shape(), (0, 8));
    }

    #[test]
    fn embed_with_zero_position_table_copies_embedding_row() {
        let ckpt = tiny_checkpoint(1);
        let mut tensors: Vec<Tensor2<f64>> = ckpt.weights().into_iter().cloned().collect();
        tensors[1] = Tensor2::zeros(12, 8); // zero out the position table
        let zeroed =
            ModelCheckpoint::from_parts(ckpt.config().clone(), ckpt.vocabulary().clone(), tensors)
                .unwrap();
        let e = zeroed.embed(&[0]).unwrap();
        assert_eq!(e.row(0), zeroed.embedding().row(0));
    }

    #[test]
    fn embed_respects_token_order() {
        let ckpt = tiny_checkpoint(1);
        let ab = ckpt.token_rows(&[1, 2]).unwrap();
        let ba = ckpt.token_rows(&[2, 1]).unwrap();
        assert_eq!(ab.row(0), ba.row(1));
        assert_eq!(ab.row(1), ba.row(0));
    }

    #[test]
    fn embed_rejects_out_of_vocab_id() {
        let ckpt = tiny_checkpoint(1);
        let v = ckpt.config().vocab;
        assert!(matches!(
            ckpt.embed(&[v]),
            Err(Error::Index { index, .. }) if index == v
        ));
    }

    #[test]
    fn forward_rejects_overlong_input() {
        let ckpt = tiny_checkpoint(1);
        let long = Tensor2::zeros(13, 8);
        assert!(matches!(
            ckpt.forward(&long),
            Err(Error::Capacity { needed: 13, max_seq: 12 })
        ));
    }

    #[test]
    fn zero_layer_config_is_plain_linear_head() {
        let ckpt = tiny_checkpoint(0);
        let tokens = [1usize, 2, 3];
        let embeds = ckpt.embed(&tokens).unwrap();
        let (logits, hidden) = ckpt.forward(&embeds).unwrap();
        assert_eq!(hidden.len(), 1);
        let expected = crate::tensor::matmul(&embeds, ckpt.weights()[ckpt.weights().len() - 2])
            .unwrap();
        for r in 0..logits.rows() {
            for c in 0..logits.cols() {
                // b_out is zero at init, so logits = h0 @ w_out exactly.
                assert_eq!(logits.at(r, c), expected.at(r, c));
            }
        }
    }

    #[test]
    fn forward_prefix_property() {
        let ckpt = tiny_checkpoint(2);
        let tokens = [1usize, 3, 2, 4, 1];
        let full = ckpt.embed(&tokens).unwrap();
        let (full_logits, _) = ckpt.forward(&full).unwrap();
        for t in 1..tokens.len() {
            let prefix = ckpt.embed(&tokens[..t]).unwrap();
            let (prefix_logits, _) = ckpt.forward(&prefix).unwrap();
            for r in 0..t {
                for c in 0..prefix_logits.cols() {
                    let diff = (prefix_logits.at(r, c) - full_logits.at(r, c)).abs();
                    assert!(diff < 1e-10, "prefix {t} row {r} col {c} diff {diff}");
                }
            }
        }
    }

    #[test]
    fn causality_future_rows_do_not_leak_backward() {
        let ckpt = tiny_checkpoint(2);
        let tokens = [2usize, 4, 1, 3];
        let base = ckpt.embed(&tokens).unwrap();
        let (base_logits, _) = ckpt.forward(&base).unwrap();
        // Perturb the last row; logits at earlier positions must not move.
        let mut perturbed = base.clone();
        for c in 0..perturbed.cols() {
            let v = perturbed.at(3, c) + 0.5 * (c as f64 + 1.0);
            perturbed.set(3, c, v);
        }
        let (pert_logits, _) = ckpt.forward(&perturbed).unwrap();
        for r in 0..3 {
            assert_eq!(pert_logits.row(r), base_logits.row(r), "row {r} leaked");
        }
        assert_ne!(pert_logits.row(3), base_logits.row(3));
    }

    #[test]
    fn forward_is_deterministic() {
        let ckpt = tiny_checkpoint(2);
        let embeds = ckpt.embed(&[1, 2, 3, 4]).unwrap();
        let (a, _) = ckpt.forward(&embeds).unwrap();
        let (b, _) = ckpt.forward(&embeds).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn hidden_state_count_is_layers_plus_one() {
        for layers in [0usize, 1, 3] {
            let ckpt = tiny_checkpoint(layers);
            let embeds = ckpt.embed(&[1, 2]).unwrap();
            let (_, hidden) = ckpt.forward(&embeds).unwrap();
            assert_eq!(hidden.len(), layers + 1);
            assert_eq!(hidden.layer(0).data(), embeds.data());
        }
    }

    #[test]
    fn init_random_same_seed_is_bit_identical() {
        let a = tiny_checkpoint(2);
        let b = tiny_checkpoint(2);
        assert_eq!(a.weights_hash(), b.weights_hash());
    }

    #[test]
    fn register_params_order_matches_weights_order() {
        let ckpt = tiny_checkpoint(2);
        let mut tape = GradTape::<f64>::new();
        let params = ckpt.register_params(&mut tape, true);
        let embeds = ckpt.embed(&[1, 2, 3]).unwrap();
        let h0 = tape.constant(embeds);
        let nodes = ckpt.forward_on_tape(&mut tape, h0, &params).unwrap();
        let loss = tape.cross_entropy(nodes.logits, &[2, 3, 4]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let weights = ckpt.weights();
        let collected: Vec<_> = grads.iter().collect();
        assert_eq!(collected.len(), weights.len());
        for ((_, g), w) in collected.iter().zip(&weights) {
            assert_eq!(g.shape(), w.shape());
        }
    }
}
