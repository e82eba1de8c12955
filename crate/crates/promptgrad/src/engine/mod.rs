//! Prompt-embedding optimization over a frozen checkpoint.
//!
//! Three stages: lift the prompt's embedding rows out of the frozen
//! embedding table, descend on them with Adam while every model weight
//! stays constant, persist the result. The prompt matrix is the only tape
//! leaf in this module, so nothing else can accumulate a gradient.

mod artifact;
mod dataset;

pub use artifact::{load_artifact, save_artifact};
pub use dataset::{load_dataset, save_dataset, tokenize_records, DatasetRecord};

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelCheckpoint;
use crate::optim::Adam;
use crate::scalar::Scalar;
use crate::tape::{GradTape, ValueId};
use crate::tensor::Tensor2;

/// The trainable object: one embedding row per prompt token.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding<T> {
    tokens: Vec<usize>,
    matrix: Tensor2<T>,
    origin_hash: [u8; 32],
    meta: TrainMeta,
}

/// Training provenance carried inside the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub learning_rate: f64,
    pub epochs_run: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub seed: u64,
}

impl Default for TrainMeta {
    fn default() -> Self {
        TrainMeta {
            learning_rate: 0.0,
            epochs_run: 0,
            final_train_loss: None,
            final_val_loss: None,
            seed: 0,
        }
    }
}

impl<T: Scalar> PromptEmbedding<T> {
    pub(crate) fn from_parts(
        tokens: Vec<usize>,
        matrix: Tensor2<T>,
        origin_hash: [u8; 32],
        meta: TrainMeta,
    ) -> Result<Self> {
        if tokens.len() != matrix.rows() {
            return Err(Error::Parse(format!(
                "prompt has {} tokens but matrix has {} rows",
                tokens.len(),
                matrix.rows()
            )));
        }
        Ok(PromptEmbedding {
            tokens,
            matrix,
            origin_hash,
            meta,
        })
    }

    /// Original prompt token ids; never changed by optimization.
    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// Prompt length k.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The k x d trainable matrix.
    pub fn matrix(&self) -> &Tensor2<T> {
        &self.matrix
    }

    pub fn origin_hash(&self) -> &[u8; 32] {
        &self.origin_hash
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    /// Errors unless the artifact was initialized from this checkpoint.
    pub fn check_compatible(&self, ckpt: &ModelCheckpoint<T>) -> Result<()> {
        if self.origin_hash != ckpt.weights_hash() {
            return Err(Error::Compatibility(
                "prompt artifact was built for a different checkpoint".to_string(),
            ));
        }
        if self.matrix.cols() != ckpt.config().d {
            return Err(Error::Compatibility(format!(
                "prompt matrix width {} does not match model dimension {}",
                self.matrix.cols(),
                ckpt.config().d
            )));
        }
        Ok(())
    }
}

/// One labeled example: user input tokens and target tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
}

impl TrainingExample {
    pub fn new(input: Vec<usize>, target: Vec<usize>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Usage("training example target is empty".to_string()));
        }
        Ok(TrainingExample { input, target })
    }

    /// Total assembled length for a prompt of length `k`.
    pub fn assembled_len(&self, k: usize) -> usize {
        k + self.input.len() + self.target.len()
    }
}

/// How optimization runs. Defaults mirror the small-model setting:
/// lr 0.01, up to 10 epochs, patience 2 on a seeded 20% validation split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stopping patience in epochs; `None` disables early stopping.
    pub patience: Option<usize>,
    /// Fraction of `data` held out for validation when no explicit
    /// validation set is given.
    pub val_fraction: f64,
    /// Seed for the validation split and per-epoch example order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            max_epochs: 10,
            patience: Some(2),
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Param(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::Param("max_epochs must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Param(format!(
                "val_fraction must be in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

/// Per-epoch record of an optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    /// Present (same length as `train_losses`) when a validation set existed.
    pub val_losses: Option<Vec<f64>>,
    pub stop_reason: StopReason,
    /// Epoch (1-based) whose prompt matrix was kept.
    pub best_epoch: usize,
    /// Not serialized: wall time belongs in the log, not the report.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Extracts the prompt's embedding rows from the frozen table, bit-exact.
/// The positional component is added at forward time, not here.
pub fn init_prompt<T: Scalar>(
    prompt_text: &str,
    ckpt: &ModelCheckpoint<T>,
) -> Result<PromptEmbedding<T>> {
    if prompt_text.is_empty() {
        return Err(Error::Usage("prompt text is empty".to_string()));
    }
    let tokens = ckpt.vocabulary().tokenize(prompt_text)?;
    let matrix = ckpt.token_rows(&tokens)?;
    PromptEmbedding::from_parts(tokens, matrix, ckpt.weights_hash(), TrainMeta::default())
}

/// Assembled training sequence: prompt rows, then input-token rows, then
/// target-token rows (teacher forcing), with position rows added across
/// the whole concatenation.
pub fn assemble_training_input<T: Scalar>(
    p: &PromptEmbedding<T>,
    ex: &TrainingExample,
    ckpt: &ModelCheckpoint<T>,
) -> Result<Tensor2<T>> {
    let total = ex.assembled_len(p.len());
    if total > ckpt.config().max_seq {
        return Err(Error::Capacity {
            needed: total,
            max_seq: ckpt.config().max_seq,
        });
    }
    let mut ids = ex.input.clone();
    ids.extend_from_slice(&ex.target);
    let tail = ckpt.token_rows(&ids)?;
    let rows = Tensor2::concat_rows(&[p.matrix(), &tail])?;
    rows.add(&ckpt.position_rows(total)?)
}

/// A loss node wired for backpropagation into the prompt matrix.
pub struct LossGraph<T> {
    pub tape: GradTape<T>,
    pub loss: ValueId,
    pub prompt_leaf: ValueId,
}

/// Builds the teacher-forced loss for one example on a fresh tape, with
/// `matrix` as the only leaf. Cross-entropy is summed over target
/// positions only; prompt and input positions carry no loss terms.
pub fn example_loss_graph<T: Scalar>(
    matrix: &Tensor2<T>,
    tokens_k: usize,
    ex: &TrainingExample,
    ckpt: &ModelCheckpoint<T>,
) -> Result<LossGraph<T>> {
    let k = tokens_k;
    let n = ex.input.len();
    let t_len = ex.target.len();
    let total = k + n + t_len;
    if total > ckpt.config().max_seq {
        return Err(Error::Capacity {
            needed: total,
            max_seq: ckpt.config().max_seq,
        });
    }

    let mut tape = GradTape::new();
    let prompt_leaf = tape.leaf(matrix.clone());
    let params = ckpt.register_params(&mut tape, false);

    let mut tail_ids = ex.input.clone();
    tail_ids.extend_from_slice(&ex.target);
    let tail = tape.constant(ckpt.token_rows(&tail_ids)?);
    let rows = tape.concat_rows(&[prompt_leaf, tail])?;
    let pos = tape.constant(ckpt.position_rows(total)?);
    let h0 = tape.add(rows, pos)?;

    let nodes = ckpt.forward_on_tape(&mut tape, h0, &params)?;
    // Position k+n-1 predicts target[0]; the last target row predicts nothing.
    let target_logits = tape.slice_rows(nodes.logits, k + n - 1, t_len)?;
    let loss = tape.cross_entropy(target_logits, &ex.target)?;
    Ok(LossGraph {
        tape,
        loss,
        prompt_leaf,
    })
}

/// Loss value for one example under the current prompt matrix.
pub fn example_loss<T: Scalar>(
    p: &PromptEmbedding<T>,
    ex: &TrainingExample,
    ckpt: &ModelCheckpoint<T>,
) -> Result<T> {
    let graph = example_loss_graph(p.matrix(), p.len(), ex, ckpt)?;
    Ok(graph.tape.value(graph.loss)?.at(0, 0))
}

fn mean_loss<T: Scalar>(
    matrix: &Tensor2<T>,
    k: usize,
    data: &[TrainingExample],
    ckpt: &ModelCheckpoint<T>,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let graph = example_loss_graph(matrix, k, ex, ckpt)?;
        total += graph.tape.value(graph.loss)?.at(0, 0).as_f64();
    }
    Ok(total / data.len() as f64)
}

/// Optimizes the prompt matrix with Adam over the labeled examples.
///
/// Batch size is one with a seeded per-epoch example order. When `val` is
/// `None` and `cfg.val_fraction > 0`, a seeded split of `data` is held
/// out. Early stopping tracks validation loss with `cfg.patience`; the
/// matrix of the best validation epoch is returned. Model weights are
/// untouched: the checkpoint is read-only here by construction.
pub fn optimize<T: Scalar>(
    p: &PromptEmbedding<T>,
    data: &[TrainingExample],
    val: Option<&[TrainingExample]>,
    ckpt: &ModelCheckpoint<T>,
    cfg: &TrainConfig,
) -> Result<(PromptEmbedding<T>, TrainReport)> {
    cfg.validate()?;
    p.check_compatible(ckpt)?;
    if data.is_empty() {
        return Err(Error::Usage("training data is empty".to_string()));
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.target.is_empty() {
            return Err(Error::Usage(format!("example {i} has an empty target")));
        }
        let total = ex.assembled_len(p.len());
        if total > ckpt.config().max_seq {
            return Err(Error::Capacity {
                needed: total,
                max_seq: ckpt.config().max_seq,
            });
        }
    }
    let start = Instant::now();

    // Resolve the train/validation partition.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_set, val_set): (Vec<TrainingExample>, Vec<TrainingExample>) = match val {
        Some(v) => (data.to_vec(), v.to_vec()),
        None => {
            let val_n = (data.len() as f64 * cfg.val_fraction).floor() as usize;
            if val_n == 0 || val_n >= data.len() {
                (data.to_vec(), Vec::new())
            } else {
                let mut indices: Vec<usize> = (0..data.len()).collect();
                indices.shuffle(&mut rng);
                let (val_idx, train_idx) = indices.split_at(val_n);
                (
                    train_idx.iter().map(|&i| data[i].clone()).collect(),
                    val_idx.iter().map(|&i| data[i].clone()).collect(),
                )
            }
        }
    };

    let k = p.len();
    let mut matrix = p.matrix().clone();
    let mut adam = Adam::new(T::from_f64(cfg.learning_rate), &[matrix.shape()]);

    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_matrix = matrix.clone();
    let mut stop_reason = StopReason::MaxEpochs;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step_losses = vec![0.0f64; train_set.len()];
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = &train_set[i];
            let graph = example_loss_graph(&matrix, k, ex, ckpt)?;
            let loss_value = graph.tape.value(graph.loss)?.at(0, 0);
            if !loss_value.is_finite() {
                return Err(Error::Divergence { epoch, what: "loss" });
            }
            step_losses[i] = loss_value.as_f64();
            let grads = graph.tape.backward(graph.loss)?;
            let grad = grads
                .get(graph.prompt_leaf)
                .expect("prompt leaf is registered");
            if !grad.all_finite() {
                return Err(Error::Divergence { epoch, what: "gradient" });
            }
            adam.step(&mut [&mut matrix], &[grad]);
        }
        // Aggregate in fixed example order so the mean does not depend on
        // the shuffle (float addition is not associative).
        train_losses.push(step_losses.iter().sum::<f64>() / train_set.len() as f64);

        let epoch_val = if val_set.is_empty() {
            None
        } else {
            let v = mean_loss(&matrix, k, &val_set, ckpt)?;
            if !v.is_finite() {
                return Err(Error::Divergence { epoch, what: "validation loss" });
            }
            val_losses.push(v);
            Some(v)
        };

        // Track the best epoch by validation loss (train loss when there is
        // no validation set), keeping the earliest epoch on exact ties.
        let score = epoch_val.unwrap_or_else(|| *train_losses.last().expect("pushed"));
        if score < best_val {
            best_val = score;
            best_epoch = epoch;
            best_matrix = matrix.clone();
        }

        if let (Some(patience), false) = (cfg.patience, val_set.is_empty()) {
            if epoch - best_epoch > patience {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }

    let final_matrix = if val_set.is_empty() { matrix } else { best_matrix };
    let report = TrainReport {
        stop_reason,
        best_epoch,
        wall_time: start.elapsed(),
        val_losses: if val_set.is_empty() {
            None
        } else {
            Some(val_losses.clone())
        },
        train_losses: train_losses.clone(),
    };
    let meta = TrainMeta {
        learning_rate: cfg.learning_rate,
        epochs_run: report.train_losses.len(),
        final_train_loss: report.train_losses.last().copied(),
        final_val_loss: val_losses.last().copied(),
        seed: cfg.seed,
    };
    let optimized = PromptEmbedding {
        tokens: p.tokens.clone(),
        matrix: final_matrix,
        origin_hash: p.origin_hash,
        meta,
    };
    Ok((optimized, report))
}
