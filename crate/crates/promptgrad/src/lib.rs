//! Gradient-based refinement of text prompt embeddings.
//!
//! A natural-language prompt is tokenized and its embedding rows are lifted
//! out of a frozen autoregressive transformer. Those rows — and nothing
//! else — are then trained by gradient descent on labeled examples, and the
//! optimized matrix is concatenated with user queries at inference time.
//! The crate also ships the analysis side: nearest-token anchoring reports,
//! generation-trace entropy, and linear activation probes over the hidden
//! layers.
//!
//! Everything is generic over the scalar type ([`Scalar`]); the aliases
//! below fix the default 64-bit precision that all stated tolerances assume.

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod inference;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod tape;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type; all acceptance tolerances are stated for it.
pub type Real = f64;
/// Dense matrix at default precision.
pub type Tensor = tensor::Tensor2<Real>;
/// Recording tape at default precision.
pub type Tape = tape::GradTape<Real>;
/// Frozen transformer checkpoint at default precision.
pub type Checkpoint = model::ModelCheckpoint<Real>;
/// Trainable prompt matrix at default precision.
pub type Prompt = engine::PromptEmbedding<Real>;
