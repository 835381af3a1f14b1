//! A small pre-LayerNorm decoder-only transformer with a fully traced forward pass.
//!
//! The model exists to give the relevance engine something real to walk: every
//! matrix product, projection and non-parameter layer of a generation step is
//! recorded in a [`ForwardTrace`].

mod model;
mod params;
mod prompt;
mod tokenizer;
mod trace;

pub use model::{argmax, Generation, Transformer};
pub use params::{LayerParams, TransformerConfig, TransformerParams, PARAMS_MAGIC, PARAMS_VERSION};
pub use prompt::{assemble_prompt, AssembledPrompt, PromptParts, Segment, TemplatePiece};
pub use tokenizer::ByteTokenizer;
pub use trace::{ForwardTrace, TensorId, TraceBuilder, TraceEntry};

/// Finite stand-in for `-inf` on causally masked attention logits.
pub const MASK_VALUE: f64 = -1e9;

/// Token id type used throughout the model.
pub type TokenId = u32;
