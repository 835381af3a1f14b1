//! Token-level relevance attribution for retrieval-augmented generation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, the non-parameter layer zoo and their exact Jacobians.
//! - [`transformer`]: a small decoder-only transformer whose forward pass records a full
//!   operation trace.
//! - [`lrp`]: walks a trace backwards with the MatMul / Linear / Jacobian rules and
//!   assembles the response-by-prompt relevance matrix.
//! - [`stats`]: prompt/response relevance profiles, mean resampling, clip-normalisation
//!   and Mann-Whitney U testing.
//! - [`classifiers`]: threshold, RBF-SVM, MLP and LSTM hallucination detectors with
//!   metrics and k-fold cross-validation.

pub mod classifiers;
pub mod error;
pub mod lrp;
pub mod numerics;
pub mod stats;
pub mod transformer;

pub use error::{Error, Result};
pub use numerics::{Matrix, OpKind};
