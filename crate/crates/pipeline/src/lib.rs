//! End-to-end pipeline around `lrp-core`: corpus ingestion, relevance extraction,
//! matrix files, synthetic corpora, detection, statistics and figure data.

pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod features;
pub mod figures;
pub mod matrix_io;
pub mod relevance;
pub mod synth;
pub mod utest;

pub use error::{PipelineError, Result};
