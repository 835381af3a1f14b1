//! Hallucination detectors over relevance profiles.
//!
//! Every detector comes as a [`Trainer`] producing a [`Classifier`]; [`kfold_cv`] runs
//! any trainer under k-fold cross-validation. A positive prediction means
//! "hallucinated".

mod cv;
mod lstm;
mod metrics;
mod mlp;
mod persistence;
mod svm;
mod threshold;

pub use cv::{kfold_cv, kfold_indices, CvReport, FoldResult};
pub use lstm::{
    lstm_step, train_lstm, LstmConfig, LstmLayer, LstmModel, LstmParams, LstmTrainer,
    DEFAULT_STAR_SHAPE,
};
pub use metrics::{compute_metrics, ClassifierMetrics};
pub use mlp::{train_mlp, MlpConfig, MlpModel, MlpTrainer};
pub use persistence::{Model, MODEL_MAGIC, MODEL_VERSION};
pub use svm::{train_svm_rbf, SvmConfig, SvmModel, SvmTrainer};
pub use threshold::{
    mean_score, sweep_auc, threshold_classify, threshold_sweep, SweepRow, ThresholdGrid,
    ThresholdModel, ThresholdTrainer,
};

use crate::error::{Error, Result};
use crate::stats::{FeatureSource, RelevanceProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: RelevanceProfile,
    /// `true` = hallucinated.
    pub label: bool,
}

pub trait Classifier {
    fn predict(&self, sample: &LabeledSample) -> Result<bool>;
}

pub trait Trainer {
    type Model: Classifier;

    fn train(&self, samples: &[LabeledSample], seed: u64) -> Result<Self::Model>;
}

/// Fails unless both labels occur in `samples`.
pub(crate) fn require_both_classes(samples: &[LabeledSample]) -> Result<()> {
    let positives = samples.iter().filter(|s| s.label).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::Training(format!(
            "training set of {} samples has a single class",
            samples.len()
        )));
    }
    Ok(())
}

/// Feature vectors of `samples`, checked for equal length.
pub(crate) fn feature_matrix(
    samples: &[LabeledSample],
    source: FeatureSource,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.features.features(source))
        .collect();
    check_dim(&rows, rows.first().map_or(0, Vec::len))?;
    Ok(rows)
}

pub(crate) fn check_dim(rows: &[Vec<f64>], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::shape("features", "empty feature vector"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::shape(
            "features",
            format!("expected length {dim}, found {}", bad.len()),
        ));
    }
    Ok(())
}
