use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{compute_metrics, Classifier, ClassifierMetrics, LabeledSample, Trainer};
use crate::error::{Error, Result};

/// Seeded shuffle of `0..n` cut into `k` contiguous folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Size(format!("{n} samples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|f| idx[f * n / k..(f + 1) * n / k].to_vec())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub predictions: Vec<bool>,
    pub metrics: ClassifierMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Metrics over all held-out predictions together.
    pub pooled: ClassifierMetrics,
}

impl CvReport {
    /// Held-out prediction for every sample, indexed like the input.
    pub fn predictions(&self) -> Vec<bool> {
        let n = self.folds.iter().map(|f| f.test_indices.len()).sum();
        let mut out = vec![false; n];
        for f in &self.folds {
            for (&i, &p) in f.test_indices.iter().zip(&f.predictions) {
                out[i] = p;
            }
        }
        out
    }
}

/// Trains on every fold's complement and scores the held-out fold. Fold `f` trains
/// with seed `seed + f + 1`.
pub fn kfold_cv<T: Trainer>(
    samples: &[LabeledSample],
    k: usize,
    trainer: &T,
    seed: u64,
) -> Result<CvReport> {
    let folds = kfold_indices(samples.len(), k, seed)?;
    let mut results = Vec::with_capacity(k);
    let (mut all_preds, mut all_labels) = (Vec::new(), Vec::new());
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<LabeledSample> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| samples[i].clone()))
            .collect();
        let model = trainer.train(&train, seed.wrapping_add(f as u64 + 1))?;
        let predictions = test
            .iter()
            .map(|&i| model.predict(&samples[i]))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = test.iter().map(|&i| samples[i].label).collect();
        let metrics = compute_metrics(&predictions, &labels)?;
        all_preds.extend_from_slice(&predictions);
        all_labels.extend(labels);
        results.push(FoldResult {
            fold: f,
            test_indices: test.clone(),
            predictions,
            metrics,
        });
    }
    Ok(CvReport {
        folds: results,
        pooled: compute_metrics(&all_preds, &all_labels)?,
    })
}
