use super::{
    compute_metrics, require_both_classes, Classifier, ClassifierMetrics, LabeledSample, Trainer,
};
use crate::error::{Error, Result};
use crate::stats::{mean, FeatureSource, RelevanceProfile};

/// Mean of the selected relevance vector.
pub fn mean_score(profile: &RelevanceProfile, source: FeatureSource) -> Result<f64> {
    let v = profile.features(source);
    if v.is_empty() {
        return Err(Error::Size(
            "mean_score of an empty relevance vector".into(),
        ));
    }
    Ok(mean(&v))
}

/// Low relevance means hallucination: positive iff `score <= t`.
pub fn threshold_classify(score: f64, t: f64) -> bool {
    score <= t
}

/// Inclusive grid `start, start + step, ..., <= stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 1.0,
            step: 0.01,
        }
    }
}

impl ThresholdGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let ok = [self.start, self.stop, self.step]
            .iter()
            .all(|v| v.is_finite())
            && self.step > 0.0
            && self.stop >= self.start;
        if !ok {
            return Err(Error::Config(format!("invalid threshold grid {self:?}")));
        }
        // Index-based so that accumulated rounding never drops the last point.
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub metrics: ClassifierMetrics,
}

pub fn threshold_sweep(
    scores: &[f64],
    labels: &[bool],
    grid: &ThresholdGrid,
) -> Result<Vec<SweepRow>> {
    grid.points()?
        .into_iter()
        .map(|t| {
            let preds: Vec<bool> = scores.iter().map(|&s| threshold_classify(s, t)).collect();
            Ok(SweepRow {
                t,
                metrics: compute_metrics(&preds, labels)?,
            })
        })
        .collect()
}

/// Area under the ROC curve traced by a sweep, closed with (0,0) and (1,1), by trapezoids.
pub fn sweep_auc(rows: &[SweepRow]) -> f64 {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.metrics.fpr(), r.metrics.recall))
        .collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdModel {
    pub source: FeatureSource,
    pub t: f64,
}

impl Classifier for ThresholdModel {
    fn predict(&self, sample: &LabeledSample) -> Result<bool> {
        Ok(threshold_classify(
            mean_score(&sample.features, self.source)?,
            self.t,
        ))
    }
}

/// Picks the grid threshold with the best training accuracy (lowest `t` on ties).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThresholdTrainer {
    pub source: FeatureSource,
    pub grid: ThresholdGrid,
}

impl Trainer for ThresholdTrainer {
    type Model = ThresholdModel;

    fn train(&self, samples: &[LabeledSample], _seed: u64) -> Result<ThresholdModel> {
        require_both_classes(samples)?;
        let scores = samples
            .iter()
            .map(|s| mean_score(&s.features, self.source))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        let rows = threshold_sweep(&scores, &labels, &self.grid)?;
        let best = rows
            .iter()
            .fold(None::<&SweepRow>, |best, r| match best {
                Some(b) if b.metrics.accuracy >= r.metrics.accuracy => Some(b),
                _ => Some(r),
            })
            .expect("grid is non-empty");
        Ok(ThresholdModel {
            source: self.source,
            t: best.t,
        })
    }
}
