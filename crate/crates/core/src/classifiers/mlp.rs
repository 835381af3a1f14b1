use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_dim, feature_matrix, require_both_classes, Classifier, LabeledSample, Trainer};
use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid};
use crate::stats::FeatureSource;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 500,
            lr: 0.5,
        }
    }
}

/// Binary cross-entropy of a logit, computed without overflow.
pub(crate) fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// One tanh hidden layer and a sigmoid output unit.
///
/// Parameters are stored flat: `w1` (hidden x dim, row-major), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub source: FeatureSource,
    pub dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl MlpModel {
    pub fn param_count(dim: usize, hidden: usize) -> usize {
        hidden * dim + 2 * hidden + 1
    }

    pub fn seeded(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_count(dim, hidden)];
        let a1 = 1.0 / (dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        for w in &mut params[..hidden * dim] {
            *w = rng.random_range(-a1..a1);
        }
        let w2 = hidden * dim + hidden;
        for w in &mut params[w2..w2 + hidden] {
            *w = rng.random_range(-a2..a2);
        }
        Self {
            source: FeatureSource::default(),
            dim,
            hidden,
            params,
        }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (w1, rest) = self.params.split_at(self.hidden * self.dim);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.hidden);
        (w1, b1, w2, b2[0])
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let (w1, b1, _, _) = self.split();
        (0..self.hidden)
            .map(|k| (dot(&w1[k * self.dim..(k + 1) * self.dim], x) + b1[k]).tanh())
            .collect()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let (_, _, w2, b2) = self.split();
        dot(w2, &self.hidden_activations(x)) + b2
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean binary cross-entropy over a batch.
    pub fn loss(&self, x: &[Vec<f64>], y: &[bool]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(xi, &yi)| bce_with_logit(self.logit(xi), f64::from(u8::from(yi))))
            .sum::<f64>()
            / x.len() as f64
    }

    /// Gradient of [`MlpModel::loss`] in the flat parameter layout.
    pub fn gradient(&self, x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
        let (_, _, w2, _) = self.split();
        let (d, h) = (self.dim, self.hidden);
        let mut g = vec![0.0; self.params.len()];
        let scale = 1.0 / x.len() as f64;
        for (xi, &yi) in x.iter().zip(y) {
            let a = self.hidden_activations(xi);
            let dz = (sigmoid(dot(w2, &a) + self.split().3) - f64::from(u8::from(yi))) * scale;
            for k in 0..h {
                g[h * d + h + k] += dz * a[k];
                let dpre = dz * w2[k] * (1.0 - a[k] * a[k]);
                g[h * d + k] += dpre;
                for (gw, &xv) in g[k * d..(k + 1) * d].iter_mut().zip(xi) {
                    *gw += dpre * xv;
                }
            }
            g[h * d + 2 * h] += dz;
        }
        g
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.dim {
            return Err(Error::shape(
                "mlp predict",
                format!("expected {} features, got {}", self.dim, x.len()),
            ));
        }
        Ok(self.probability(x) >= 0.5)
    }
}

impl Classifier for MlpModel {
    fn predict(&self, sample: &LabeledSample) -> Result<bool> {
        self.predict_features(&sample.features.features(self.source))
    }
}

/// Full-batch gradient descent on mean cross-entropy from a seeded initialisation.
pub fn train_mlp(
    x: &[Vec<f64>],
    labels: &[bool],
    config: &MlpConfig,
    seed: u64,
) -> Result<MlpModel> {
    if x.len() != labels.len() {
        return Err(Error::shape("train_mlp", "feature and label counts differ"));
    }
    if x.len() < 2 || labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Training(
            "MLP needs at least one sample of each class".into(),
        ));
    }
    if config.hidden == 0 || config.lr.is_nan() || config.lr <= 0.0 {
        return Err(Error::Config("MLP needs hidden >= 1 and lr > 0".into()));
    }
    check_dim(x, x[0].len())?;
    let mut model = MlpModel::seeded(x[0].len(), config.hidden, seed);
    for _ in 0..config.epochs {
        let g = model.gradient(x, labels);
        for (p, gi) in model.params.iter_mut().zip(g) {
            *p -= config.lr * gi;
        }
    }
    if !model.params.iter().all(|p| p.is_finite()) {
        return Err(Error::Training("MLP parameters diverged".into()));
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MlpTrainer {
    pub source: FeatureSource,
    pub config: MlpConfig,
}

impl Trainer for MlpTrainer {
    type Model = MlpModel;

    fn train(&self, samples: &[LabeledSample], seed: u64) -> Result<MlpModel> {
        require_both_classes(samples)?;
        let x = feature_matrix(samples, self.source)?;
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        let mut model = train_mlp(&x, &labels, &self.config, seed)?;
        model.source = self.source;
        Ok(model)
    }
}
