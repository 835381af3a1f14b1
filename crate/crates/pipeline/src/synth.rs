//! Synthetic labelled relevance matrices with a controlled class gap.

use lrp_core::lrp::RelevanceMatrix;
use lrp_core::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::LabeledMatrix;
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_samples: usize,
    /// Fraction of hallucinated samples, in (0, 1).
    pub hallucination_rate: f64,
    /// Mean relevance gap between normal and hallucinated samples.
    pub delta: f64,
    /// `(response_len, prompt_len)` of every matrix.
    pub shape: (usize, usize),
    pub sigma: f64,
    /// Cell mean of normal samples.
    pub base_mean: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 500,
            hallucination_rate: 0.5,
            delta: 0.3,
            shape: (20, 60),
            sigma: 0.1,
            base_mean: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_samples > 0
            && self.hallucination_rate > 0.0
            && self.hallucination_rate < 1.0
            && self.delta >= 0.0
            && self.delta.is_finite()
            && self.shape.0 > 0
            && self.shape.1 > 0
            && self.sigma > 0.0
            && self.sigma.is_finite()
            && self.base_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PipelineError::Config(format!(
                "invalid synthetic corpus spec {self:?}"
            )))
        }
    }

    pub fn hallucinated_count(&self) -> usize {
        (self.hallucination_rate * self.n_samples as f64).round() as usize
    }
}

/// Normal samples draw every cell from N(base_mean, sigma^2), hallucinated ones from
/// N(base_mean - delta, sigma^2); cells are clipped at zero. Exactly
/// `round(rate * n)` samples are hallucinated, at seeded positions.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Vec<LabeledMatrix>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<bool> = (0..spec.n_samples)
        .map(|i| i < spec.hallucinated_count())
        .collect();
    labels.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.sigma).expect("sigma validated");
    let (rows, cols) = spec.shape;
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mean = if label {
                spec.base_mean - spec.delta
            } else {
                spec.base_mean
            };
            let data = (0..rows * cols)
                .map(|_| (mean + noise.sample(&mut rng)).max(0.0))
                .collect();
            Ok(LabeledMatrix {
                id: format!("synth-{i:05}"),
                matrix: RelevanceMatrix::new(Matrix::from_vec(rows, cols, data)?)?,
                label,
            })
        })
        .collect()
}
