use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_dim, feature_matrix, require_both_classes, Classifier, LabeledSample, Trainer};
use crate::error::{Error, Result};
use crate::stats::FeatureSource;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// RBF width; `None` picks `1 / (dim * var)` from the training features.
    pub gamma: Option<f64>,
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub source: FeatureSource,
    pub gamma: f64,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    pub converged: bool,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(self.gamma, s, x))
            .sum::<f64>()
            - self.rho
    }

    pub fn predict_features(&self, x: &[f64]) -> Result<bool> {
        if let Some(s) = self.support.first() {
            if s.len() != x.len() {
                return Err(Error::shape(
                    "svm predict",
                    format!("expected {} features, got {}", s.len(), x.len()),
                ));
            }
        }
        Ok(self.decision(x) > 0.0)
    }
}

impl Classifier for SvmModel {
    fn predict(&self, sample: &LabeledSample) -> Result<bool> {
        self.predict_features(&sample.features.features(self.source))
    }
}

fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let values: Vec<f64> = x.iter().flatten().copied().collect();
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    if var > 0.0 {
        1.0 / (x[0].len() as f64 * var)
    } else {
        1.0
    }
}

/// Soft-margin RBF SVM fit by SMO with second-order working-set selection.
///
/// The seed fixes the order in which candidates are scanned, which decides ties
/// between equally violating pairs.
pub fn train_svm_rbf(
    x: &[Vec<f64>],
    labels: &[bool],
    config: &SvmConfig,
    seed: u64,
) -> Result<SvmModel> {
    if x.len() != labels.len() {
        return Err(Error::shape(
            "train_svm_rbf",
            "feature and label counts differ",
        ));
    }
    if x.len() < 2 || labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Training(
            "SVM needs at least one sample of each class".into(),
        ));
    }
    check_dim(x, x[0].len())?;
    if config.c.is_nan() || config.c <= 0.0 || config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::Config("SVM needs C > 0 and tol > 0".into()));
    }
    let gamma = match config.gamma {
        Some(g) if g > 0.0 && g.is_finite() => g,
        Some(g) => return Err(Error::Config(format!("invalid RBF gamma {g}"))),
        None => default_gamma(x),
    };

    let n = x.len();
    let c = config.c;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(gamma, &x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut gap = f64::INFINITY;
    let mut converged = false;
    for _ in 0..config.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in &order {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        if let Some(i) = i_sel {
            for &t in &order {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                let b = gmax + y[t] * grad[t];
                if b > 0.0 {
                    let a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                    let obj = -b * b / if a > 0.0 { a } else { TAU };
                    if obj < best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        gap = gmax + gmax2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            converged = true;
            break;
        };
        if gap < config.tol {
            converged = true;
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let a = k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j];
            if a > 0.0 {
                a
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from the free vectors, or the middle of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (ub + lb) / 2.0
    };

    let (support, coef) = (0..n)
        .filter(|&t| alpha[t] > 0.0)
        .map(|t| (x[t].clone(), alpha[t] * y[t]))
        .unzip();
    Ok(SvmModel {
        source: FeatureSource::default(),
        gamma,
        support,
        coef,
        rho,
        kkt_gap: gap,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvmTrainer {
    pub source: FeatureSource,
    pub config: SvmConfig,
}

impl Trainer for SvmTrainer {
    type Model = SvmModel;

    fn train(&self, samples: &[LabeledSample], seed: u64) -> Result<SvmModel> {
        require_both_classes(samples)?;
        let x = feature_matrix(samples, self.source)?;
        let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
        let mut model = train_svm_rbf(&x, &labels, &self.config, seed)?;
        model.source = self.source;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn xor() -> (Vec<Vec<f64>>, Vec<bool>) {
        (
            vec![
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
            ],
            vec![false, false, true, true],
        )
    }

    #[test]
    fn separates_xor() {
        let (x, y) = xor();
        let cfg = SvmConfig {
            gamma: Some(1.0),
            c: 10.0,
            ..Default::default()
        };
        let m = train_svm_rbf(&x, &y, &cfg, 0).unwrap();
        assert!(m.converged && m.kkt_gap <= 1e-3);
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict_features(xi).unwrap(), yi);
        }
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![false, true];
        let cfg = SvmConfig {
            gamma: Some(1.0),
            c: 100.0,
            ..Default::default()
        };
        let m = train_svm_rbf(&x, &y, &cfg, 4).unwrap();
        assert!(m.decision(&[0.5]).abs() < 1e-3);
        assert!(m.decision(&[0.45]) < 0.0 && m.decision(&[0.55]) > 0.0);
        // Hard-margin fit interpolates its own training labels.
        assert!(!m.predict_features(&[0.0]).unwrap());
        assert!(m.predict_features(&[1.0]).unwrap());
    }

    #[test]
    fn single_class_fails() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_svm_rbf(&x, &[true, true], &SvmConfig::default(), 0),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn converges_and_is_deterministic_on_noisy_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.6).unwrap();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..120 {
            let label: bool = rng.random();
            let centre = if label { 1.0 } else { -1.0 };
            x.push(vec![
                centre + noise.sample(&mut rng),
                noise.sample(&mut rng),
            ]);
            y.push(label);
        }
        for seed in [0, 1, 2] {
            let m = train_svm_rbf(&x, &y, &SvmConfig::default(), seed).unwrap();
            assert!(m.converged && m.kkt_gap <= 1e-3, "gap {}", m.kkt_gap);
            let acc = x
                .iter()
                .zip(&y)
                .filter(|(xi, &yi)| m.predict_features(xi).unwrap() == yi)
                .count();
            assert!(acc as f64 / 120.0 > 0.85);
            assert_eq!(
                m,
                train_svm_rbf(&x, &y, &SvmConfig::default(), seed).unwrap()
            );
        }
    }

    #[test]
    fn default_gamma_scales_with_variance() {
        let x = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        // Pooled variance 1, dim 2.
        assert_eq!(default_gamma(&x), 0.5);
        assert_eq!(default_gamma(&[vec![3.0], vec![3.0]]), 1.0);
    }
}
