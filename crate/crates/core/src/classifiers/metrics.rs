use crate::error::{Error, Result};

/// Confusion counts and the derived scores; "positive" means hallucinated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassifierMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassifierMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// False positive rate; zero when there are no negatives.
    pub fn fpr(&self) -> f64 {
        let neg = self.fp + self.tn;
        if neg == 0 {
            0.0
        } else {
            self.fp as f64 / neg as f64
        }
    }
}

pub fn compute_metrics(preds: &[bool], labels: &[bool]) -> Result<ClassifierMetrics> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    if preds.is_empty() {
        return Err(Error::Size("no predictions to score".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassifierMetrics::from_counts(tp, fp, tn, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions() {
        let l = [true, false, true, false, false];
        let m = compute_metrics(&l, &l).unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn one_of_each_cell() {
        let m = compute_metrics(&[true, true, false, false], &[true, false, false, true]).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (1, 1, 1, 1));
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (0.5, 0.5, 0.5, 0.5)
        );
    }

    #[test]
    fn all_negative_predictions() {
        let m = compute_metrics(&[false; 4], &[true, false, true, false]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn bad_inputs() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[true], &[true, false]).is_err());
    }

    #[test]
    fn identities_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..40);
            let preds: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let m = compute_metrics(&preds, &labels).unwrap();
            assert_eq!(m.total(), n);
            assert!((m.accuracy - (m.tp + m.tn) as f64 / n as f64).abs() < 1e-15);
            let p_r = m.precision + m.recall;
            let f1 = if p_r > 0.0 {
                2.0 * m.precision * m.recall / p_r
            } else {
                0.0
            };
            assert!((m.f1 - f1).abs() < 1e-15);
            for s in [m.accuracy, m.precision, m.recall, m.f1] {
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
