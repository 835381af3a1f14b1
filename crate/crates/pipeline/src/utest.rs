//! Repeated-subsample Mann-Whitney comparison of the two classes.

use std::fmt::Write as _;

use lrp_core::classifiers::mean_score;
use lrp_core::stats::{mean, repeated_subsample_utest, FeatureSource};

use crate::dataset::LabeledMatrix;
use crate::error::{PipelineError, Result};
use crate::features::{build_samples, ProfileOptions, DEFAULT_FIGURE_L_NEW};

#[derive(Debug, Clone, PartialEq)]
pub struct UtestOptions {
    /// Samples drawn from each class per repetition.
    pub n: usize,
    pub iters: usize,
    pub seed: u64,
    pub statistics: Vec<FeatureSource>,
    pub l_new: usize,
}

impl Default for UtestOptions {
    fn default() -> Self {
        Self {
            n: 200,
            iters: 200,
            seed: 0,
            statistics: vec![FeatureSource::Prompt, FeatureSource::Response],
            l_new: DEFAULT_FIGURE_L_NEW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtestRow {
    pub statistic: FeatureSource,
    pub median_p: f64,
    pub mean_hallucinated: f64,
    pub mean_normal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtestReport {
    pub n: usize,
    pub iters: usize,
    pub rows: Vec<UtestRow>,
}

impl UtestReport {
    /// Header `statistic,n,iters,median_p,mean_hallucinated,mean_normal`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,n,iters,median_p,mean_hallucinated,mean_normal\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.6e},{:.6},{:.6}",
                statistic_name(r.statistic),
                self.n,
                self.iters,
                r.median_p,
                r.mean_hallucinated,
                r.mean_normal
            );
        }
        out
    }
}

pub(crate) fn statistic_name(s: FeatureSource) -> &'static str {
    match s {
        FeatureSource::Prompt => "prompt",
        FeatureSource::Response => "response",
        FeatureSource::Concat => "concat",
    }
}

/// Compares the per-sample mean relevance of hallucinated and normal samples.
pub fn run_utest(items: &[LabeledMatrix], options: &UtestOptions) -> Result<UtestReport> {
    let samples = build_samples(items, &ProfileOptions::new(options.l_new))?;
    let mut rows = Vec::new();
    for &statistic in &options.statistics {
        let (mut hallucinated, mut normal) = (Vec::new(), Vec::new());
        for s in &samples {
            let score = mean_score(&s.features, statistic)?;
            if s.label {
                hallucinated.push(score);
            } else {
                normal.push(score);
            }
        }
        if hallucinated.len() < options.n || normal.len() < options.n {
            return Err(PipelineError::Config(format!(
                "U test draws {} per class but there are {} hallucinated and {} normal samples",
                options.n,
                hallucinated.len(),
                normal.len()
            )));
        }
        let result = repeated_subsample_utest(
            &hallucinated,
            &normal,
            options.n,
            options.iters,
            options.seed,
        )?;
        rows.push(UtestRow {
            statistic,
            median_p: result.median_p,
            mean_hallucinated: mean(&hallucinated),
            mean_normal: mean(&normal),
        });
    }
    Ok(UtestReport {
        n: options.n,
        iters: options.iters,
        rows,
    })
}
