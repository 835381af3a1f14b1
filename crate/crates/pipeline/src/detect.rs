//! Cross-validated hallucination detection and threshold sweeps.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lrp_core::classifiers::{
    kfold_cv, mean_score, sweep_auc, threshold_sweep, ClassifierMetrics, CvReport, LabeledSample,
    LstmConfig, LstmTrainer, MlpConfig, MlpTrainer, SvmConfig, SvmTrainer, SweepRow, ThresholdGrid,
    ThresholdTrainer, Trainer, DEFAULT_STAR_SHAPE,
};
use lrp_core::stats::FeatureSource;

use crate::dataset::LabeledMatrix;
use crate::error::{PipelineError, Result};
use crate::features::{build_samples, ProfileOptions, DEFAULT_DETECT_L_NEW};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Threshold,
    Svm,
    Mlp,
    Lstm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Threshold => "threshold",
            Method::Svm => "svm",
            Method::Mlp => "mlp",
            Method::Lstm => "lstm",
        }
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(Method::Threshold),
            "svm" => Ok(Method::Svm),
            "mlp" => Ok(Method::Mlp),
            "lstm" => Ok(Method::Lstm),
            other => Err(PipelineError::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub method: Method,
    pub feature: FeatureSource,
    pub l_new: usize,
    pub k: usize,
    pub seed: u64,
    pub star_shape: (usize, usize),
    pub grid: ThresholdGrid,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
    pub lstm: LstmConfig,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            method: Method::Threshold,
            feature: FeatureSource::Response,
            l_new: DEFAULT_DETECT_L_NEW,
            k: 5,
            seed: 0,
            star_shape: DEFAULT_STAR_SHAPE,
            grid: ThresholdGrid::default(),
            svm: SvmConfig::default(),
            mlp: MlpConfig::default(),
            lstm: LstmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectReport {
    pub method: Method,
    pub feature: FeatureSource,
    pub l_new: usize,
    pub cv: CvReport,
}

fn metrics_fields(m: &ClassifierMetrics) -> String {
    format!(
        "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        m.total(),
        m.tp,
        m.fp,
        m.tn,
        m.fn_,
        m.accuracy,
        m.precision,
        m.recall,
        m.f1
    )
}

const METRICS_HEADER: &str = "n,tp,fp,tn,fn,accuracy,precision,recall,f1";

impl DetectReport {
    /// Header `fold,n,tp,fp,tn,fn,accuracy,precision,recall,f1`; the last row is `pooled`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("fold,{METRICS_HEADER}\n");
        for f in &self.cv.folds {
            let _ = writeln!(out, "{},{}", f.fold, metrics_fields(&f.metrics));
        }
        let _ = writeln!(out, "pooled,{}", metrics_fields(&self.cv.pooled));
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "method {} | feature {:?} | L_new {} | {} folds\n",
            self.method.name(),
            self.feature,
            self.l_new,
            self.cv.folds.len()
        );
        let line = |name: &str, m: &ClassifierMetrics| {
            format!(
                "{name:>7}  acc {:6.2}%  prec {:6.2}%  rec {:6.2}%  f1 {:6.2}%  (n={})\n",
                100.0 * m.accuracy,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                m.total()
            )
        };
        for f in &self.cv.folds {
            out += &line(&format!("fold {}", f.fold), &f.metrics);
        }
        out += &line("pooled", &self.cv.pooled);
        out
    }

    /// Writes `<prefix>.csv` and `<prefix>.txt`.
    pub fn write(&self, prefix: &Path) -> Result<()> {
        let csv = prefix.with_extension("csv");
        std::fs::write(&csv, self.to_csv()).map_err(PipelineError::io(&csv))?;
        let txt = prefix.with_extension("txt");
        std::fs::write(&txt, self.to_text()).map_err(PipelineError::io(&txt))
    }
}

fn cv<T: Trainer>(
    samples: &[LabeledSample],
    options: &DetectOptions,
    trainer: &T,
) -> Result<CvReport> {
    Ok(kfold_cv(samples, options.k, trainer, options.seed)?)
}

/// Builds normalised profiles and runs k-fold cross-validation of one detector.
pub fn run_detect(items: &[LabeledMatrix], options: &DetectOptions) -> Result<DetectReport> {
    let mut profile = ProfileOptions::new(options.l_new);
    if options.method == Method::Lstm {
        profile.star_shape = Some(options.star_shape);
    }
    let samples = build_samples(items, &profile)?;
    let feature = options.feature;
    let report = match options.method {
        Method::Threshold => cv(
            &samples,
            options,
            &ThresholdTrainer {
                source: feature,
                grid: options.grid,
            },
        )?,
        Method::Svm => cv(
            &samples,
            options,
            &SvmTrainer {
                source: feature,
                config: options.svm,
            },
        )?,
        Method::Mlp => cv(
            &samples,
            options,
            &MlpTrainer {
                source: feature,
                config: options.mlp,
            },
        )?,
        Method::Lstm => cv(
            &samples,
            options,
            &LstmTrainer {
                config: options.lstm,
            },
        )?,
    };
    Ok(DetectReport {
        method: options.method,
        feature,
        l_new: options.l_new,
        cv: report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub auc: f64,
}

impl SweepReport {
    /// Header `t,n,tp,fp,tn,fn,accuracy,precision,recall,f1`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{METRICS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:.4},{}", r.t, metrics_fields(&r.metrics));
        }
        out
    }

    pub fn best(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if b.metrics.accuracy >= r.metrics.accuracy => Some(b),
                _ => Some(r),
            })
    }
}

/// Threshold sweep over per-sample mean scores of one relevance view.
pub fn run_sweep(
    items: &[LabeledMatrix],
    feature: FeatureSource,
    l_new: usize,
    grid: &ThresholdGrid,
) -> Result<SweepReport> {
    let samples = build_samples(items, &ProfileOptions::new(l_new))?;
    let scores = samples
        .iter()
        .map(|s| mean_score(&s.features, feature))
        .collect::<lrp_core::Result<Vec<_>>>()?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let rows = threshold_sweep(&scores, &labels, grid)?;
    Ok(SweepReport {
        auc: sweep_auc(&rows),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lrp_core::classifiers::FoldResult;

    fn report() -> DetectReport {
        // One of each outcome: every rate is one half.
        let m = ClassifierMetrics::from_counts(1, 1, 1, 1);
        DetectReport {
            method: Method::Svm,
            feature: FeatureSource::Prompt,
            l_new: 10,
            cv: CvReport {
                folds: vec![FoldResult {
                    fold: 0,
                    test_indices: vec![0, 1, 2, 3],
                    predictions: vec![true, true, false, false],
                    metrics: m,
                }],
                pooled: m,
            },
        }
    }

    #[test]
    fn csv_and_text_layout() {
        let r = report();
        assert_eq!(
            r.to_csv(),
            "fold,n,tp,fp,tn,fn,accuracy,precision,recall,f1\n\
             0,4,1,1,1,1,0.500000,0.500000,0.500000,0.500000\n\
             pooled,4,1,1,1,1,0.500000,0.500000,0.500000,0.500000\n"
        );
        let text = r.to_text();
        assert!(text.starts_with("method svm | feature Prompt | L_new 10 | 1 folds\n"));
        assert!(text.contains(" pooled  acc  50.00%  prec  50.00%  rec  50.00%  f1  50.00%  (n=4)"));
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::Threshold, Method::Svm, Method::Mlp, Method::Lstm] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("forest".parse::<Method>().is_err());
    }
}
