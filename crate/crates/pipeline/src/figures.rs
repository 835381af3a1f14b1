//! CSV data behind the distribution figures: box plots, per-position lines and
//! class-mean heatmaps.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lrp_core::classifiers::{mean_score, LabeledSample};
use lrp_core::stats::FeatureSource;
use lrp_core::Matrix;

use crate::dataset::LabeledMatrix;
use crate::error::{PipelineError, Result};
use crate::features::{build_samples, ProfileOptions, DEFAULT_FIGURE_L_NEW};
use crate::utest::statistic_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Box,
    Line,
    Heatmap,
}

impl FromStr for FigureKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(FigureKind::Box),
            "line" => Ok(FigureKind::Line),
            "heatmap" => Ok(FigureKind::Heatmap),
            other => Err(PipelineError::Config(format!(
                "unknown figure kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureOptions {
    pub l_new: usize,
    pub heatmap_shape: (usize, usize),
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            l_new: DEFAULT_FIGURE_L_NEW,
            heatmap_shape: (32, 64),
        }
    }
}

const CLASSES: [(bool, &str); 2] = [(true, "hallucinated"), (false, "normal")];
const STATISTICS: [FeatureSource; 2] = [FeatureSource::Prompt, FeatureSource::Response];

/// Quantile by linear interpolation between order statistics; `sorted` is non-empty.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values inside the 1.5 IQR fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s
        .iter()
        .copied()
        .filter(|v| (lo_fence..=hi_fence).contains(v))
        .collect();
    Some(BoxStats {
        n: s.len(),
        min: s[0],
        q1,
        median: quantile(&s, 0.5),
        q3,
        max: s[s.len() - 1],
        whisker_low: inside[0],
        whisker_high: inside[inside.len() - 1],
        outliers: s
            .iter()
            .copied()
            .filter(|v| !(lo_fence..=hi_fence).contains(v))
            .collect(),
    })
}

fn box_csv(samples: &[LabeledSample]) -> Result<String> {
    let mut out =
        String::from("class,statistic,n,min,q1,median,q3,max,whisker_low,whisker_high,outliers\n");
    for (label, class) in CLASSES {
        for stat in STATISTICS {
            let scores = samples
                .iter()
                .filter(|s| s.label == label)
                .map(|s| mean_score(&s.features, stat))
                .collect::<lrp_core::Result<Vec<_>>>()?;
            let Some(b) = box_stats(&scores) else {
                continue;
            };
            let outliers: Vec<String> = b.outliers.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(
                out,
                "{class},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                statistic_name(stat),
                b.n,
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max,
                b.whisker_low,
                b.whisker_high,
                outliers.join(";")
            );
        }
    }
    Ok(out)
}

fn class_mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter().map(|a| a / vectors.len() as f64).collect()
}

fn line_csv(samples: &[LabeledSample]) -> String {
    let mut out = String::from("position,class,prompt_mean,response_mean\n");
    for (label, class) in CLASSES {
        let members: Vec<&LabeledSample> = samples.iter().filter(|s| s.label == label).collect();
        if members.is_empty() {
            continue;
        }
        let prompt = class_mean(
            &members
                .iter()
                .map(|s| s.features.r_prompt.clone())
                .collect::<Vec<_>>(),
        );
        let response = class_mean(
            &members
                .iter()
                .map(|s| s.features.r_response.clone())
                .collect::<Vec<_>>(),
        );
        for (i, (p, r)) in prompt.iter().zip(&response).enumerate() {
            let _ = writeln!(out, "{i},{class},{p:.6},{r:.6}");
        }
    }
    out
}

/// Class-mean resampled matrices, keyed by class.
pub fn class_mean_matrices(samples: &[LabeledSample]) -> Vec<(bool, Matrix)> {
    CLASSES
        .iter()
        .filter_map(|&(label, _)| {
            let mats: Vec<Vec<f64>> = samples
                .iter()
                .filter(|s| s.label == label)
                .filter_map(|s| s.features.r_star_resampled.as_ref())
                .map(|m| m.data().to_vec())
                .collect();
            let shape = samples
                .iter()
                .find_map(|s| s.features.r_star_resampled.as_ref())?
                .shape();
            (!mats.is_empty()).then(|| {
                (
                    label,
                    Matrix::from_vec(shape.0, shape.1, class_mean(&mats))
                        .expect("shape of the resampled matrices"),
                )
            })
        })
        .collect()
}

fn heatmap_csv(samples: &[LabeledSample]) -> String {
    let mut out = String::from("class,row,col,value\n");
    for (label, m) in class_mean_matrices(samples) {
        let class = if label { "hallucinated" } else { "normal" };
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let _ = writeln!(out, "{class},{i},{j},{:.6}", m[(i, j)]);
            }
        }
    }
    out
}

/// Figure data as CSV text.
pub fn figure_csv(
    kind: FigureKind,
    items: &[LabeledMatrix],
    options: &FigureOptions,
) -> Result<String> {
    let mut profile = ProfileOptions::new(options.l_new);
    if kind == FigureKind::Heatmap {
        profile.star_shape = Some(options.heatmap_shape);
    }
    let samples = build_samples(items, &profile)?;
    match kind {
        FigureKind::Box => box_csv(&samples),
        FigureKind::Line => Ok(line_csv(&samples)),
        FigureKind::Heatmap => Ok(heatmap_csv(&samples)),
    }
}

pub fn emit_figure_csv(
    kind: FigureKind,
    items: &[LabeledMatrix],
    path: &Path,
    options: &FigureOptions,
) -> Result<()> {
    let csv = figure_csv(kind, items, options)?;
    std::fs::write(path, csv).map_err(PipelineError::io(path))
}
