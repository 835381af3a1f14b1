//! Turns labelled relevance matrices into classifier-ready samples.

use lrp_core::classifiers::LabeledSample;
use lrp_core::stats::{ClipNormalizer, ProfileNormalizer, RelevanceProfile};

use crate::dataset::LabeledMatrix;
use crate::error::{PipelineError, Result};

/// Resample length for classifier features.
pub const DEFAULT_DETECT_L_NEW: usize = 220;
/// Resample length for figure data and statistics.
pub const DEFAULT_FIGURE_L_NEW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub l_new: usize,
    /// Fixed `(steps, features)` copy of the matrix, for sequence models.
    pub star_shape: Option<(usize, usize)>,
    pub lo_pct: f64,
    pub hi_pct: f64,
}

impl ProfileOptions {
    pub fn new(l_new: usize) -> Self {
        Self {
            l_new,
            star_shape: None,
            lo_pct: ClipNormalizer::DEFAULT_LO_PCT,
            hi_pct: ClipNormalizer::DEFAULT_HI_PCT,
        }
    }
}

/// Resamples every matrix, then clip-normalises each view with percentiles pooled
/// over the whole corpus so that level differences between samples survive.
pub fn build_samples(
    items: &[LabeledMatrix],
    options: &ProfileOptions,
) -> Result<Vec<LabeledSample>> {
    if items.is_empty() {
        return Err(PipelineError::Config(
            "no samples to build features from".into(),
        ));
    }
    let profiles = items
        .iter()
        .map(|item| RelevanceProfile::resampled(&item.matrix, options.l_new, options.star_shape))
        .collect::<lrp_core::Result<Vec<_>>>()?;
    let normalizer = ProfileNormalizer::fit(&profiles, options.lo_pct, options.hi_pct)?;
    Ok(items
        .iter()
        .zip(&profiles)
        .map(|(item, profile)| LabeledSample {
            id: item.id.clone(),
            features: normalizer.apply(profile),
            label: item.label,
        })
        .collect())
}
