//! Reductions of the relevance matrix and the distribution tests run on them.

mod mann_whitney;
mod normalize;
mod profile;
mod resample;

pub use mann_whitney::{
    exact_p_value, mann_whitney_u, normal_p_value, rank_sum_u, repeated_subsample_utest,
    MannWhitney, PValueMethod, SubsampleResult, EXACT_LIMIT,
};
pub use normalize::{clip_normalize, percentile_nearest_rank, ClipNormalizer, ProfileNormalizer};
pub use profile::{prompt_relevance, response_relevance, FeatureSource, RelevanceProfile};
pub use resample::{resample_1d, resample_2d};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}
