use super::profile::RelevanceProfile;
use crate::error::{Error, Result};

/// Nearest-rank percentile: the smallest value with at least `pct` percent of the
/// data at or below it.
pub fn percentile_nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Winsorising min-max map fitted on one set of values and applicable to others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipNormalizer {
    pub lo: f64,
    pub hi: f64,
}

impl ClipNormalizer {
    pub const DEFAULT_LO_PCT: f64 = 1.0;
    pub const DEFAULT_HI_PCT: f64 = 99.0;

    pub fn fit(values: &[f64], lo_pct: f64, hi_pct: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Size("cannot fit a normaliser on no values".into()));
        }
        if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct > hi_pct {
            return Err(Error::Config(format!(
                "percentiles {lo_pct}/{hi_pct} must satisfy 0 <= lo <= hi <= 100"
            )));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            lo: percentile_nearest_rank(&sorted, lo_pct),
            hi: percentile_nearest_rank(&sorted, hi_pct),
        })
    }

    /// Clamps to `[lo, hi]` and maps linearly onto `[0, 1]`; a degenerate range maps to 0.5.
    pub fn apply_value(&self, v: f64) -> f64 {
        if self.hi <= self.lo {
            return 0.5;
        }
        (v.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.apply_value(x)).collect()
    }
}

/// Winsorises `v` at its own `lo_pct`/`hi_pct` percentiles, then min-max scales to `[0, 1]`.
pub fn clip_normalize(v: &[f64], lo_pct: f64, hi_pct: f64) -> Result<Vec<f64>> {
    Ok(ClipNormalizer::fit(v, lo_pct, hi_pct)?.apply(v))
}

/// Corpus-level normalisers, one per relevance view, fitted on pooled values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileNormalizer {
    pub prompt: ClipNormalizer,
    pub response: ClipNormalizer,
    pub star: Option<ClipNormalizer>,
}

impl ProfileNormalizer {
    pub fn fit(profiles: &[RelevanceProfile], lo_pct: f64, hi_pct: f64) -> Result<Self> {
        let pooled = |f: &dyn Fn(&RelevanceProfile) -> &[f64]| -> Vec<f64> {
            profiles.iter().flat_map(|p| f(p).iter().copied()).collect()
        };
        let prompt = ClipNormalizer::fit(&pooled(&|p| &p.r_prompt), lo_pct, hi_pct)?;
        let response = ClipNormalizer::fit(&pooled(&|p| &p.r_response), lo_pct, hi_pct)?;
        let star_values: Vec<f64> = profiles
            .iter()
            .filter_map(|p| p.r_star_resampled.as_ref())
            .flat_map(|m| m.data().iter().copied())
            .collect();
        let star = if star_values.is_empty() {
            None
        } else {
            Some(ClipNormalizer::fit(&star_values, lo_pct, hi_pct)?)
        };
        Ok(Self {
            prompt,
            response,
            star,
        })
    }

    pub fn apply(&self, profile: &RelevanceProfile) -> RelevanceProfile {
        RelevanceProfile {
            r_prompt: self.prompt.apply(&profile.r_prompt),
            r_response: self.response.apply(&profile.r_response),
            r_star_resampled: match (&profile.r_star_resampled, &self.star) {
                (Some(m), Some(n)) => Some(m.map(|v| n.apply_value(v))),
                (m, _) => m.clone(),
            },
            resample_len: profile.resample_len,
        }
    }
}
