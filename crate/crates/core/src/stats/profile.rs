use std::str::FromStr;

use super::resample::{resample_1d, resample_2d};
use crate::error::{Error, Result};
use crate::lrp::RelevanceMatrix;
use crate::numerics::Matrix;

/// Per-prompt-position mean over the response axis (column means).
pub fn prompt_relevance(r: &RelevanceMatrix) -> Result<Vec<f64>> {
    let m = non_empty(r)?;
    let t = m.rows() as f64;
    Ok((0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / t)
        .collect())
}

/// Per-response-position mean over the prompt axis (row means).
pub fn response_relevance(r: &RelevanceMatrix) -> Result<Vec<f64>> {
    let m = non_empty(r)?;
    let p = m.cols() as f64;
    Ok((0..m.rows())
        .map(|i| m.row(i).iter().sum::<f64>() / p)
        .collect())
}

fn non_empty(r: &RelevanceMatrix) -> Result<&Matrix> {
    let m = r.matrix();
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::shape("relevance profile", "empty relevance matrix"));
    }
    Ok(m)
}

/// Which relevance vector feeds a vector classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSource {
    Prompt,
    #[default]
    Response,
    /// Prompt followed by response.
    Concat,
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prompt" => Ok(Self::Prompt),
            "response" => Ok(Self::Response),
            "concat" => Ok(Self::Concat),
            other => Err(Error::Config(format!("unknown feature source {other:?}"))),
        }
    }
}

/// Prompt/response relevance vectors of one sample, plus an optional fixed-shape copy
/// of the full matrix for sequence models.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceProfile {
    pub r_prompt: Vec<f64>,
    pub r_response: Vec<f64>,
    pub r_star_resampled: Option<Matrix>,
    /// Length both vectors were resampled to; zero for raw profiles.
    pub resample_len: usize,
}

impl RelevanceProfile {
    /// Raw profile: vectors at their natural lengths.
    pub fn from_matrix(r: &RelevanceMatrix) -> Result<Self> {
        Ok(Self {
            r_prompt: prompt_relevance(r)?,
            r_response: response_relevance(r)?,
            r_star_resampled: None,
            resample_len: 0,
        })
    }

    /// Both vectors resampled to `l_new`; the matrix to `star_shape` when given.
    pub fn resampled(
        r: &RelevanceMatrix,
        l_new: usize,
        star_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if l_new == 0 {
            return Err(Error::Config("resample length must be >= 1".into()));
        }
        let raw = Self::from_matrix(r)?;
        let r_star_resampled = match star_shape {
            Some((0, _)) | Some((_, 0)) => {
                return Err(Error::Config(
                    "matrix resample shape must be positive".into(),
                ))
            }
            Some((rows, cols)) => Some(resample_2d(r.matrix(), rows, cols)),
            None => None,
        };
        Ok(Self {
            r_prompt: resample_1d(&raw.r_prompt, l_new),
            r_response: resample_1d(&raw.r_response, l_new),
            r_star_resampled,
            resample_len: l_new,
        })
    }

    pub fn features(&self, source: FeatureSource) -> Vec<f64> {
        match source {
            FeatureSource::Prompt => self.r_prompt.clone(),
            FeatureSource::Response => self.r_response.clone(),
            FeatureSource::Concat => {
                let mut v = self.r_prompt.clone();
                v.extend_from_slice(&self.r_response);
                v
            }
        }
    }
}
