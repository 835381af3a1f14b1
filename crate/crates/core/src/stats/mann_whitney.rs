use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::median;
use crate::error::{Error, Result};

/// Pooled sample size up to which [`mann_whitney_u`] enumerates the exact null.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// U statistic of the second sample; `u + u_other = n_a * n_b`.
    pub u_other: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PValueMethod,
}

/// Midranks (1-based) of the pooled sample `a ++ b`.
fn pooled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Positions start..end share ranks start+1..=end.
        let mid = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = mid;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    (ranks, tie_sizes)
}

fn u_from_ranks(ranks_a: impl Iterator<Item = f64>, n_a: usize) -> f64 {
    let rank_sum: f64 = ranks_a.sum();
    rank_sum - (n_a * (n_a + 1)) as f64 / 2.0
}

/// U statistics `(U_a, U_b)` with midranks for ties.
pub fn rank_sum_u(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (ranks, _) = pooled_ranks(a, b);
    let u_a = u_from_ranks(ranks[..a.len()].iter().copied(), a.len());
    (u_a, (a.len() * b.len()) as f64 - u_a)
}

fn check_inputs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Size(
            "Mann-Whitney U needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Config("Mann-Whitney U inputs must be finite".into()));
    }
    Ok(())
}

/// Two-sided p-value from the exact permutation null: every way of assigning the
/// pooled (mid)ranks to a sample of size `|a|`, counted when its U lies at least as
/// far from `n_a n_b / 2` as the observed U.
pub fn exact_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let n = a.len() + b.len();
    if n > 20 {
        return Err(Error::Size(format!(
            "exact enumeration limited to 20 values, got {n}"
        )));
    }
    let (ranks, _) = pooled_ranks(a, b);
    let n_a = a.len();
    let centre = (a.len() * b.len()) as f64 / 2.0;
    let observed = (u_from_ranks(ranks[..n_a].iter().copied(), n_a) - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_a {
            continue;
        }
        let u = u_from_ranks(
            (0..n).filter(|k| mask & (1 << k) != 0).map(|k| ranks[k]),
            n_a,
        );
        total += 1;
        if (u - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// Two-sided p-value from the normal approximation with tie and continuity corrections.
pub fn normal_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let (ranks, ties) = pooled_ranks(a, b);
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let n = n_a + n_b;
    let u = u_from_ranks(ranks[..a.len()].iter().copied(), a.len());
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum();
    let tie_correction = if n > 1.0 {
        tie_term / (n * (n - 1.0))
    } else {
        0.0
    };
    let variance = n_a * n_b / 12.0 * ((n + 1.0) - tie_correction);
    if variance <= 0.0 {
        return Ok(1.0);
    }
    let deviation = ((u - n_a * n_b / 2.0).abs() - 0.5).max(0.0);
    let z = deviation / variance.sqrt();
    Ok(libm::erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// Mann-Whitney U test, exact when the pooled size is at most [`EXACT_LIMIT`].
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check_inputs(a, b)?;
    let (u, u_other) = rank_sum_u(a, b);
    let (p, method) = if a.len() + b.len() <= EXACT_LIMIT {
        (exact_p_value(a, b)?, PValueMethod::Exact)
    } else {
        (normal_p_value(a, b)?, PValueMethod::Normal)
    };
    Ok(MannWhitney {
        u,
        u_other,
        p,
        method,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleResult {
    pub median_p: f64,
    pub p_values: Vec<f64>,
}

/// Draws `n` values without replacement from each group `iters` times, runs a U test
/// on each draw and reports the median p-value.
pub fn repeated_subsample_utest(
    group_a: &[f64],
    group_b: &[f64],
    n: usize,
    iters: usize,
    seed: u64,
) -> Result<SubsampleResult> {
    if n == 0 || iters == 0 {
        return Err(Error::Config(
            "subsample size and iteration count must be >= 1".into(),
        ));
    }
    if group_a.len() < n || group_b.len() < n {
        return Err(Error::Size(format!(
            "groups of {} and {} values cannot supply {n} samples each",
            group_a.len(),
            group_b.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |group: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut idx = index::sample(rng, group.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| group[i]).collect()
    };
    let p_values = (0..iters)
        .map(|_| {
            let a = draw(group_a, &mut rng);
            let b = draw(group_b, &mut rng);
            mann_whitney_u(&a, &b).map(|r| r.p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsampleResult {
        median_p: median(&p_values),
        p_values,
    })
}
