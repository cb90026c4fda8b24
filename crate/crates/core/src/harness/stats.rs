use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Interquartile mean with fractional trimming.
///
/// The sorted sample defines a step quantile function; the result is the mean
/// of that function over the central half of the unit interval. When the
/// sample size is a multiple of four this is the plain mean of the middle
/// half, otherwise the boundary values enter with partial weight.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("iqm input"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("iqm input contains {v}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut acc = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        let lo = (i as f64 / n).max(0.25);
        let hi = ((i + 1) as f64 / n).min(0.75);
        if hi > lo {
            acc += v * (hi - lo);
        }
    }
    Ok(2.0 * acc)
}

/// Linear-interpolation percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("percentile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Area under a curve sampled at increasing steps, divided by the step span
/// so that the result is on the scale of the values.
pub fn auc(steps: &[f64], values: &[f64]) -> Result<f64> {
    if steps.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "auc values",
            expected: steps.len(),
            got: values.len(),
        });
    }
    if steps.len() < 2 {
        return Err(Error::config("auc needs at least two checkpoints"));
    }
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("auc steps must be strictly increasing"));
    }
    let area: f64 = steps
        .windows(2)
        .zip(values.windows(2))
        .map(|(s, v)| 0.5 * (v[0] + v[1]) * (s[1] - s[0]))
        .sum();
    Ok(area / (steps[steps.len() - 1] - steps[0]))
}

/// Percentile interval of the IQM under stratified resampling: every stratum
/// is resampled with replacement at its own size, the resamples are pooled
/// and the IQM recomputed.
pub fn bootstrap_ci(
    strata: &[Vec<f64>],
    n_resamples: usize,
    level: f64,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if strata.is_empty() || strata.iter().any(Vec::is_empty) {
        return Err(Error::Empty("bootstrap stratum"));
    }
    if n_resamples == 0 {
        return Err(Error::config("bootstrap needs at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("confidence level {level} outside (0, 1)")));
    }
    let total: usize = strata.iter().map(Vec::len).sum();
    let mut pooled = Vec::with_capacity(total);
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        pooled.clear();
        for s in strata {
            for _ in 0..s.len() {
                pooled.push(s[rng.random_range(0..s.len())]);
            }
        }
        stats.push(iqm(&pooled)?);
    }
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(&stats, tail)?, percentile(&stats, 1.0 - tail)?))
}

/// Shannon entropy (nats) of the empirical distribution given by `counts`.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * (1.0 / p).ln()
        })
        .sum()
}
