use rand::seq::SliceRandom;
use rand::Rng as _;

use super::stats::iqm;
use crate::rng::Rng;
use crate::{argmax, Error, Result};

/// A curve on an explicit step axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
}

/// Scores `s_k^{i,j}(t)` for hyperparameter `k`, task `i`, seed `j` and
/// checkpoint `t`, on one shared checkpoint grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTensor {
    steps: Vec<u64>,
    n_tasks: usize,
    n_seeds: usize,
    /// Index order (k, i, j, t).
    data: Vec<Vec<Vec<Vec<f64>>>>,
}

impl ScoreTensor {
    pub fn new(steps: Vec<u64>, data: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("checkpoint grid"));
        }
        if steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("checkpoints must be strictly increasing"));
        }
        let first = data.first().ok_or(Error::Empty("score tensor"))?;
        let n_tasks = first.len();
        let n_seeds = first.first().map_or(0, Vec::len);
        if n_tasks == 0 || n_seeds == 0 {
            return Err(Error::Empty("score tensor tasks or seeds"));
        }
        for per_k in &data {
            if per_k.len() != n_tasks {
                return Err(Error::DimensionMismatch {
                    context: "score tensor tasks",
                    expected: n_tasks,
                    got: per_k.len(),
                });
            }
            for per_i in per_k {
                if per_i.len() != n_seeds {
                    return Err(Error::DimensionMismatch {
                        context: "score tensor seeds",
                        expected: n_seeds,
                        got: per_i.len(),
                    });
                }
                for series in per_i {
                    if series.len() != steps.len() {
                        return Err(Error::DimensionMismatch {
                            context: "score tensor checkpoints",
                            expected: steps.len(),
                            got: series.len(),
                        });
                    }
                    if series.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("score tensor entry".into()));
                    }
                }
            }
        }
        Ok(Self { steps, n_tasks, n_seeds, data })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn n_hyperparams(&self) -> usize {
        self.data.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_seeds(&self) -> usize {
        self.n_seeds
    }

    pub fn get(&self, k: usize, i: usize, j: usize, t: usize) -> f64 {
        self.data[k][i][j][t]
    }

    pub fn series(&self, k: usize, i: usize, j: usize) -> &[f64] {
        &self.data[k][i][j]
    }

    /// Pointwise IQM over all (task, seed) pairs for hyperparameter `k`.
    pub fn iqm_curve(&self, k: usize) -> Curve {
        let values = (0..self.steps.len())
            .map(|t| {
                let pool: Vec<f64> = self.data[k].iter().flatten().map(|s| s[t]).collect();
                iqm(&pool).expect("tensor is non-empty and finite")
            })
            .collect();
        Curve { steps: self.steps.clone(), values }
    }
}

/// Best-per-task grid search, stretched to account for the steps spent on
/// all `K` trials.
pub fn grid_search_curve(tensor: &ScoreTensor) -> Curve {
    let k_count = tensor.n_hyperparams();
    let mut values = Vec::with_capacity(tensor.steps.len());
    for t in 0..tensor.steps.len() {
        let mut pool = Vec::with_capacity(tensor.n_tasks * tensor.n_seeds);
        for i in 0..tensor.n_tasks {
            let per_k: Vec<f64> = (0..k_count)
                .map(|k| {
                    let seeds: Vec<f64> = (0..tensor.n_seeds).map(|j| tensor.get(k, i, j, t)).collect();
                    iqm(&seeds).expect("non-empty")
                })
                .collect();
            let best = argmax(&per_k);
            pool.extend((0..tensor.n_seeds).map(|j| tensor.get(best, i, j, t)));
        }
        values.push(iqm(&pool).expect("non-empty"));
    }
    Curve { steps: tensor.steps.iter().map(|s| s * k_count as u64).collect(), values }
}

/// Score of a sequential search that runs trials in `order`, observed at
/// checkpoint `t` of trial `m`: the better of the current trial's score and
/// the best final score among the trials already completed.
fn sequential_score(series: &[&[f64]], order: &[usize], m: usize, t: usize) -> f64 {
    let incumbent = order[..m]
        .iter()
        .map(|&k| *series[k].last().expect("non-empty series"))
        .fold(f64::NEG_INFINITY, f64::max);
    series[order[m]][t].max(incumbent)
}

fn all_orders(k: usize, with_replacement: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, wr: bool, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in 0..k {
            if !wr && cur.contains(&c) {
                continue;
            }
            cur.push(c);
            rec(k, wr, cur, out);
            cur.pop();
        }
    }
    rec(k, with_replacement, &mut cur, &mut out);
    out
}

/// Largest `K` accepted by the exact random-search enumeration.
pub const MAX_EXACT_K: usize = 7;

/// Exact expectation, over uniformly drawn trial orders, of the sequential
/// search score of one (task, seed) pair. The output covers `K` consecutive
/// trials, each spanning the full checkpoint grid.
pub fn random_search_expectation_exact(series: &[&[f64]], with_replacement: bool) -> Result<Vec<f64>> {
    let k = series.len();
    if k == 0 {
        return Err(Error::Empty("random search series"));
    }
    if k > MAX_EXACT_K {
        return Err(Error::config(format!("exact enumeration limited to K <= {MAX_EXACT_K}")));
    }
    let n_t = series[0].len();
    let orders = all_orders(k, with_replacement);
    let mut out = vec![0.0; k * n_t];
    for order in &orders {
        for m in 0..k {
            for t in 0..n_t {
                out[m * n_t + t] += sequential_score(series, order, m, t);
            }
        }
    }
    let n = orders.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Monte Carlo version of [`random_search_expectation_exact`]; returns the
/// estimate and its standard error per point.
pub fn random_search_expectation_mc(
    series: &[&[f64]],
    n_mc: usize,
    with_replacement: bool,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = series.len();
    if k == 0 {
        return Err(Error::Empty("random search series"));
    }
    if n_mc == 0 {
        return Err(Error::config("n_mc must be at least 1"));
    }
    let n_t = series[0].len();
    let mut sum = vec![0.0; k * n_t];
    let mut sum_sq = vec![0.0; k * n_t];
    let mut order: Vec<usize> = (0..k).collect();
    for _ in 0..n_mc {
        if with_replacement {
            order.iter_mut().for_each(|o| *o = rng.random_range(0..k));
        } else {
            order.shuffle(rng);
        }
        for m in 0..k {
            for t in 0..n_t {
                let v = sequential_score(series, &order, m, t);
                sum[m * n_t + t] += v;
                sum_sq[m * n_t + t] += v * v;
            }
        }
    }
    let n = n_mc as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) / n).sqrt())
        .collect();
    Ok((mean, se))
}

fn random_search_axis(steps: &[u64], k: usize) -> Vec<u64> {
    let span = *steps.last().expect("non-empty grid");
    (0..k as u64)
        .flat_map(|m| steps.iter().map(move |s| m * span + s))
        .collect()
}

fn per_pair_curves<F>(tensor: &ScoreTensor, mut f: F) -> Result<Curve>
where
    F: FnMut(&[&[f64]]) -> Result<Vec<f64>>,
{
    let k = tensor.n_hyperparams();
    let mut per_pair = Vec::with_capacity(tensor.n_tasks * tensor.n_seeds);
    for i in 0..tensor.n_tasks {
        for j in 0..tensor.n_seeds {
            let series: Vec<&[f64]> = (0..k).map(|kk| tensor.series(kk, i, j)).collect();
            per_pair.push(f(&series)?);
        }
    }
    let len = k * tensor.steps.len();
    let values = (0..len)
        .map(|p| iqm(&per_pair.iter().map(|c| c[p]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve { steps: random_search_axis(&tensor.steps, k), values })
}

/// Expected performance of a sequential random search over the `K`
/// hyperparameters, estimated per (task, seed) with `n_mc` sampled trial
/// orders and then aggregated by IQM. The curve spans `K` trials.
pub fn random_search_curve(
    tensor: &ScoreTensor,
    n_mc: usize,
    with_replacement: bool,
    rng: &mut Rng,
) -> Result<Curve> {
    per_pair_curves(tensor, |s| random_search_expectation_mc(s, n_mc, with_replacement, rng).map(|r| r.0))
}

/// [`random_search_curve`] with the expectation computed by enumerating
/// every trial order.
pub fn random_search_curve_exact(tensor: &ScoreTensor, with_replacement: bool) -> Result<Curve> {
    per_pair_curves(tensor, |s| random_search_expectation_exact(s, with_replacement))
}

/// Prefix maximum.
pub fn running_max_curve(series: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    series
        .iter()
        .map(|&v| {
            best = best.max(v);
            best
        })
        .collect()
}

/// Pointwise minimum and maximum across population members.
pub fn population_min_max_curves(members: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = members.first().ok_or(Error::Empty("population"))?;
    let n = first.len();
    if let Some(bad) = members.iter().find(|m| m.len() != n) {
        return Err(Error::DimensionMismatch { context: "member series", expected: n, got: bad.len() });
    }
    let min = (0..n).map(|t| members.iter().map(|m| m[t]).fold(f64::INFINITY, f64::min)).collect();
    let max = (0..n).map(|t| members.iter().map(|m| m[t]).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok((min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn constant_tensor(levels: &[f64], n_t: usize) -> ScoreTensor {
        let steps = (1..=n_t as u64).map(|s| s * 10).collect();
        let data = levels.iter().map(|&c| vec![vec![vec![c; n_t]; 3]; 2]).collect();
        ScoreTensor::new(steps, data).unwrap()
    }

    #[test]
    fn grid_search_stretches_best_constant() {
        let tensor = constant_tensor(&[1.0, 3.0], 4);
        let c = grid_search_curve(&tensor);
        assert_eq!(c.steps, vec![20, 40, 60, 80]);
        assert_eq!(c.values, vec![3.0; 4]);
    }

    #[test]
    fn k1_curves_equal_plain_iqm() {
        let steps = vec![1, 2, 3];
        let data = vec![vec![vec![vec![1.0, 5.0, 2.0], vec![0.0, 1.0, 7.0], vec![3.0, 3.0, 3.0]]]];
        let tensor = ScoreTensor::new(steps, data).unwrap();
        let plain = tensor.iqm_curve(0);
        assert_eq!(grid_search_curve(&tensor), plain);
        assert_eq!(random_search_curve_exact(&tensor, false).unwrap(), plain);
        let mut r = rng::stream(0, 0, "test");
        assert_eq!(random_search_curve(&tensor, 10, false, &mut r).unwrap(), plain);
    }

    #[test]
    fn random_search_first_trial_is_uniform_average() {
        let tensor = constant_tensor(&[1.0, 3.0], 3);
        let c = random_search_curve_exact(&tensor, false).unwrap();
        assert_eq!(c.steps, vec![10, 20, 30, 40, 50, 60]);
        assert_eq!(&c.values[..3], &[2.0; 3]);
        // The second trial always keeps the incumbent 3.
        assert_eq!(&c.values[3..], &[3.0; 3]);
        let c = random_search_curve_exact(&tensor, true).unwrap();
        assert_eq!(&c.values[..3], &[2.0; 3]);
        // With replacement the pair (0, 0) keeps 1: mean of {1, 3, 3, 3}.
        assert_eq!(&c.values[3..], &[2.5; 3]);
    }

    #[test]
    fn running_max_examples() {
        assert_eq!(running_max_curve(&[3.0, 1.0, 2.0]), vec![3.0; 3]);
        assert_eq!(running_max_curve(&[1.0, 2.0, 4.0]), vec![1.0, 2.0, 4.0]);
        assert!(running_max_curve(&[]).is_empty());
    }

    #[test]
    fn min_max_examples() {
        let (lo, hi) = population_min_max_curves(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(hi, vec![3.0, 2.0]);
        assert_eq!(lo, vec![1.0, 0.0]);
        let (lo, hi) = population_min_max_curves(&[vec![4.0, 5.0]]).unwrap();
        assert_eq!(lo, hi);
        assert!(population_min_max_curves(&[]).is_err());
    }

    #[test]
    fn tensor_validation() {
        assert!(ScoreTensor::new(vec![2, 1], vec![vec![vec![vec![0.0, 0.0]]]]).is_err());
        assert!(ScoreTensor::new(vec![1, 2], vec![vec![vec![vec![0.0]]]]).is_err());
        assert!(ScoreTensor::new(vec![1], vec![]).is_err());
    }
}
