use std::f64::consts::{LN_2, PI};

use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;
use crate::tinynn::{backward, forward_trace, Batch, MlpSpec, ParamVector};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log1m_tanh_sq(u: f64) -> f64 {
    // 1 - tanh^2 = 4 / (e^u + e^-u)^2
    let a = u.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}

/// Log density of `a = scale * tanh(u)`, `u ~ N(mean, exp(log_std)^2)`, for
/// one action dimension.
pub fn tanh_gaussian_log_density(mean: f64, log_std: f64, action: f64, scale: f64) -> f64 {
    let t = action / scale;
    let u = t.atanh();
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln() - log1m_tanh_sq(u) - scale.ln()
}

/// Squashed Gaussian policy: the network maps an observation to
/// `(mean, raw log-std)` per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub spec: MlpSpec,
    pub action_dim: usize,
    pub action_scale: f64,
}

/// Reparameterized draws for a batch, with what the gradient needs.
#[derive(Clone, Debug)]
pub struct PolicySample {
    /// `rows * action_dim`, already scaled.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    noise: Vec<f64>,
    tanh: Vec<f64>,
    std: Vec<f64>,
    /// Whether the raw log-std was inside its clamp range.
    ls_free: Vec<bool>,
}

impl GaussianPolicy {
    pub fn new(obs_dim: usize, hidden: Vec<usize>, action_dim: usize, action_scale: f64, activation: crate::tinynn::Activation) -> Result<Self> {
        if !(action_scale > 0.0 && action_scale.is_finite()) {
            return Err(Error::config("action scale must be positive"));
        }
        Ok(Self { spec: MlpSpec::new(obs_dim, hidden, 2 * action_dim, activation)?, action_dim, action_scale })
    }

    pub fn draw_noise(&self, rows: usize, rng: &mut Rng) -> Vec<f64> {
        (0..rows * self.action_dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn sample_from(&self, out: &[f64], rows: usize, noise: &[f64]) -> Result<PolicySample> {
        let d = self.action_dim;
        if noise.len() != rows * d {
            return Err(Error::DimensionMismatch { context: "policy noise", expected: rows * d, got: noise.len() });
        }
        let n = rows * d;
        let mut s = PolicySample {
            actions: Vec::with_capacity(n),
            log_probs: vec![0.0; rows],
            noise: noise.to_vec(),
            tanh: Vec::with_capacity(n),
            std: Vec::with_capacity(n),
            ls_free: Vec::with_capacity(n),
        };
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for r in 0..rows {
            for j in 0..d {
                let mean = out[r * 2 * d + j];
                let raw = out[r * 2 * d + d + j];
                if !mean.is_finite() || !raw.is_finite() {
                    return Err(Error::NonFinite("policy output".into()));
                }
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = ls.exp();
                let e = noise[r * d + j];
                let u = mean + std * e;
                let t = u.tanh();
                s.log_probs[r] += -0.5 * e * e - ls - half_log_2pi - log1m_tanh_sq(u) - self.action_scale.ln();
                s.actions.push(self.action_scale * t);
                s.tanh.push(t);
                s.std.push(std);
                s.ls_free.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
            }
        }
        Ok(s)
    }

    pub fn sample(&self, params: &[f64], obs: &Batch, noise: &[f64]) -> Result<PolicySample> {
        let trace = forward_trace(params, &self.spec, obs)?;
        self.sample_from(trace.output(), obs.rows(), noise)
    }

    /// Deterministic action `scale * tanh(mean)`.
    pub fn mean_action(&self, params: &[f64], obs: &[f64]) -> Result<Vec<f64>> {
        let trace = forward_trace(params, &self.spec, &Batch::single(obs))?;
        Ok(trace.output()[..self.action_dim].iter().map(|m| self.action_scale * m.tanh()).collect())
    }

    /// Value and parameter gradient of the batch-mean actor objective
    /// `alpha * log pi(a|s) - q(s, a)` with `a` reparameterized by `noise`.
    ///
    /// `critic` receives the sampled actions and returns, per row, the
    /// critic value and its gradient with respect to the action.
    pub fn objective_and_grad<F>(
        &self,
        params: &[f64],
        obs: &Batch,
        noise: &[f64],
        alpha: f64,
        critic: F,
    ) -> Result<(f64, ParamVector)>
    where
        F: FnOnce(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
    {
        let rows = obs.rows();
        if rows == 0 {
            return Err(Error::Empty("actor batch"));
        }
        let d = self.action_dim;
        let trace = forward_trace(params, &self.spec, obs)?;
        let s = self.sample_from(trace.output(), rows, noise)?;
        let (q, dq_da) = critic(&s.actions)?;
        if q.len() != rows || dq_da.len() != rows * d {
            return Err(Error::DimensionMismatch { context: "critic feedback", expected: rows, got: q.len() });
        }
        let inv = 1.0 / rows as f64;
        let value = (0..rows).map(|r| alpha * s.log_probs[r] - q[r]).sum::<f64>() * inv;
        let mut d_out = vec![0.0; rows * 2 * d];
        for r in 0..rows {
            for j in 0..d {
                let i = r * d + j;
                let (t, std, e) = (s.tanh[i], s.std[i], s.noise[i]);
                // d a / d u
                let da_du = self.action_scale * (1.0 - t * t);
                let dq_du = dq_da[i] * da_du;
                // d log pi / d u through the squashing term is 2 t.
                d_out[r * 2 * d + j] = (alpha * 2.0 * t - dq_du) * inv;
                if s.ls_free[i] {
                    d_out[r * 2 * d + d + j] = (alpha * (-1.0 + 2.0 * t * std * e) - dq_du * std * e) * inv;
                }
            }
        }
        let mut grad = ParamVector::zeros(params.len());
        backward(params, &self.spec, &trace, &d_out, &mut grad, false)?;
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tinynn::{mlp_init, Activation};

    #[test]
    fn density_integrates_to_one() {
        for (mean, ls) in [(0.0, 0.0), (0.7, -0.5), (-1.5, 0.8), (2.0, -1.5)] {
            let scale = 2.0;
            // Grid in action space through a = scale * tanh(v), which resolves
            // the mass piled up near the bounds.
            let (n, lim) = (200_000, 18.0);
            let h = 2.0 * lim / n as f64;
            let mass: f64 = (0..n)
                .map(|i| {
                    let v = -lim + (i as f64 + 0.5) * h;
                    let da_dv = scale / v.cosh().powi(2);
                    tanh_gaussian_log_density(mean, ls, scale * v.tanh(), scale).exp() * da_dv * h
                })
                .sum();
            assert!((mass - 1.0).abs() < 1e-3, "mean {mean} ls {ls}: {mass}");
        }
    }

    #[test]
    fn sample_log_prob_matches_density() {
        let mut r = rng::stream(0, 0, rng::POLICY);
        let p = GaussianPolicy::new(3, vec![8], 1, 2.0, Activation::Tanh).unwrap();
        let params = mlp_init(&p.spec, &mut r);
        let obs = Batch::from_rows(&[[0.1, -0.3, 0.5], [1.0, 0.0, -2.0]]).unwrap();
        let noise = p.draw_noise(2, &mut r);
        let s = p.sample(&params, &obs, &noise).unwrap();
        let out = crate::tinynn::forward(&params, &p.spec, &obs).unwrap();
        for row in 0..2 {
            let o = out.row(row);
            let lp = tanh_gaussian_log_density(o[0], o[1].clamp(LOG_STD_MIN, LOG_STD_MAX), s.actions[row], 2.0);
            assert!((lp - s.log_probs[row]).abs() < 1e-9);
            assert!(s.actions[row].abs() <= 2.0);
        }
    }

    #[test]
    fn stable_squash_term() {
        for u in [-30.0, -3.0, 0.0, 0.5, 4.0, 40.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            if direct.is_finite() && u.abs() < 10.0 {
                assert!((log1m_tanh_sq(u) - direct).abs() < 1e-10);
            }
            assert!(log1m_tanh_sq(u).is_finite());
        }
    }
}
