//! Brute-force check that selecting the member with the smallest empirical
//! loss is the same as selecting the one with the smallest true
//! approximation error, when the dataset is an unbiased sample of the model.

use std::collections::BTreeMap;

use crate::envs::{random_dyadic_mdp, rational_denominator, TabularMdp};
use crate::rng;
use crate::tabular::TabularTransition;
use crate::tinynn::{forward, mlp_init, Activation, Batch, MlpSpec, ParamVector};
use crate::{argmin, Error, Result};

/// Largest transition-probability denominator the enumeration accepts.
pub const MAX_DENOMINATOR: u64 = 1 << 12;

fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}

/// Every `(s, a)` of non-terminal `s`, repeated `weights[sa]` times, each
/// time followed by every successor with multiplicity proportional to its
/// probability. The empirical successor distribution of each pair is then
/// exactly the model's.
pub fn enumerate_unbiased_dataset(mdp: &TabularMdp, weights: &[usize]) -> Result<Vec<TabularTransition>> {
    if weights.len() != mdp.n_pairs() {
        return Err(Error::DimensionMismatch { context: "pair weights", expected: mdp.n_pairs(), got: weights.len() });
    }
    let mut data = Vec::new();
    for s in 0..mdp.n_states() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..mdp.n_actions() {
            let row = mdp.transition_row(s, a);
            let mut den = 1;
            for &p in row {
                let d = rational_denominator(p, MAX_DENOMINATOR).ok_or_else(|| {
                    Error::Hypothesis(format!("P({s},{a}) has a probability {p} with no small rational form"))
                })?;
                den = lcm(den, d);
            }
            for _ in 0..weights[mdp.sa(s, a)] {
                for (s2, &p) in row.iter().enumerate() {
                    let copies = (p * den as f64).round() as usize;
                    for _ in 0..copies {
                        data.push(TabularTransition {
                            state: s,
                            action: a,
                            reward: mdp.reward(s, a),
                            next_state: s2,
                            done: mdp.is_terminal(s2),
                        });
                    }
                }
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Empty("enumerated dataset"));
    }
    Ok(data)
}

/// Verifies that, for every pair present, the empirical successor
/// frequencies equal the model's probabilities and rewards match. Returns
/// the per-pair sample counts.
pub fn check_unbiased(mdp: &TabularMdp, data: &[TabularTransition]) -> Result<Vec<usize>> {
    let mut by_pair: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for t in data {
        if t.state >= mdp.n_states() || t.next_state >= mdp.n_states() || t.action >= mdp.n_actions() {
            return Err(Error::OutOfRange { context: "dataset transition", index: t.state.max(t.next_state), bound: mdp.n_states() });
        }
        if t.reward != mdp.reward(t.state, t.action) {
            return Err(Error::Hypothesis(format!("reward of ({}, {}) differs from the model", t.state, t.action)));
        }
        by_pair.entry(mdp.sa(t.state, t.action)).or_insert_with(|| vec![0; mdp.n_states()])[t.next_state] += 1;
    }
    let mut counts = vec![0; mdp.n_pairs()];
    for (sa, succ) in by_pair {
        let (s, a) = (sa / mdp.n_actions(), sa % mdp.n_actions());
        let total: usize = succ.iter().sum();
        for (s2, (&c, &p)) in succ.iter().zip(mdp.transition_row(s, a)).enumerate() {
            if (c as f64 / total as f64 - p).abs() > 1e-12 {
                return Err(Error::Hypothesis(format!(
                    "successor {s2} of ({s}, {a}) has frequency {}/{total}, model says {p}",
                    c
                )));
            }
        }
        counts[sa] = total;
    }
    Ok(counts)
}

/// Q-values of a one-hot-input network for every `(s, a)`, flattened as `s * n_actions + a`.
pub fn q_table(params: &ParamVector, spec: &MlpSpec, n_states: usize) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..n_states)
        .map(|s| {
            let mut v = vec![0.0; n_states];
            v[s] = 1.0;
            v
        })
        .collect();
    Ok(forward(params, spec, &Batch::from_rows(&rows)?)?.into_data())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    /// Summed squared TD errors over the dataset.
    pub empirical_losses: Vec<f64>,
    /// `sum_{s,a} nu(s,a) (Γ Q_target - Q_k)^2` with the true model.
    pub true_errors: Vec<f64>,
    pub empirical_argmin: usize,
    pub true_argmin: usize,
}

impl OracleOutcome {
    pub fn holds(&self) -> bool {
        self.empirical_argmin == self.true_argmin
    }
}

/// Compares both selections for networks over one-hot state encodings. The
/// dataset must pass [`check_unbiased`]; otherwise the comparison is
/// meaningless and an error is returned.
pub fn selection_oracle_check(
    networks: &[(MlpSpec, ParamVector)],
    target: (&MlpSpec, &ParamVector),
    mdp: &TabularMdp,
    data: &[TabularTransition],
) -> Result<OracleOutcome> {
    if networks.is_empty() {
        return Err(Error::Empty("oracle networks"));
    }
    for (spec, _) in networks.iter().map(|(s, p)| (s, p)).chain(std::iter::once(target)) {
        if spec.input_dim != mdp.n_states() || spec.output_dim != mdp.n_actions() {
            return Err(Error::config("oracle networks must map one-hot states to action values"));
        }
    }
    let counts = check_unbiased(mdp, data)?;
    let total: usize = counts.iter().sum();
    let target_q = q_table(target.1, target.0, mdp.n_states())?;
    let gamma_q = mdp.bellman_optimality(&target_q);
    let v_target: Vec<f64> = (0..mdp.n_states()).map(|s| mdp.state_value(&target_q, s)).collect();

    let mut empirical = Vec::with_capacity(networks.len());
    let mut truth = Vec::with_capacity(networks.len());
    for (spec, params) in networks {
        let q = q_table(params, spec, mdp.n_states())?;
        let emp: f64 = data
            .iter()
            .map(|t| {
                let boot = if t.done { 0.0 } else { mdp.gamma() * v_target[t.next_state] };
                let r = t.reward + boot - q[mdp.sa(t.state, t.action)];
                r * r
            })
            .sum();
        let tru: f64 = counts
            .iter()
            .enumerate()
            .map(|(sa, &c)| {
                let d = gamma_q[sa] - q[sa];
                c as f64 / total as f64 * d * d
            })
            .sum();
        empirical.push(emp);
        truth.push(tru);
    }
    Ok(OracleOutcome {
        empirical_argmin: argmin(&empirical),
        true_argmin: argmin(&truth),
        empirical_losses: empirical,
        true_errors: truth,
    })
}

/// `trials` independent draws of a 4-state, 2-action dyadic MDP, random
/// pair weights, `k` randomly initialized networks of varying shape and a
/// random target network; one outcome per draw.
pub fn selection_oracle_suite(trials: usize, k: usize, seed: u64) -> Result<Vec<OracleOutcome>> {
    use rand::Rng as _;
    let acts = [Activation::Tanh, Activation::Relu, Activation::Silu];
    (0..trials as u64)
        .map(|trial| {
            let mut r = rng::stream(seed, trial, "selection-oracle");
            let mdp = random_dyadic_mdp(4, 2, 3, 3, 1.0, 0.9, &mut r)?;
            let weights: Vec<usize> = (0..mdp.n_pairs()).map(|_| r.random_range(1..=3)).collect();
            let data = enumerate_unbiased_dataset(&mdp, &weights)?;
            let net = |r: &mut rng::Rng| -> Result<(MlpSpec, ParamVector)> {
                let depth = r.random_range(1..=2);
                let hidden = (0..depth).map(|_| r.random_range(2..=8)).collect();
                let spec = MlpSpec::new(4, hidden, 2, acts[r.random_range(0..acts.len())])?;
                let mut p = mlp_init(&spec, r);
                for v in p.iter_mut() {
                    *v += r.random_range(-0.5..0.5);
                }
                Ok((spec, p))
            };
            let target = net(&mut r)?;
            let members = (0..k).map(|_| net(&mut r)).collect::<Result<Vec<_>>>()?;
            selection_oracle_check(&members, (&target.0, &target.1), &mdp, &data)
        })
        .collect()
}
