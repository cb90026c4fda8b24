use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{DiscreteEnv, Step};
use crate::rng::Rng;
use crate::{Error, Result};

/// Finite MDP with an explicit kernel. Tables are indexed by `s * n_actions + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[(s * n_actions + a) * n_states + s']`
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::config("MDP needs at least one state and action"));
        }
        let sa = n_states * n_actions;
        if transition.len() != sa * n_states || reward.len() != sa || terminal.len() != n_states {
            return Err(Error::config("MDP table sizes do not match (n_states, n_actions)"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("MDP reward table".into()));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "transition row (s={}, a={}) is not a distribution (sum {sum})",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let i = self.sa(s, a) * self.n_states;
        &self.transition[i..i + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[self.sa(s, a)]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// `max_a q(s, a)`, or 0 in terminal states.
    pub fn state_value(&self, q: &[f64], s: usize) -> f64 {
        if self.terminal[s] {
            return 0.0;
        }
        let row = &q[s * self.n_actions..(s + 1) * self.n_actions];
        row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies the optimal Bellman operator with the true model.
    pub fn bellman_optimality(&self, q: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = (0..self.n_states).map(|s| self.state_value(q, s)).collect();
        (0..self.n_pairs())
            .map(|i| {
                let row = &self.transition[i * self.n_states..(i + 1) * self.n_states];
                let ev: f64 = row.iter().zip(&v).map(|(p, v)| p * v).sum();
                self.reward[i] + self.gamma * ev
            })
            .collect()
    }

    pub fn sample_next(&self, s: usize, a: usize, rng: &mut Rng) -> usize {
        let row = self.transition_row(s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (next, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return next;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.n_states - 1)
    }
}

/// Random MDP: each `(s, a)` moves to `branching` distinct uniformly chosen
/// successors with Dirichlet(1) weights; rewards are uniform in `[0, reward_scale)`.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    reward_scale: f64,
    gamma: f64,
    rng: &mut Rng,
) -> Result<TabularMdp> {
    check_branching(n_states, branching)?;
    let sa = n_states * n_actions;
    let mut transition = vec![0.0; sa * n_states];
    for i in 0..sa {
        let succ = sample(rng, n_states, branching);
        let w: Vec<f64> = (0..branching).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = w.iter().sum();
        let row = &mut transition[i * n_states..(i + 1) * n_states];
        for (s2, wi) in succ.iter().zip(&w) {
            row[s2] = wi / total;
        }
        // Absorb rounding so the row sums to one.
        let sum: f64 = row.iter().sum();
        let first = succ.index(0);
        row[first] += 1.0 - sum;
    }
    let reward = (0..sa).map(|_| rng.random::<f64>() * reward_scale).collect();
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, vec![false; n_states])
}

/// Random MDP whose transition probabilities are multiples of `2^-bits`.
pub fn random_dyadic_mdp(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    bits: u32,
    reward_scale: f64,
    gamma: f64,
    rng: &mut Rng,
) -> Result<TabularMdp> {
    check_branching(n_states, branching)?;
    let units = 1usize << bits;
    if branching > units {
        return Err(Error::config("branching exceeds the dyadic resolution"));
    }
    let sa = n_states * n_actions;
    let mut transition = vec![0.0; sa * n_states];
    for i in 0..sa {
        let succ = sample(rng, n_states, branching);
        // Random composition of `units` into `branching` positive parts.
        let mut cuts: Vec<usize> = sample(rng, units - 1, branching - 1)
            .iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.insert(0, 0);
        cuts.push(units);
        let row = &mut transition[i * n_states..(i + 1) * n_states];
        for (s2, w) in succ.iter().zip(cuts.windows(2)) {
            row[s2] = (w[1] - w[0]) as f64 / units as f64;
        }
    }
    let reward = (0..sa).map(|_| rng.random::<f64>() * reward_scale).collect();
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, vec![false; n_states])
}

fn check_branching(n_states: usize, branching: usize) -> Result<()> {
    if branching == 0 || branching > n_states {
        return Err(Error::config(format!(
            "branching must lie in [1, n_states={n_states}], got {branching}"
        )));
    }
    Ok(())
}

/// Smallest `d <= max_den` with `p * d` integral (within 1e-12).
pub fn rational_denominator(p: f64, max_den: u64) -> Option<u64> {
    (1..=max_den).find(|&d| {
        let x = p * d as f64;
        (x - x.round()).abs() < 1e-12 * d as f64
    })
}

/// Iterates the optimal Bellman operator until `||Γ*Q - Q||_inf <= tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Vec<f64> {
    assert!(tol > 0.0, "value_iteration tolerance must be positive");
    let mut q = vec![0.0; mdp.n_pairs()];
    loop {
        let next = mdp.bellman_optimality(&q);
        let residual = next
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return q;
        }
        q = next;
    }
}

/// Episodic wrapper around a [`TabularMdp`] with one-hot observations.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: TabularMdp,
    horizon: usize,
    state: usize,
    steps: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, horizon: usize) -> Self {
        Self {
            mdp,
            horizon: horizon.max(1),
            state: 0,
            steps: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[s] = 1.0;
        v
    }
}

impl DiscreteEnv for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.steps = 0;
        loop {
            self.state = rng.random_range(0..self.mdp.n_states());
            if !self.mdp.is_terminal(self.state) {
                break;
            }
        }
        self.one_hot(self.state)
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Step {
        let reward = self.mdp.reward(self.state, action);
        let next = self.mdp.sample_next(self.state, action, rng);
        self.state = next;
        self.steps += 1;
        Step {
            obs: self.one_hot(next),
            reward,
            terminated: self.mdp.is_terminal(next),
            truncated: self.steps >= self.horizon,
        }
    }
}
