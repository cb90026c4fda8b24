use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::Transition;
use crate::harness::SelectionEvent;
use crate::rng::Rng;
use crate::tinynn::{
    forward, loss_and_grad, mlp_init, Batch, LossKind, MlpSpec, OptimizerConfig, OptimizerState,
    ParamVector,
};
use crate::{argmax, argmin, Error, LinearSchedule, Result};

/// Everything that distinguishes one ensemble member from another.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSet {
    pub spec: MlpSpec,
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    /// Member-specific discount; `None` trains with the shared one.
    pub discount: Option<f64>,
}

impl HyperparamSet {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if let Some(g) = self.discount {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::config(format!("member discount must lie in [0, 1), got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct AgentNetwork {
    pub hyper: HyperparamSet,
    pub params: ParamVector,
    pub opt: OptimizerState,
    /// Sum of the squared-error losses since the last target update.
    pub cum_loss: f64,
}

impl AgentNetwork {
    pub fn new(hyper: HyperparamSet, rng: &mut Rng) -> Result<Self> {
        hyper.validate()?;
        let params = mlp_init(&hyper.spec, rng);
        Ok(Self::with_params(hyper, params))
    }

    pub fn with_params(hyper: HyperparamSet, params: ParamVector) -> Self {
        let opt = OptimizerState::new(hyper.optimizer, params.len());
        Self { hyper, params, opt, cum_loss: 0.0 }
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(forward(&self.params, &self.hyper.spec, &Batch::single(obs))?.into_data())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Smallest accumulated loss becomes the target.
    #[default]
    Argmin,
    /// Largest accumulated loss (ablation).
    Argmax,
    /// Uniformly random member (ablation).
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorMode {
    /// Uniform member with probability `eps_b(t)`, the target's twin otherwise.
    #[default]
    EpsilonB,
    /// Always act with the target's twin.
    AlwaysPsi,
    /// Sample members with probability inversely proportional to their loss.
    LossProportional,
}

/// Epsilon-greedy over `qvals`; greedy ties go to the lowest action.
pub fn act_epsilon_greedy(qvals: &[f64], epsilon: f64, rng: &mut Rng) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..qvals.len())
    } else {
        argmax(qvals)
    }
}

/// `max_a' Q(s', a')` for every row of `next_states`.
pub fn target_max_next(params: &[f64], spec: &MlpSpec, next_states: &Batch) -> Result<Vec<f64>> {
    let out = forward(params, spec, next_states)?;
    let maxes: Vec<f64> = (0..out.rows())
        .map(|b| out.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    if let Some(i) = maxes.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("target network output for sample {i} is {}", maxes[i])));
    }
    Ok(maxes)
}

/// `y = r + gamma * (1 - done) * max_next`.
pub fn bellman_targets(rewards: &[f64], dones: &[bool], max_next: &[f64], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(max_next)
        .map(|((&r, &d), &m)| if d { r } else { r + gamma * m })
        .collect()
}

/// A sampled minibatch in column form.
pub struct SampledBatch {
    pub states: Batch,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Batch,
    pub dones: Vec<bool>,
}

impl SampledBatch {
    pub fn from_transitions(batch: &[&Transition]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        Ok(Self {
            states: Batch::from_rows(&states)?,
            actions: batch.iter().map(|t| t.action).collect(),
            rewards: batch.iter().map(|t| t.reward).collect(),
            next_states: Batch::from_rows(&next)?,
            dones: batch.iter().map(|t| t.done).collect(),
        })
    }
}

/// Ensemble of Q-networks trained on one shared, adaptively chosen target.
#[derive(Clone, Debug)]
pub struct AdaDqn {
    networks: Vec<AgentNetwork>,
    target_params: ParamVector,
    target_spec: MlpSpec,
    psi: usize,
    gamma: f64,
    selection: SelectionMode,
    behavior: BehaviorMode,
    eps_b: LinearSchedule,
    behavior_counts: Vec<u64>,
    last_losses: Vec<f64>,
}

impl AdaDqn {
    /// Initializes the members in order from `init_rng`; the target starts
    /// as a copy of member 0.
    pub fn new(
        hypers: Vec<HyperparamSet>,
        gamma: f64,
        selection: SelectionMode,
        behavior: BehaviorMode,
        eps_b: LinearSchedule,
        init_rng: &mut Rng,
    ) -> Result<Self> {
        let networks = hypers
            .into_iter()
            .map(|h| AgentNetwork::new(h, init_rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_networks(networks, gamma, selection, behavior, eps_b)
    }

    pub fn from_networks(
        networks: Vec<AgentNetwork>,
        gamma: f64,
        selection: SelectionMode,
        behavior: BehaviorMode,
        eps_b: LinearSchedule,
    ) -> Result<Self> {
        let first = networks.first().ok_or(Error::Empty("ensemble"))?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("discount must lie in [0, 1), got {gamma}")));
        }
        let (inp, out) = (first.hyper.spec.input_dim, first.hyper.spec.output_dim);
        for n in &networks {
            n.hyper.validate()?;
            if n.hyper.spec.input_dim != inp || n.hyper.spec.output_dim != out {
                return Err(Error::config("all members must share input and output dims"));
            }
        }
        let k = networks.len();
        Ok(Self {
            target_params: first.params.clone(),
            target_spec: first.hyper.spec.clone(),
            networks,
            psi: 0,
            gamma,
            selection,
            behavior,
            eps_b,
            behavior_counts: vec![0; k],
            last_losses: vec![0.0; k],
        })
    }

    pub fn len(&self) -> usize {
        self.networks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.networks.is_empty()
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn networks(&self) -> &[AgentNetwork] {
        &self.networks
    }

    pub fn target_params(&self) -> &ParamVector {
        &self.target_params
    }

    pub fn target_spec(&self) -> &MlpSpec {
        &self.target_spec
    }

    pub fn cum_losses(&self) -> Vec<f64> {
        self.networks.iter().map(|n| n.cum_loss).collect()
    }

    pub fn behavior_counts(&self) -> &[u64] {
        &self.behavior_counts
    }

    /// Squared-error loss of each member on the most recent batch.
    pub fn last_losses(&self) -> &[f64] {
        &self.last_losses
    }

    /// Swaps in a new population of the same size. The frozen target is
    /// kept; accumulated losses restart from zero.
    pub fn replace_networks(&mut self, networks: Vec<AgentNetwork>) -> Result<()> {
        if networks.len() != self.networks.len() {
            return Err(Error::DimensionMismatch {
                context: "replacement population",
                expected: self.networks.len(),
                got: networks.len(),
            });
        }
        self.networks = networks;
        for n in &mut self.networks {
            n.cum_loss = 0.0;
        }
        self.last_losses.iter_mut().for_each(|l| *l = 0.0);
        Ok(())
    }

    /// Chooses which member acts at step `t` and counts the choice.
    pub fn select_behavior_index(&mut self, t: u64, rng: &mut Rng) -> usize {
        let k = self.networks.len();
        let idx = match self.behavior {
            BehaviorMode::AlwaysPsi => self.psi,
            BehaviorMode::EpsilonB => {
                if rng.random::<f64>() < self.eps_b.value(t) {
                    rng.random_range(0..k)
                } else {
                    self.psi
                }
            }
            BehaviorMode::LossProportional => {
                crate::evo::loss_proportional_behavior(&self.last_losses, rng)
            }
        };
        self.behavior_counts[idx] += 1;
        idx
    }

    pub fn act(&mut self, obs: &[f64], t: u64, epsilon: f64, behavior_rng: &mut Rng, explore_rng: &mut Rng) -> Result<usize> {
        let b = self.select_behavior_index(t, behavior_rng);
        let q = self.networks[b].q_values(obs)?;
        Ok(act_epsilon_greedy(&q, epsilon, explore_rng))
    }

    /// One gradient step for every member on the same batch and target.
    pub fn train_step(&mut self, batch: &SampledBatch) -> Result<()> {
        let max_next = target_max_next(&self.target_params, &self.target_spec, &batch.next_states)?;
        let shared = bellman_targets(&batch.rewards, &batch.dones, &max_next, self.gamma);
        for (k, net) in self.networks.iter_mut().enumerate() {
            let own;
            let targets = match net.hyper.discount {
                Some(g) if g != self.gamma => {
                    own = bellman_targets(&batch.rewards, &batch.dones, &max_next, g);
                    &own
                }
                _ => &shared,
            };
            let lg = loss_and_grad(&net.params, &net.hyper.spec, &batch.states, &batch.actions, targets, net.hyper.loss)?;
            // Selection always compares squared errors against the shared
            // discount, whatever each member trains on.
            let l2 = if std::ptr::eq(targets, &shared) {
                lg.l2_loss
            } else {
                let n = shared.len() as f64;
                shared.iter().zip(&lg.predictions).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n
            };
            net.cum_loss += l2;
            self.last_losses[k] = l2;
            net.opt.step(&mut net.params, &lg.grad)?;
        }
        Ok(())
    }

    /// Picks the next target, resets the accumulated losses and freezes a
    /// copy of the chosen member.
    pub fn target_update(&mut self, step: u64, rng: &mut Rng) -> SelectionEvent {
        let losses = self.cum_losses();
        self.psi = match self.selection {
            SelectionMode::Argmin => argmin(&losses),
            SelectionMode::Argmax => argmax(&losses),
            SelectionMode::Uniform => rng.random_range(0..self.networks.len()),
        };
        for n in &mut self.networks {
            n.cum_loss = 0.0;
        }
        let chosen = &self.networks[self.psi];
        self.target_params = chosen.params.clone();
        self.target_spec = chosen.hyper.spec.clone();
        let counts = std::mem::replace(&mut self.behavior_counts, vec![0; self.networks.len()]);
        SelectionEvent { step, selected: vec![self.psi], losses, behavior_counts: counts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tinynn::Activation;

    fn hyper(hidden: Vec<usize>) -> HyperparamSet {
        HyperparamSet {
            spec: MlpSpec::new(2, hidden, 2, Activation::Relu).unwrap(),
            loss: LossKind::L2,
            optimizer: OptimizerConfig::adam(1e-3),
            discount: None,
        }
    }

    fn agent(k: usize, behavior: BehaviorMode, eps_b: LinearSchedule) -> AdaDqn {
        let mut r = rng::stream(0, 0, rng::INIT);
        AdaDqn::new(vec![hyper(vec![4]); k], 0.9, SelectionMode::Argmin, behavior, eps_b, &mut r).unwrap()
    }

    fn batch(n: usize, seed: u64) -> SampledBatch {
        let mut r = rng::stream(seed, 0, "batch");
        let ts: Vec<Transition> = (0..n)
            .map(|i| Transition {
                state: vec![r.random(), r.random()],
                action: i % 2,
                reward: r.random(),
                next_state: vec![r.random(), r.random()],
                done: i % 5 == 0,
            })
            .collect();
        SampledBatch::from_transitions(&ts.iter().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn greedy_and_ties() {
        let mut r = rng::stream(0, 0, rng::EXPLORE);
        assert_eq!(act_epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut r), 1);
        assert_eq!(act_epsilon_greedy(&[5.0, 5.0], 0.0, &mut r), 0);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut r = rng::stream(1, 0, rng::EXPLORE);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[act_epsilon_greedy(&[0.0, 9.0, 0.0, 0.0], 1.0, &mut r)] += 1;
        }
        let (p, sd) = (0.25, (n as f64 * 0.25 * 0.75).sqrt());
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn behavior_index_rules() {
        let mut r = rng::stream(0, 0, rng::BEHAVIOR);
        let mut a = agent(3, BehaviorMode::EpsilonB, LinearSchedule::constant(0.0));
        assert!((0..100).all(|t| a.select_behavior_index(t, &mut r) == 0));
        let mut a = agent(1, BehaviorMode::EpsilonB, LinearSchedule::constant(1.0));
        assert!((0..100).all(|t| a.select_behavior_index(t, &mut r) == 0));
        let mut a = agent(4, BehaviorMode::EpsilonB, LinearSchedule::constant(1.0));
        let n = 10_000;
        for t in 0..n {
            a.select_behavior_index(t, &mut r);
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for &c in a.behavior_counts() {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn target_formula() {
        assert_eq!(bellman_targets(&[1.0], &[true], &[2.0], 0.99), vec![1.0]);
        assert!((bellman_targets(&[1.0], &[false], &[2.0], 0.99)[0] - 2.98).abs() < 1e-15);
        assert_eq!(bellman_targets(&[1.0, 2.0], &[false, false], &[5.0, 7.0], 0.0), vec![1.0, 2.0]);
    }

    #[test]
    fn selection_modes() {
        let mut a = agent(3, BehaviorMode::EpsilonB, LinearSchedule::constant(0.0));
        let mut r = rng::stream(0, 0, rng::SELECTION);
        for (n, l) in a.networks.iter_mut().zip([3.2, 1.1, 5.0]) {
            n.cum_loss = l;
        }
        let ev = a.target_update(10, &mut r);
        assert_eq!((a.psi(), ev.selected.clone()), (1, vec![1]));
        assert_eq!(ev.losses, vec![3.2, 1.1, 5.0]);
        assert!(a.cum_losses().iter().all(|&l| l == 0.0));
        assert_eq!(a.target_params(), &a.networks[1].params);

        a.selection = SelectionMode::Argmax;
        for (n, l) in a.networks.iter_mut().zip([3.2, 1.1, 5.0]) {
            n.cum_loss = l;
        }
        a.target_update(20, &mut r);
        assert_eq!(a.psi(), 2);

        let mut a = agent(2, BehaviorMode::EpsilonB, LinearSchedule::constant(0.0));
        for n in &mut a.networks {
            n.cum_loss = 2.0;
        }
        a.target_update(0, &mut r);
        assert_eq!(a.psi(), 0);
    }

    #[test]
    fn identical_members_stay_identical_and_losses_grow() {
        let mut a = agent(1, BehaviorMode::EpsilonB, LinearSchedule::constant(0.0));
        let twin = a.networks[0].clone();
        a.networks.push(twin);
        a.last_losses.push(0.0);
        a.behavior_counts.push(0);
        let mut prev = 0.0;
        for s in 0..20 {
            a.train_step(&batch(8, s)).unwrap();
            let l = a.cum_losses();
            assert_eq!(l[0], l[1]);
            assert!(l[0] > prev);
            prev = l[0];
        }
        assert_eq!(a.networks[0].params, a.networks[1].params);
    }

    #[test]
    fn member_order_does_not_matter() {
        let mut r = rng::stream(5, 0, rng::INIT);
        let mut h2 = hyper(vec![6, 3]);
        h2.loss = LossKind::Huber { delta: 1.0 };
        h2.discount = Some(0.8);
        let nets = vec![
            AgentNetwork::new(hyper(vec![4]), &mut r).unwrap(),
            AgentNetwork::new(h2, &mut r).unwrap(),
            AgentNetwork::new(hyper(vec![8]), &mut r).unwrap(),
        ];
        let sched = LinearSchedule::constant(0.0);
        let mut a = AdaDqn::from_networks(nets.clone(), 0.9, SelectionMode::Argmin, BehaviorMode::EpsilonB, sched).unwrap();
        let perm = vec![nets[0].clone(), nets[2].clone(), nets[1].clone()];
        let mut b = AdaDqn::from_networks(perm, 0.9, SelectionMode::Argmin, BehaviorMode::EpsilonB, sched).unwrap();
        for s in 0..10 {
            a.train_step(&batch(16, s)).unwrap();
            b.train_step(&batch(16, s)).unwrap();
        }
        for (i, j) in [(0, 0), (1, 2), (2, 1)] {
            assert_eq!(a.networks[i].params, b.networks[j].params);
            assert_eq!(a.networks[i].cum_loss.to_bits(), b.networks[j].cum_loss.to_bits());
        }
    }

    #[test]
    fn own_discount_trains_but_selection_uses_shared() {
        let mut r = rng::stream(6, 0, rng::INIT);
        let base = AgentNetwork::new(hyper(vec![4]), &mut r).unwrap();
        let mut other = base.clone();
        other.hyper.discount = Some(0.5);
        let sched = LinearSchedule::constant(0.0);
        let mut a = AdaDqn::from_networks(vec![base, other], 0.9, SelectionMode::Argmin, BehaviorMode::EpsilonB, sched).unwrap();
        a.train_step(&batch(16, 0)).unwrap();
        let l = a.cum_losses();
        // Same parameters before the step, same shared target: same loss.
        assert_eq!(l[0], l[1]);
        // Different regression targets: different updates.
        assert_ne!(a.networks[0].params, a.networks[1].params);
    }

    #[test]
    fn non_finite_target_aborts() {
        let mut a = agent(1, BehaviorMode::EpsilonB, LinearSchedule::constant(0.0));
        a.target_params.iter_mut().for_each(|p| *p = f64::NAN);
        let b = batch(4, 0);
        assert!(matches!(a.train_step(&b), Err(Error::NonFinite(_))));
    }
}
