use rand::Rng as _;

use super::policy::GaussianPolicy;
use crate::adadqn::{AgentNetwork, HyperparamSet};
use crate::envs::Transition;
use crate::rng::Rng;
use crate::tinynn::{
    backward, forward, forward_trace, loss_and_grad, mlp_init, relative_gradient_error, Batch, MlpSpec, OptimizerConfig,
    OptimizerState, ParamVector,
};
use crate::{Error, LinearSchedule, Result};

/// Indices of the two smallest values, smaller first; ties resolve to the
/// lower index.
pub fn two_lowest(losses: &[f64]) -> (usize, usize) {
    assert!(losses.len() >= 2, "need at least two critics");
    let mut idx: Vec<usize> = (0..losses.len()).collect();
    idx.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    (idx[0], idx[1])
}

/// Uniform ordered pair of distinct indices below `k`.
pub fn distinct_pair(k: usize, rng: &mut Rng) -> (usize, usize) {
    let a = rng.random_range(0..k);
    let mut b = rng.random_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// `tau * online + (1 - tau) * target`, in place.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) {
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

/// Continuous-action minibatch.
pub struct ContinuousBatch {
    pub states: Batch,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Batch,
    pub dones: Vec<bool>,
}

impl ContinuousBatch {
    pub fn from_transitions(batch: &[&Transition<Vec<f64>>]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        Ok(Self {
            states: Batch::from_rows(&states)?,
            actions: batch.iter().flat_map(|t| t.action.iter().copied()).collect(),
            rewards: batch.iter().map(|t| t.reward).collect(),
            next_states: Batch::from_rows(&next)?,
            dones: batch.iter().map(|t| t.done).collect(),
        })
    }
}

/// Rows of `[state, action]`.
pub fn critic_input(states: &Batch, actions: &[f64]) -> Result<Batch> {
    let rows = states.rows();
    if rows == 0 || !actions.len().is_multiple_of(rows) {
        return Err(Error::DimensionMismatch { context: "critic actions", expected: rows, got: actions.len() });
    }
    let d = actions.len() / rows;
    let mut data = Vec::with_capacity(rows * (states.cols() + d));
    for r in 0..rows {
        data.extend_from_slice(states.row(r));
        data.extend_from_slice(&actions[r * d..(r + 1) * d]);
    }
    Batch::new(rows, states.cols() + d, data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SacConstants {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for SacConstants {
    fn default() -> Self {
        Self { gamma: 0.99, tau: 0.005, alpha: 0.2 }
    }
}

/// Actor-critic agent with `K` critics, per-critic Polyak targets and a
/// target built from the two critics with the smallest running loss.
#[derive(Clone, Debug)]
pub struct AdaSac {
    critics: Vec<AgentNetwork>,
    targets: Vec<ParamVector>,
    losses: Vec<f64>,
    pair: (usize, usize),
    policy: GaussianPolicy,
    actor: ParamVector,
    actor_opt: OptimizerState,
    consts: SacConstants,
    eps_b: LinearSchedule,
}

impl AdaSac {
    pub fn new(
        critic_hypers: Vec<HyperparamSet>,
        policy: GaussianPolicy,
        actor_optimizer: OptimizerConfig,
        consts: SacConstants,
        eps_b: LinearSchedule,
        init_rng: &mut Rng,
    ) -> Result<Self> {
        if critic_hypers.len() < 2 {
            return Err(Error::config("AdaSAC needs at least two critics"));
        }
        if !(0.0..1.0).contains(&consts.gamma) || !(consts.tau > 0.0 && consts.tau <= 1.0) || consts.alpha < 0.0 {
            return Err(Error::config("need gamma in [0, 1), tau in (0, 1], alpha >= 0"));
        }
        let in_dim = policy.spec.input_dim + policy.action_dim;
        for h in &critic_hypers {
            if h.spec.input_dim != in_dim || h.spec.output_dim != 1 {
                return Err(Error::config(format!("critics must map {in_dim} inputs to one value")));
            }
        }
        actor_optimizer.validate()?;
        let critics = critic_hypers
            .into_iter()
            .map(|h| AgentNetwork::new(h, init_rng))
            .collect::<Result<Vec<_>>>()?;
        let actor = mlp_init(&policy.spec, init_rng);
        let k = critics.len();
        Ok(Self {
            targets: critics.iter().map(|c| c.params.clone()).collect(),
            critics,
            losses: vec![0.0; k],
            pair: (0, 1),
            actor_opt: OptimizerState::new(actor_optimizer, actor.len()),
            actor,
            policy,
            consts,
            eps_b,
        })
    }

    pub fn critics(&self) -> &[AgentNetwork] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [AgentNetwork] {
        &mut self.critics
    }

    pub fn targets(&self) -> &[ParamVector] {
        &self.targets
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn actor_params(&self) -> &ParamVector {
        &self.actor
    }

    pub fn consts(&self) -> SacConstants {
        self.consts
    }

    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let noise = self.policy.draw_noise(1, rng);
        Ok(self.policy.sample(&self.actor, &Batch::single(obs), &noise)?.actions)
    }

    fn q_values(params: &[f64], spec: &MlpSpec, input: &Batch) -> Result<Vec<f64>> {
        Ok(forward(params, spec, input)?.into_data())
    }

    /// `y = r + gamma (1 - done) (min_{psi1, psi2} Qbar(s', a') - alpha log pi(a'|s'))`
    /// with `a'` freshly drawn from the current policy.
    pub fn sac_target(&self, batch: &ContinuousBatch, rng: &mut Rng) -> Result<Vec<f64>> {
        let rows = batch.next_states.rows();
        let noise = self.policy.draw_noise(rows, rng);
        let next = self.policy.sample(&self.actor, &batch.next_states, &noise)?;
        let input = critic_input(&batch.next_states, &next.actions)?;
        let (p1, p2) = self.pair;
        let q1 = Self::q_values(&self.targets[p1], &self.critics[p1].hyper.spec, &input)?;
        let q2 = Self::q_values(&self.targets[p2], &self.critics[p2].hyper.spec, &input)?;
        let SacConstants { gamma, alpha, .. } = self.consts;
        let y: Vec<f64> = (0..rows)
            .map(|r| {
                let soft = q1[r].min(q2[r]) - alpha * next.log_probs[r];
                if batch.dones[r] { batch.rewards[r] } else { batch.rewards[r] + gamma * soft }
            })
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic target".into()));
        }
        Ok(y)
    }

    /// Regression of every critic on the shared target, running-loss
    /// update, optimizer step and Polyak update, then re-selection of the
    /// target pair.
    pub fn critic_step(&mut self, batch: &ContinuousBatch, rng: &mut Rng) -> Result<()> {
        let y = self.sac_target(batch, rng)?;
        let input = critic_input(&batch.states, &batch.actions)?;
        let zeros = vec![0; y.len()];
        let tau = self.consts.tau;
        for ((c, target), l) in self.critics.iter_mut().zip(&mut self.targets).zip(&mut self.losses) {
            let lg = loss_and_grad(&c.params, &c.hyper.spec, &input, &zeros, &y, c.hyper.loss)?;
            *l = (1.0 - tau) * *l + tau * lg.l2_loss;
            c.cum_loss = *l;
            c.opt.step(&mut c.params, &lg.grad)?;
            polyak_update(target, &c.params, tau);
        }
        self.pair = two_lowest(&self.losses);
        Ok(())
    }

    /// Critic pair the actor trains against at step `t`.
    pub fn actor_pair(&self, t: u64, rng: &mut Rng) -> (usize, usize) {
        if rng.random::<f64>() < self.eps_b.value(t) {
            distinct_pair(self.critics.len(), rng)
        } else {
            self.pair
        }
    }

    /// Actor objective and gradient against the ONLINE critics in `pair`.
    pub fn actor_objective(&self, states: &Batch, noise: &[f64], pair: (usize, usize)) -> Result<(f64, ParamVector)> {
        let d = self.policy.action_dim;
        let obs_dim = states.cols();
        let (c1, c2) = (&self.critics[pair.0], &self.critics[pair.1]);
        self.policy.objective_and_grad(&self.actor, states, noise, self.consts.alpha, |actions| {
            let input = critic_input(states, actions)?;
            let rows = states.rows();
            let t1 = forward_trace(&c1.params, &c1.hyper.spec, &input)?;
            let t2 = forward_trace(&c2.params, &c2.hyper.spec, &input)?;
            let (q1, q2) = (t1.output(), t2.output());
            let q: Vec<f64> = (0..rows).map(|r| q1[r].min(q2[r])).collect();
            // Each row's min comes from one critic; route the unit gradient there.
            let d1: Vec<f64> = (0..rows).map(|r| if q1[r] <= q2[r] { 1.0 } else { 0.0 }).collect();
            let d2: Vec<f64> = d1.iter().map(|v| 1.0 - v).collect();
            let mut dq_da = vec![0.0; rows * d];
            for (c, trace, dout) in [(c1, &t1, &d1), (c2, &t2, &d2)] {
                let mut scratch = vec![0.0; c.params.len()];
                let dx = backward(&c.params, &c.hyper.spec, trace, dout, &mut scratch, true)?.expect("input gradient requested");
                for r in 0..rows {
                    for j in 0..d {
                        dq_da[r * d + j] += dx[r * (obs_dim + d) + obs_dim + j];
                    }
                }
            }
            Ok((q, dq_da))
        })
    }

    /// One actor update; returns the critic pair used.
    pub fn actor_step(&mut self, states: &Batch, t: u64, behavior_rng: &mut Rng, policy_rng: &mut Rng) -> Result<(usize, usize)> {
        let pair = self.actor_pair(t, behavior_rng);
        let noise = self.policy.draw_noise(states.rows(), policy_rng);
        let (_, grad) = self.actor_objective(states, &noise, pair)?;
        self.actor_opt.step(&mut self.actor, &grad)?;
        Ok(pair)
    }
}

/// Relative error of the actor gradient against central differences, on a
/// small random agent with two tanh critics.
pub fn check_actor_gradient(rng: &mut Rng) -> Result<f64> {
    let (obs_dim, act_dim, rows) = (3, 2, 6);
    let critic = HyperparamSet {
        spec: MlpSpec::new(obs_dim + act_dim, vec![7], 1, crate::tinynn::Activation::Tanh)?,
        loss: crate::tinynn::LossKind::L2,
        optimizer: OptimizerConfig::adam(1e-3),
        discount: None,
    };
    let policy = GaussianPolicy::new(obs_dim, vec![6], act_dim, 2.0, crate::tinynn::Activation::Tanh)?;
    let agent = AdaSac::new(
        vec![critic.clone(), critic],
        policy,
        OptimizerConfig::adam(1e-3),
        SacConstants::default(),
        LinearSchedule::constant(0.0),
        rng,
    )?;
    let data: Vec<f64> = (0..rows * obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let states = Batch::new(rows, obs_dim, data)?;
    let noise = agent.policy.draw_noise(rows, rng);
    let (_, grad) = agent.actor_objective(&states, &noise, (0, 1))?;
    let mut probe = agent.clone();
    relative_gradient_error(&agent.actor, &grad, 1e-6, |p| {
        probe.actor = ParamVector::from_vec(p.to_vec());
        Ok(probe.actor_objective(&states, &noise, (0, 1))?.0)
    })
}
