use rand::Rng as _;

use crate::harness::SelectionEvent;
use crate::rng::Rng;
use crate::tinynn::{forward, loss_and_grad, mlp_init, Batch, LossKind, MlpSpec, OptimizerConfig, OptimizerState, ParamVector};
use crate::Result;

use super::agent::SampledBatch;

/// Plain single-network DQN, kept free of any ensemble machinery so that it
/// can serve as the reference the one-member ensemble must reproduce.
#[derive(Clone, Debug)]
pub struct Dqn {
    spec: MlpSpec,
    loss: LossKind,
    gamma: f64,
    params: ParamVector,
    target: ParamVector,
    opt: OptimizerState,
    cum_loss: f64,
    acted: u64,
}

impl Dqn {
    pub fn new(spec: MlpSpec, loss: LossKind, optimizer: OptimizerConfig, gamma: f64, init_rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        loss.validate()?;
        optimizer.validate()?;
        let params = mlp_init(&spec, init_rng);
        let opt = OptimizerState::new(optimizer, params.len());
        Ok(Self { target: params.clone(), spec, loss, gamma, params, opt, cum_loss: 0.0, acted: 0 })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn target(&self) -> &ParamVector {
        &self.target
    }

    pub fn act(&mut self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        self.acted += 1;
        let q = forward(&self.params, &self.spec, &Batch::single(obs))?.into_data();
        if rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..q.len()));
        }
        let mut best = 0;
        for a in 1..q.len() {
            if q[a] > q[best] {
                best = a;
            }
        }
        Ok(best)
    }

    pub fn train_step(&mut self, batch: &SampledBatch) -> Result<()> {
        let next_q = forward(&self.target, &self.spec, &batch.next_states)?;
        let mut targets = Vec::with_capacity(batch.rewards.len());
        for b in 0..next_q.rows() {
            let m = next_q.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(crate::Error::NonFinite(format!("target network output for sample {b} is {m}")));
            }
            let bootstrap = if batch.dones[b] { 0.0 } else { self.gamma * m };
            targets.push(batch.rewards[b] + bootstrap);
        }
        let lg = loss_and_grad(&self.params, &self.spec, &batch.states, &batch.actions, &targets, self.loss)?;
        self.cum_loss += lg.l2_loss;
        self.opt.step(&mut self.params, &lg.grad)
    }

    pub fn target_update(&mut self, step: u64) -> SelectionEvent {
        self.target = self.params.clone();
        let loss = std::mem::take(&mut self.cum_loss);
        let acted = std::mem::take(&mut self.acted);
        SelectionEvent { step, selected: vec![0], losses: vec![loss], behavior_counts: vec![acted] }
    }
}
