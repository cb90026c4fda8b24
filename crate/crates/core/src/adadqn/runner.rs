use serde::{Deserialize, Serialize};

use super::agent::{AdaDqn, BehaviorMode, HyperparamSet, SampledBatch, SelectionMode};
use super::dqn::Dqn;
use crate::envs::{random_mdp, CartPoleEnv, DiscreteEnv, ReplayBuffer, TabularEnv, Transition, CARTPOLE_MAX_STEPS};
use crate::harness::{Checkpoint, EpisodeEnd, RecordHeader, ReturnTracker, RunRecord, SelectionEvent};
use crate::rng::{self, Rng, RngStreams};
use crate::tinynn::{Activation, LossKind, MlpSpec, OptimizerConfig, OptimizerKind};
use crate::{Error, LinearSchedule, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    CartPole {
        #[serde(default = "default_cartpole_steps")]
        max_steps: usize,
    },
    /// Random finite MDP with one-hot observations.
    Tabular {
        n_states: usize,
        n_actions: usize,
        branching: usize,
        #[serde(default = "one")]
        reward_scale: f64,
        horizon: usize,
        #[serde(default)]
        mdp_seed: u64,
    },
}

fn default_cartpole_steps() -> usize {
    CARTPOLE_MAX_STEPS
}

fn one() -> f64 {
    1.0
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::CartPole { max_steps: CARTPOLE_MAX_STEPS }
    }
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::CartPole { .. } => "cartpole",
            EnvConfig::Tabular { .. } => "tabular",
        }
    }

    /// `gamma` only matters for the tabular model's own bookkeeping.
    pub fn make(&self, gamma: f64) -> Result<Box<dyn DiscreteEnv + Send>> {
        Ok(match *self {
            EnvConfig::CartPole { max_steps } => {
                if max_steps == 0 {
                    return Err(Error::config("cart-pole max_steps must be >= 1"));
                }
                Box::new(CartPoleEnv::new(max_steps))
            }
            EnvConfig::Tabular { n_states, n_actions, branching, reward_scale, horizon, mdp_seed } => {
                let mut r = rng::stream(mdp_seed, 0, "tabular-env-mdp");
                let mdp = random_mdp(n_states, n_actions, branching, reward_scale, gamma, &mut r)?;
                Box::new(TabularEnv::new(mdp, horizon))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub discount: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            activation: Activation::Relu,
            loss: LossKind::L2,
            optimizer: OptimizerKind::Adam { eps: 1e-8 },
            learning_rate: 3e-4,
            discount: None,
        }
    }
}

impl NetworkConfig {
    pub fn with_hidden(hidden_layers: Vec<usize>) -> Self {
        Self { hidden_layers, ..Self::default() }
    }

    pub fn hyperparams(&self, obs_dim: usize, n_actions: usize) -> Result<HyperparamSet> {
        let h = HyperparamSet {
            spec: MlpSpec::new(obs_dim, self.hidden_layers.clone(), n_actions, self.activation)?,
            loss: self.loss,
            optimizer: OptimizerConfig::new(self.optimizer, self.learning_rate)?,
            discount: self.discount,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Linear schedule whose duration defaults to the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub duration: Option<u64>,
}

impl ScheduleConfig {
    pub fn resolve(&self, total_steps: u64) -> LinearSchedule {
        LinearSchedule::new(self.start, self.end, self.duration.unwrap_or(total_steps))
    }

    pub(crate) fn validate(&self, what: &str) -> Result<()> {
        for v in [self.start, self.end] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{what} schedule values must lie in [0, 1], got {v}")));
            }
        }
        if self.duration == Some(0) {
            return Err(Error::config(format!("{what} schedule duration must be >= 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Adadqn,
    /// Single-network reference implementation.
    Dqn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaDqnConfig {
    /// Label written into run records.
    pub name: String,
    pub algorithm: Algorithm,
    pub env: EnvConfig,
    pub networks: Vec<NetworkConfig>,
    pub gamma: f64,
    pub total_steps: u64,
    pub initial_replay: usize,
    pub buffer_size: usize,
    pub batch_size: usize,
    /// `T`: environment steps between target updates.
    pub target_update_period: u64,
    /// `G`: environment steps between gradient steps.
    pub train_frequency: u64,
    pub epsilon: ScheduleConfig,
    pub epsilon_b: ScheduleConfig,
    pub selection_mode: SelectionMode,
    pub behavior_mode: BehaviorMode,
    pub checkpoint_every: u64,
}

impl Default for AdaDqnConfig {
    fn default() -> Self {
        Self {
            name: "adadqn".into(),
            algorithm: Algorithm::Adadqn,
            env: EnvConfig::default(),
            networks: vec![NetworkConfig::default()],
            gamma: 0.99,
            total_steps: 100_000,
            initial_replay: 1000,
            buffer_size: 10_000,
            batch_size: 32,
            target_update_period: 200,
            train_frequency: 1,
            epsilon: ScheduleConfig { start: 1.0, end: 0.01, duration: Some(1000) },
            epsilon_b: ScheduleConfig { start: 1.0, end: 0.01, duration: None },
            selection_mode: SelectionMode::Argmin,
            behavior_mode: BehaviorMode::EpsilonB,
            checkpoint_every: 1000,
        }
    }
}

impl AdaDqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.networks.is_empty() {
            return Err(Error::config("at least one network is required"));
        }
        if self.algorithm == Algorithm::Dqn && self.networks.len() != 1 {
            return Err(Error::config("the dqn algorithm takes exactly one network"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        for (name, v) in [
            ("total_steps", self.total_steps),
            ("buffer_size", self.buffer_size as u64),
            ("batch_size", self.batch_size as u64),
            ("target_update_period", self.target_update_period),
            ("train_frequency", self.train_frequency),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.initial_replay > self.buffer_size {
            return Err(Error::config("initial_replay exceeds buffer_size"));
        }
        self.epsilon.validate("epsilon")?;
        self.epsilon_b.validate("epsilon_b")?;
        let env = self.env.make(self.gamma)?;
        for n in &self.networks {
            n.hyperparams(env.obs_dim(), env.n_actions())?;
        }
        Ok(())
    }
}

/// Minimal interface the training loop needs from a value-based agent.
pub trait ValueAgent {
    fn act(&mut self, obs: &[f64], t: u64, epsilon: f64, behavior_rng: &mut Rng, explore_rng: &mut Rng) -> Result<usize>;
    fn train(&mut self, batch: &SampledBatch) -> Result<()>;
    fn update_target(&mut self, step: u64, rng: &mut Rng) -> SelectionEvent;
    fn members(&self) -> usize;
    fn member_params(&self, k: usize) -> &[f64];
}

impl ValueAgent for AdaDqn {
    fn act(&mut self, obs: &[f64], t: u64, epsilon: f64, behavior_rng: &mut Rng, explore_rng: &mut Rng) -> Result<usize> {
        AdaDqn::act(self, obs, t, epsilon, behavior_rng, explore_rng)
    }

    fn train(&mut self, batch: &SampledBatch) -> Result<()> {
        self.train_step(batch)
    }

    fn update_target(&mut self, step: u64, rng: &mut Rng) -> SelectionEvent {
        self.target_update(step, rng)
    }

    fn members(&self) -> usize {
        self.len()
    }

    fn member_params(&self, k: usize) -> &[f64] {
        &self.networks()[k].params
    }
}

impl ValueAgent for Dqn {
    fn act(&mut self, obs: &[f64], _t: u64, epsilon: f64, _behavior_rng: &mut Rng, explore_rng: &mut Rng) -> Result<usize> {
        Dqn::act(self, obs, epsilon, explore_rng)
    }

    fn train(&mut self, batch: &SampledBatch) -> Result<()> {
        self.train_step(batch)
    }

    fn update_target(&mut self, step: u64, _rng: &mut Rng) -> SelectionEvent {
        self.target_update(step)
    }

    fn members(&self) -> usize {
        1
    }

    fn member_params(&self, _k: usize) -> &[f64] {
        self.params()
    }
}

/// Builds the agent described by `cfg`, drawing its initialization from the
/// run's init stream.
pub fn build_agent(cfg: &AdaDqnConfig, obs_dim: usize, n_actions: usize, streams: &RngStreams) -> Result<Box<dyn ValueAgent>> {
    let mut init = streams.stream(rng::INIT);
    let hypers = cfg
        .networks
        .iter()
        .map(|n| n.hyperparams(obs_dim, n_actions))
        .collect::<Result<Vec<_>>>()?;
    Ok(match cfg.algorithm {
        Algorithm::Adadqn => Box::new(AdaDqn::new(
            hypers,
            cfg.gamma,
            cfg.selection_mode,
            cfg.behavior_mode,
            cfg.epsilon_b.resolve(cfg.total_steps),
            &mut init,
        )?),
        Algorithm::Dqn => {
            let h = hypers.into_iter().next().expect("validated");
            Box::new(Dqn::new(h.spec, h.loss, h.optimizer, cfg.gamma, &mut init)?)
        }
    })
}

/// Runs the full training loop. `probe` sees the agent after every
/// environment step.
pub fn run_training_with_probe(
    cfg: &AdaDqnConfig,
    seed: u64,
    run_index: u64,
    probe: &mut dyn FnMut(u64, &dyn ValueAgent),
) -> Result<RunRecord> {
    cfg.validate()?;
    let streams = RngStreams::new(seed, run_index);
    let mut env = cfg.env.make(cfg.gamma)?;
    let mut agent = build_agent(cfg, env.obs_dim(), env.n_actions(), &streams)?;
    let mut env_rng = streams.stream(rng::ENV);
    let mut explore_rng = streams.stream(rng::EXPLORE);
    let mut buffer_rng = streams.stream(rng::BUFFER);
    let mut behavior_rng = streams.stream(rng::BEHAVIOR);
    let mut selection_rng = streams.stream(rng::SELECTION);

    let mut header = RecordHeader::new("adadqn", &cfg.name, cfg.env.name(), seed, agent.members());
    header.run_index = run_index;
    let mut record = RunRecord::new(header);
    let epsilon = cfg.epsilon.resolve(cfg.total_steps);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size);
    let mut tracker = ReturnTracker::default();
    let mut obs = env.reset(&mut env_rng);

    for t in 0..cfg.total_steps {
        let action = agent.act(&obs, t, epsilon.value(t), &mut behavior_rng, &mut explore_rng)?;
        let step = env.step(action, &mut env_rng);
        tracker.add_reward(step.reward);
        let over = step.episode_over();
        buffer.push(Transition {
            state: std::mem::replace(&mut obs, step.obs.clone()),
            action,
            reward: step.reward,
            next_state: step.obs,
            done: step.terminated,
        });
        let n = t + 1;
        if over {
            let ret = tracker.end_episode();
            record.episodes.push(EpisodeEnd { step: n, ret });
            obs = env.reset(&mut env_rng);
        }
        record.ledger.train_env_steps += 1;
        if buffer.len() >= cfg.initial_replay.max(1) && n % cfg.train_frequency == 0 {
            let sampled = buffer.sample(cfg.batch_size, &mut buffer_rng)?;
            agent.train(&SampledBatch::from_transitions(&sampled)?)?;
            record.ledger.gradient_steps += 1;
        }
        if n % cfg.target_update_period == 0 {
            record.selections.push(agent.update_target(n, &mut selection_rng));
        }
        if n % cfg.checkpoint_every == 0 {
            record.checkpoints.push(Checkpoint { step: n, value: tracker.checkpoint() });
        }
        probe(n, agent.as_ref());
    }
    Ok(record)
}

pub fn run_training(cfg: &AdaDqnConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    run_training_with_probe(cfg, seed, run_index, &mut |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tabular_cfg() -> AdaDqnConfig {
        AdaDqnConfig {
            env: EnvConfig::Tabular { n_states: 5, n_actions: 2, branching: 2, reward_scale: 1.0, horizon: 50, mdp_seed: 1 },
            networks: vec![NetworkConfig::with_hidden(vec![8]), NetworkConfig::with_hidden(vec![16])],
            gamma: 0.9,
            total_steps: 10_000,
            initial_replay: 100,
            checkpoint_every: 500,
            ..AdaDqnConfig::default()
        }
    }

    #[test]
    fn table_defaults_accepted_on_cartpole() {
        let cfg = AdaDqnConfig::default();
        assert_eq!((cfg.train_frequency, cfg.target_update_period, cfg.gamma), (1, 200, 0.99));
        cfg.validate().unwrap();
    }

    #[test]
    fn tabular_smoke_counts_selections() {
        let cfg = tabular_cfg();
        let rec = run_training(&cfg, 3, 0).unwrap();
        assert_eq!(rec.selections.len() as u64, 10_000 / cfg.target_update_period);
        assert_eq!(rec.checkpoints.len(), 20);
        assert_eq!(rec.ledger.train_env_steps, 10_000);
        assert_eq!(rec.ledger.gradient_steps, 10_000 - 99);
        let acted: u64 = rec.selections.iter().flat_map(|s| s.behavior_counts.iter()).sum();
        assert_eq!(acted, 10_000);
    }

    #[test]
    fn seed_determinism() {
        let mut cfg = tabular_cfg();
        cfg.total_steps = 2000;
        assert_eq!(run_training(&cfg, 9, 0).unwrap(), run_training(&cfg, 9, 0).unwrap());
        assert_ne!(run_training(&cfg, 9, 0).unwrap(), run_training(&cfg, 10, 0).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = tabular_cfg();
        cfg.networks.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = tabular_cfg();
        cfg.algorithm = Algorithm::Dqn;
        assert!(cfg.validate().is_err());
        let mut cfg = tabular_cfg();
        cfg.target_update_period = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tabular_cfg();
        cfg.networks[0].learning_rate = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<AdaDqnConfig>(r#"{"gama": 0.5}"#);
        assert!(err.is_err());
        let ok: AdaDqnConfig = serde_json::from_str(r#"{"gamma": 0.5, "env": {"kind": "cart_pole"}}"#).unwrap();
        assert_eq!(ok.gamma, 0.5);
    }
}
