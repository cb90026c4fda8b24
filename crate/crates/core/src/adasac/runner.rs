use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::agent::{AdaSac, ContinuousBatch, SacConstants};
use super::policy::GaussianPolicy;
use crate::adadqn::{NetworkConfig, ScheduleConfig};
use crate::envs::{PendulumEnv, ReplayBuffer, Transition, MAX_TORQUE, PENDULUM_HORIZON};
use crate::harness::{Checkpoint, EpisodeEnd, RecordHeader, ReturnTracker, RunRecord, SelectionEvent};
use crate::rng::{self, RngStreams};
use crate::tinynn::{Activation, OptimizerConfig, OptimizerKind};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActorConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam { eps: 1e-8 },
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaSacConfig {
    pub name: String,
    /// Pendulum episode length.
    pub horizon: usize,
    pub critics: Vec<NetworkConfig>,
    pub actor: ActorConfig,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    /// Critic updates per environment step.
    pub utd: usize,
    pub total_steps: u64,
    /// Uniform-random actions until the buffer holds this many transitions.
    pub initial_replay: usize,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub epsilon_b: ScheduleConfig,
    pub checkpoint_every: u64,
    /// Steps between logged selection events.
    pub log_every: u64,
}

fn default_critic() -> NetworkConfig {
    NetworkConfig { learning_rate: 1e-3, ..NetworkConfig::default() }
}

impl Default for AdaSacConfig {
    fn default() -> Self {
        Self {
            name: "adasac".into(),
            horizon: PENDULUM_HORIZON,
            critics: vec![default_critic(); 2],
            actor: ActorConfig::default(),
            gamma: 0.99,
            tau: 0.005,
            alpha: 0.2,
            utd: 1,
            total_steps: 30_000,
            initial_replay: 1000,
            buffer_size: 1_000_000,
            batch_size: 256,
            epsilon_b: ScheduleConfig { start: 1.0, end: 0.01, duration: None },
            checkpoint_every: 1000,
            log_every: 100,
        }
    }
}

impl AdaSacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.critics.len() < 2 {
            return Err(Error::config("at least two critics are required"));
        }
        for (name, v) in [
            ("horizon", self.horizon as u64),
            ("utd", self.utd as u64),
            ("total_steps", self.total_steps),
            ("buffer_size", self.buffer_size as u64),
            ("batch_size", self.batch_size as u64),
            ("checkpoint_every", self.checkpoint_every),
            ("log_every", self.log_every),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.initial_replay > self.buffer_size {
            return Err(Error::config("initial_replay exceeds buffer_size"));
        }
        if self.critics.iter().any(|c| c.discount.is_some()) {
            return Err(Error::config("per-critic discounts are not supported"));
        }
        self.epsilon_b.validate("epsilon_b")?;
        self.build(&mut rng::stream(0, 0, rng::INIT)).map(|_| ())
    }

    fn build(&self, init: &mut crate::rng::Rng) -> Result<AdaSac> {
        let in_dim = PendulumEnv::OBS_DIM + PendulumEnv::ACTION_DIM;
        let hypers = self.critics.iter().map(|c| c.hyperparams(in_dim, 1)).collect::<Result<Vec<_>>>()?;
        let policy = GaussianPolicy::new(
            PendulumEnv::OBS_DIM,
            self.actor.hidden_layers.clone(),
            PendulumEnv::ACTION_DIM,
            MAX_TORQUE,
            self.actor.activation,
        )?;
        let consts = SacConstants { gamma: self.gamma, tau: self.tau, alpha: self.alpha };
        let opt = OptimizerConfig::new(self.actor.optimizer, self.actor.learning_rate)?;
        AdaSac::new(hypers, policy, opt, consts, self.epsilon_b.resolve(self.total_steps), init)
    }
}

/// Trains on the pendulum. Selection events carry the target pair and EMA
/// losses after the last critic update; `behavior_counts` counts how often
/// each critic entered the actor's pair since the previous event.
pub fn run_adasac(cfg: &AdaSacConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let streams = RngStreams::new(seed, run_index);
    let mut agent = cfg.build(&mut streams.stream(rng::INIT))?;
    let mut env_rng = streams.stream(rng::ENV);
    let mut explore_rng = streams.stream(rng::EXPLORE);
    let mut buffer_rng = streams.stream(rng::BUFFER);
    let mut behavior_rng = streams.stream(rng::BEHAVIOR);
    let mut policy_rng = streams.stream(rng::POLICY);

    let k = cfg.critics.len();
    let mut header = RecordHeader::new("adasac", &cfg.name, "pendulum", seed, k);
    header.run_index = run_index;
    let mut record = RunRecord::new(header);
    let mut env = PendulumEnv::new(cfg.horizon);
    let mut buffer: ReplayBuffer<Vec<f64>> = ReplayBuffer::new(cfg.buffer_size);
    let mut tracker = ReturnTracker::default();
    let mut counts = vec![0u64; k];
    let mut obs = env.reset(&mut env_rng);

    for t in 0..cfg.total_steps {
        let warm = buffer.len() >= cfg.initial_replay.max(1);
        let action = if warm {
            agent.act(&obs, &mut explore_rng)?
        } else {
            vec![explore_rng.random_range(-MAX_TORQUE..MAX_TORQUE)]
        };
        let step = env.step(action[0]);
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
            record.episodes.push(EpisodeEnd { step: n, ret: tracker.end_episode() });
            obs = env.reset(&mut env_rng);
        }
        record.ledger.train_env_steps += 1;
        if warm {
            let mut last = None;
            for _ in 0..cfg.utd {
                let sampled = buffer.sample(cfg.batch_size, &mut buffer_rng)?;
                let batch = ContinuousBatch::from_transitions(&sampled)?;
                agent.critic_step(&batch, &mut policy_rng)?;
                record.ledger.gradient_steps += 1;
                last = Some(batch);
            }
            let batch = last.expect("utd >= 1");
            let (a, b) = agent.actor_step(&batch.states, t, &mut behavior_rng, &mut policy_rng)?;
            counts[a] += 1;
            counts[b] += 1;
        }
        if n % cfg.log_every == 0 {
            let (p1, p2) = agent.pair();
            record.selections.push(SelectionEvent {
                step: n,
                selected: vec![p1, p2],
                losses: agent.losses().to_vec(),
                behavior_counts: std::mem::replace(&mut counts, vec![0; k]),
            });
        }
        if n % cfg.checkpoint_every == 0 {
            record.checkpoints.push(Checkpoint { step: n, value: tracker.checkpoint() });
        }
    }
    Ok(record)
}

/// Uniform-random torque on the same environment and checkpoint grid.
pub fn run_random_pendulum(cfg: &AdaSacConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let streams = RngStreams::new(seed, run_index);
    let mut env_rng = streams.stream(rng::ENV);
    let mut explore_rng = streams.stream(rng::EXPLORE);
    let mut header = RecordHeader::new("random", "random", "pendulum", seed, 0);
    header.run_index = run_index;
    let mut record = RunRecord::new(header);
    let mut env = PendulumEnv::new(cfg.horizon);
    let mut tracker = ReturnTracker::default();
    env.reset(&mut env_rng);
    for t in 0..cfg.total_steps {
        let step = env.step(explore_rng.random_range(-MAX_TORQUE..MAX_TORQUE));
        tracker.add_reward(step.reward);
        let n = t + 1;
        if step.episode_over() {
            record.episodes.push(EpisodeEnd { step: n, ret: tracker.end_episode() });
            env.reset(&mut env_rng);
        }
        record.ledger.train_env_steps += 1;
        if n % cfg.checkpoint_every == 0 {
            record.checkpoints.push(Checkpoint { step: n, value: tracker.checkpoint() });
        }
    }
    Ok(record)
}
