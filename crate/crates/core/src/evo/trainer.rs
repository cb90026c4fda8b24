use serde::{Deserialize, Serialize};

use super::ops::{generation_step, GenerationReport, ParentSelection};
use super::space::SearchSpace;
use crate::adadqn::{
    act_epsilon_greedy, bellman_targets, target_max_next, AdaDqn, AgentNetwork, BehaviorMode,
    EnvConfig, SampledBatch, ScheduleConfig, SelectionMode,
};
use crate::envs::{DiscreteEnv, ReplayBuffer, Transition};
use crate::harness::{Checkpoint, EpisodeEnd, GenerationEvent, RecordHeader, ReturnTracker, RunRecord};
use crate::rng::{self, Rng, RngStreams};
use crate::tinynn::{loss_and_grad, MlpSpec, ParamVector};
use crate::{Error, LinearSchedule, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessKind {
    /// Negative sum of squared-error losses since the previous generation;
    /// costs no environment steps.
    #[default]
    NegCumLoss,
    /// Return of evaluation rollouts, at least `eval_steps` steps per member
    /// (default: generation length divided by population size).
    EvalReturn {
        #[serde(default)]
        eval_steps: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvoConfig {
    pub name: String,
    pub env: EnvConfig,
    pub population: usize,
    /// `M`: environment steps between generations.
    pub hp_frequency: u64,
    pub fitness: FitnessKind,
    pub selection: ParentSelection,
    pub tournament_size: usize,
    pub space: SearchSpace,
    pub total_steps: u64,
    pub gamma: f64,
    pub initial_replay: usize,
    pub buffer_size: usize,
    pub batch_size: usize,
    pub target_update_period: u64,
    pub train_frequency: u64,
    pub epsilon: ScheduleConfig,
    pub checkpoint_every: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            name: "adadqn-evo".into(),
            env: EnvConfig::default(),
            population: 5,
            hp_frequency: 2000,
            fitness: FitnessKind::NegCumLoss,
            selection: ParentSelection::Tournament,
            tournament_size: 3,
            space: SearchSpace::default(),
            total_steps: 20_000,
            gamma: 0.99,
            initial_replay: 1000,
            buffer_size: 10_000,
            batch_size: 32,
            target_update_period: 200,
            train_frequency: 1,
            epsilon: ScheduleConfig { start: 1.0, end: 0.01, duration: Some(1000) },
            checkpoint_every: 1000,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.population < 3 {
            return Err(Error::config("population must hold at least 3 members"));
        }
        if self.tournament_size < 2 || self.tournament_size > self.population {
            return Err(Error::config("tournament_size must lie in [2, population]"));
        }
        for (name, v) in [
            ("hp_frequency", self.hp_frequency),
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
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if let FitnessKind::EvalReturn { eval_steps: Some(n) } = self.fitness {
            if n < self.min_eval_steps() {
                return Err(Error::config(format!(
                    "eval_steps {n} is below hp_frequency / population = {}",
                    self.min_eval_steps()
                )));
            }
        }
        self.env.make(self.gamma).map(|_| ())
    }

    /// `ceil(M / K)`.
    pub fn min_eval_steps(&self) -> u64 {
        self.hp_frequency.div_ceil(self.population as u64)
    }

    fn eval_steps(&self) -> u64 {
        match self.fitness {
            FitnessKind::EvalReturn { eval_steps } => eval_steps.unwrap_or_else(|| self.min_eval_steps()),
            FitnessKind::NegCumLoss => 0,
        }
    }
}

fn initial_population(cfg: &EvoConfig, obs_dim: usize, n_actions: usize, rng: &mut Rng) -> Result<Vec<AgentNetwork>> {
    (0..cfg.population)
        .map(|_| AgentNetwork::new(cfg.space.sample(obs_dim, n_actions, rng)?, rng))
        .collect()
}

fn generation_event(step: u64, fitness: Vec<f64>, report: GenerationReport, eval_steps: Vec<u64>) -> GenerationEvent {
    GenerationEvent {
        step,
        fitness,
        parents: report.parents,
        mutations: report
            .mutations
            .into_iter()
            .map(|(slot, c)| (slot, serde_json::to_value(c).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()))
            .collect(),
        eval_steps,
    }
}

fn header(cfg: &EvoConfig, seed: u64, run_index: u64) -> RecordHeader {
    let variant = match cfg.fitness {
        FitnessKind::NegCumLoss => "neg_cum_loss",
        FitnessKind::EvalReturn { .. } => "eval_return",
    };
    let mut h = RecordHeader::new("evo", &format!("{}:{variant}", cfg.name), cfg.env.name(), seed, cfg.population);
    h.run_index = run_index;
    h
}

/// Population training with periodic tournament selection and mutation.
/// With loss fitness the population is trained as a shared-target ensemble
/// acting by inverse-loss sampling; with return fitness every member trains
/// on its own target and all data comes from evaluation rollouts.
pub fn run_evo(cfg: &EvoConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    cfg.validate()?;
    match cfg.fitness {
        FitnessKind::NegCumLoss => run_loss_fitness(cfg, seed, run_index),
        FitnessKind::EvalReturn { .. } => run_return_fitness(cfg, seed, run_index),
    }
}

fn run_loss_fitness(cfg: &EvoConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    let streams = RngStreams::new(seed, run_index);
    let mut env = cfg.env.make(cfg.gamma)?;
    let mut init_rng = streams.stream(rng::INIT);
    let mut env_rng = streams.stream(rng::ENV);
    let mut explore_rng = streams.stream(rng::EXPLORE);
    let mut buffer_rng = streams.stream(rng::BUFFER);
    let mut behavior_rng = streams.stream(rng::BEHAVIOR);
    let mut selection_rng = streams.stream(rng::SELECTION);
    let mut mutation_rng = streams.stream(rng::MUTATION);

    let members = initial_population(cfg, env.obs_dim(), env.n_actions(), &mut init_rng)?;
    let mut agent = AdaDqn::from_networks(
        members,
        cfg.gamma,
        SelectionMode::Argmin,
        BehaviorMode::LossProportional,
        LinearSchedule::constant(0.0),
    )?;
    let mut record = RunRecord::new(header(cfg, seed, run_index));
    let epsilon = cfg.epsilon.resolve(cfg.total_steps);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size);
    let mut tracker = ReturnTracker::default();
    let mut gen_losses = vec![0.0; cfg.population];
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
            record.episodes.push(EpisodeEnd { step: n, ret: tracker.end_episode() });
            obs = env.reset(&mut env_rng);
        }
        record.ledger.train_env_steps += 1;
        if buffer.len() >= cfg.initial_replay.max(1) && n % cfg.train_frequency == 0 {
            let sampled = buffer.sample(cfg.batch_size, &mut buffer_rng)?;
            agent.train_step(&SampledBatch::from_transitions(&sampled)?)?;
            record.ledger.gradient_steps += 1;
            for (g, l) in gen_losses.iter_mut().zip(agent.last_losses()) {
                *g += l;
            }
        }
        if n % cfg.target_update_period == 0 {
            record.selections.push(agent.target_update(n, &mut selection_rng));
        }
        if n % cfg.hp_frequency == 0 {
            let fitness: Vec<f64> = gen_losses.iter().map(|l| -l).collect();
            let (next, report) = generation_step(
                agent.networks(),
                &fitness,
                &cfg.space,
                cfg.selection,
                cfg.tournament_size,
                &mut mutation_rng,
            )?;
            agent.replace_networks(next)?;
            gen_losses.iter_mut().for_each(|g| *g = 0.0);
            record.generations.push(generation_event(n, fitness, report, vec![0; cfg.population]));
        }
        if n % cfg.checkpoint_every == 0 {
            record.checkpoints.push(Checkpoint { step: n, value: tracker.checkpoint() });
        }
    }
    Ok(record)
}

struct OwnTarget {
    params: ParamVector,
    spec: MlpSpec,
    grad_steps: u64,
}

impl OwnTarget {
    fn of(m: &AgentNetwork) -> Self {
        Self { params: m.params.clone(), spec: m.hyper.spec.clone(), grad_steps: 0 }
    }
}

/// Plays member `m` for at least `min_steps` steps, finishing the last
/// episode, and returns the mean return of the completed episodes.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    m: &AgentNetwork,
    env: &mut dyn DiscreteEnv,
    min_steps: u64,
    epsilon: f64,
    env_rng: &mut Rng,
    explore_rng: &mut Rng,
    buffer: &mut ReplayBuffer,
    on_episode: &mut dyn FnMut(f64),
) -> Result<(f64, u64)> {
    let mut obs = env.reset(env_rng);
    let (mut steps, mut ret, mut returns) = (0u64, 0.0, Vec::new());
    loop {
        let action = act_epsilon_greedy(&m.q_values(&obs)?, epsilon, explore_rng);
        let step = env.step(action, env_rng);
        ret += step.reward;
        steps += 1;
        let over = step.episode_over();
        buffer.push(Transition {
            state: std::mem::replace(&mut obs, step.obs.clone()),
            action,
            reward: step.reward,
            next_state: step.obs,
            done: step.terminated,
        });
        if over {
            on_episode(ret);
            returns.push(std::mem::take(&mut ret));
            if steps >= min_steps {
                break;
            }
            obs = env.reset(env_rng);
        }
    }
    Ok((returns.iter().sum::<f64>() / returns.len() as f64, steps))
}

fn train_own(m: &mut AgentNetwork, target: &mut OwnTarget, batch: &SampledBatch, gamma: f64, period: u64) -> Result<()> {
    let max_next = target_max_next(&target.params, &target.spec, &batch.next_states)?;
    let y = bellman_targets(&batch.rewards, &batch.dones, &max_next, m.hyper.discount.unwrap_or(gamma));
    let lg = loss_and_grad(&m.params, &m.hyper.spec, &batch.states, &batch.actions, &y, m.hyper.loss)?;
    m.cum_loss += lg.l2_loss;
    m.opt.step(&mut m.params, &lg.grad)?;
    target.grad_steps += 1;
    if target.grad_steps.is_multiple_of(period) {
        *target = OwnTarget { grad_steps: target.grad_steps, ..OwnTarget::of(m) };
    }
    Ok(())
}

fn run_return_fitness(cfg: &EvoConfig, seed: u64, run_index: u64) -> Result<RunRecord> {
    let streams = RngStreams::new(seed, run_index);
    let mut env = cfg.env.make(cfg.gamma)?;
    let mut init_rng = streams.stream(rng::INIT);
    let mut env_rng = streams.stream(rng::ENV);
    let mut explore_rng = streams.stream(rng::EXPLORE);
    let mut buffer_rng = streams.stream(rng::BUFFER);
    let mut mutation_rng = streams.stream(rng::MUTATION);

    let mut members = initial_population(cfg, env.obs_dim(), env.n_actions(), &mut init_rng)?;
    let mut targets: Vec<OwnTarget> = members.iter().map(OwnTarget::of).collect();
    let mut record = RunRecord::new(header(cfg, seed, run_index));
    let epsilon = cfg.epsilon.resolve(cfg.total_steps);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size);
    let mut tracker = ReturnTracker::default();
    let min_steps = cfg.eval_steps();
    let mut env_steps = 0u64;
    let mut next_checkpoint = cfg.checkpoint_every;

    while env_steps < cfg.total_steps {
        let mut fitness = Vec::with_capacity(members.len());
        let mut spent = Vec::with_capacity(members.len());
        for m in &members {
            let eps = epsilon.value(env_steps);
            let mut episodes = Vec::new();
            let (f, n) = evaluate(m, env.as_mut(), min_steps, eps, &mut env_rng, &mut explore_rng, &mut buffer, &mut |r| {
                episodes.push(r)
            })?;
            let mut at = env_steps;
            // Episode ends are stamped at the end of the member's rollout.
            at += n;
            for r in episodes {
                tracker.add_reward(r);
                tracker.end_episode();
                record.episodes.push(EpisodeEnd { step: at, ret: r });
            }
            env_steps += n;
            record.ledger.eval_env_steps += n;
            fitness.push(f);
            spent.push(n);
        }
        let collected: u64 = spent.iter().sum();
        if buffer.len() >= cfg.initial_replay.max(1) {
            let grad_steps = collected / cfg.train_frequency;
            for (m, tgt) in members.iter_mut().zip(&mut targets) {
                for _ in 0..grad_steps {
                    let sampled = buffer.sample(cfg.batch_size, &mut buffer_rng)?;
                    train_own(m, tgt, &SampledBatch::from_transitions(&sampled)?, cfg.gamma, cfg.target_update_period)?;
                    record.ledger.gradient_steps += 1;
                }
            }
        }
        let (next, report) = generation_step(
            &members,
            &fitness,
            &cfg.space,
            cfg.selection,
            cfg.tournament_size,
            &mut mutation_rng,
        )?;
        members = next;
        targets = members.iter().map(OwnTarget::of).collect();
        record.generations.push(generation_event(env_steps, fitness, report, spent));
        while next_checkpoint <= env_steps && next_checkpoint <= cfg.total_steps {
            record.checkpoints.push(Checkpoint { step: next_checkpoint, value: tracker.checkpoint() });
            next_checkpoint += cfg.checkpoint_every;
        }
    }
    Ok(record)
}
