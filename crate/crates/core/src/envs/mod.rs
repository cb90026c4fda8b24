//! Desk-scale environments, ground-truth oracles and the replay buffer.

mod cartpole;
mod mdp;
mod pendulum;
mod replay;

pub use cartpole::{cartpole_dynamics, cartpole_step, CartPoleEnv, CartPoleState, CARTPOLE_MAX_STEPS};
pub use mdp::{
    random_dyadic_mdp, random_mdp, rational_denominator, value_iteration, TabularEnv, TabularMdp,
};
pub use pendulum::{angle_normalize, pendulum_step, PendulumEnv, PendulumState, MAX_TORQUE, PENDULUM_HORIZON};
pub use replay::{ReplayBuffer, Transition};

use crate::rng::Rng;

/// Outcome of one environment step.
///
/// `terminated` marks a true terminal state (targets stop bootstrapping);
/// `truncated` marks a time limit, which ends the episode but keeps
/// bootstrapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl Step {
    pub fn episode_over(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Episodic environment with a finite action set and vector observations.
pub trait DiscreteEnv {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: usize, rng: &mut Rng) -> Step;
}
