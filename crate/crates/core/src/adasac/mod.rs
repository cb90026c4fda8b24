//! Actor-critic variant: `K` critics with Polyak targets, running-loss
//! pair selection and a tanh-Gaussian actor, on the pendulum.

mod agent;
mod policy;
mod runner;

pub use agent::{check_actor_gradient, critic_input, distinct_pair, polyak_update, two_lowest, AdaSac, ContinuousBatch, SacConstants};
pub use policy::{log1m_tanh_sq, tanh_gaussian_log_density, GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use runner::{run_adasac, run_random_pendulum, ActorConfig, AdaSacConfig};
