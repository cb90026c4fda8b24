//! Value-based ensemble agent on a shared, loss-selected target, with the
//! single-network reference and the ablation switches.

mod agent;
mod dqn;
mod runner;
mod selection_oracle;

pub use agent::{
    act_epsilon_greedy, bellman_targets, target_max_next, AdaDqn, AgentNetwork, BehaviorMode,
    HyperparamSet, SampledBatch, SelectionMode,
};
pub use dqn::Dqn;
pub use runner::{
    build_agent, run_training, run_training_with_probe, AdaDqnConfig, Algorithm, EnvConfig,
    NetworkConfig, ScheduleConfig, ValueAgent,
};
pub use selection_oracle::{
    check_unbiased, enumerate_unbiased_dataset, q_table, selection_oracle_check, selection_oracle_suite, OracleOutcome,
    MAX_DENOMINATOR,
};
