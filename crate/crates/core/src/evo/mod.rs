//! Population mode for unbounded hyperparameter spaces: tournament selection
//! with elitism, single-operation mutations, and either loss-based or
//! return-based fitness.

mod ops;
mod space;
mod trainer;

pub use ops::{
    duplicate_slots, generation_step, loss_proportional_behavior, mutate, tournament_select,
    truncation_select, GenerationReport, MutationCategory, ParentSelection, LAYER_EDIT_PROB,
    LOSS_FLOOR, LR_DECADES, TRUNCATION_FRACTION, WIDTH_STEP,
};
pub use space::SearchSpace;
pub use trainer::{run_evo, EvoConfig, FitnessKind};
