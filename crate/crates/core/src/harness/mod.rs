//! Evaluation toolkit: robust aggregates, confidence intervals, the
//! post-processing curves used to compare against tuning baselines, and the
//! run-record format they consume.

mod curves;
mod record;
mod stats;

pub use curves::{
    grid_search_curve, population_min_max_curves, random_search_curve, random_search_curve_exact,
    random_search_expectation_exact, random_search_expectation_mc, running_max_curve, Curve,
    ScoreTensor, MAX_EXACT_K,
};
pub use record::{
    Checkpoint, EpisodeEnd, GenerationEvent, RecordHeader, ReturnTracker, RunRecord, SelectionEvent, StepLedger,
    RECORD_SCHEMA_VERSION,
};
pub use stats::{auc, bootstrap_ci, entropy, iqm, percentile};
