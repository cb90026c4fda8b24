use adaqn::adadqn::selection_oracle_suite;
use adaqn::adasac::check_actor_gradient;
use adaqn::rng::{self, RngStreams};
use adaqn::tabular::{benchmark_mdp, run_tabular, TabularConfig};
use adaqn::tinynn::check_all_combinations;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Oracle,
    Gradients,
    Tabular,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const ACTOR_TOLERANCE: f64 = 1e-4;
pub const TABULAR_TOLERANCE: f64 = 1e-2;

pub fn oracle(trials: usize) -> adaqn::Result<SuiteResult> {
    let out = selection_oracle_suite(trials, 5, 0)?;
    let held = out.iter().filter(|o| o.holds()).count();
    Ok(SuiteResult {
        name: "oracle",
        passed: held == out.len(),
        detail: format!("{held}/{} draws select the same member", out.len()),
    })
}

pub fn gradients() -> adaqn::Result<SuiteResult> {
    let mut r = rng::stream(0, 0, "verify-gradients");
    let combos = check_all_combinations(&mut r)?;
    let (worst_act, worst_loss, worst) = combos
        .iter()
        .copied()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .expect("non-empty menus");
    let actor = (0..5).map(|_| check_actor_gradient(&mut r)).collect::<adaqn::Result<Vec<_>>>()?;
    let actor_worst = actor.iter().copied().fold(0.0, f64::max);
    Ok(SuiteResult {
        name: "gradients",
        passed: worst < GRADIENT_TOLERANCE && actor_worst < ACTOR_TOLERANCE,
        detail: format!(
            "{} network combinations, worst {worst:.2e} ({worst_act} x {worst_loss}); actor worst {actor_worst:.2e}",
            combos.len()
        ),
    })
}

/// Benchmark convergence for seeds `0..seeds`.
pub fn tabular(seeds: u64) -> adaqn::Result<SuiteResult> {
    let mdp = benchmark_mdp();
    let cfg = TabularConfig::benchmark();
    let errors = (0..seeds)
        .into_par_iter()
        .map(|s| run_tabular(&mdp, &cfg, &RngStreams::new(s, 0)).map(|r| r.final_error))
        .collect::<adaqn::Result<Vec<_>>>()?;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let ok = errors.iter().filter(|&&e| e < TABULAR_TOLERANCE).count();
    Ok(SuiteResult {
        name: "tabular",
        passed: ok == errors.len(),
        detail: format!("{ok}/{} seeds within {TABULAR_TOLERANCE} after {} updates, worst {worst:.2e}", errors.len(), cfg.updates),
    })
}

pub fn run(suite: Suite, seeds: u64) -> adaqn::Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::Oracle | Suite::All) {
        out.push(oracle(100)?);
    }
    if matches!(suite, Suite::Gradients | Suite::All) {
        out.push(gradients()?);
    }
    if matches!(suite, Suite::Tabular | Suite::All) {
        out.push(tabular(seeds)?);
    }
    Ok(out)
}
