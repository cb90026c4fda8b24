//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function returns JSON. The `*_report` functions are the
//! plain Rust versions, used by the bindings and by the native tests.

use adaqn::adadqn::{run_training, selection_oracle_suite, AdaDqnConfig, BehaviorMode, NetworkConfig};
use adaqn::harness::entropy;
use adaqn::rng::RngStreams;
use adaqn::tabular::{benchmark_mdp, run_tabular, TabularConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bounds that keep a browser tab responsive.
pub const MAX_TABULAR_UPDATES: u32 = 400_000;
pub const MAX_CARTPOLE_STEPS: u32 = 20_000;

#[derive(Debug, Serialize)]
pub struct TabularReport {
    pub steps: Vec<u64>,
    pub errors: Vec<f64>,
    pub final_error: f64,
    pub psi_changes: usize,
}

pub fn tabular_report(seed: u64, updates: u32, members: u32) -> Result<TabularReport, String> {
    if updates == 0 || updates > MAX_TABULAR_UPDATES {
        return Err(format!("updates must lie in 1..={MAX_TABULAR_UPDATES}"));
    }
    let cfg = TabularConfig {
        n_members: members as usize,
        updates: updates as u64,
        checkpoint_every: (updates as u64 / 100).max(1),
        ..TabularConfig::benchmark()
    };
    let run = run_tabular(&benchmark_mdp(), &cfg, &RngStreams::new(seed, 0)).map_err(|e| e.to_string())?;
    Ok(TabularReport {
        steps: run.errors.iter().map(|e| e.0).collect(),
        errors: run.errors.iter().map(|e| e.1).collect(),
        final_error: run.final_error,
        psi_changes: run.psi_trace.windows(2).filter(|w| w[0].1 != w[1].1).count(),
    })
}

#[derive(Debug, Serialize)]
pub struct SelectionOracleReport {
    pub empirical_losses: Vec<f64>,
    pub true_errors: Vec<f64>,
    pub empirical_argmin: usize,
    pub true_argmin: usize,
    pub agree: bool,
}

pub fn selection_oracle_report(seed: u64, members: u32) -> Result<SelectionOracleReport, String> {
    if !(1..=16).contains(&members) {
        return Err("members must lie in 1..=16".into());
    }
    let out = selection_oracle_suite(1, members as usize, seed).map_err(|e| e.to_string())?.remove(0);
    Ok(SelectionOracleReport {
        agree: out.holds(),
        empirical_argmin: out.empirical_argmin,
        true_argmin: out.true_argmin,
        empirical_losses: out.empirical_losses,
        true_errors: out.true_errors,
    })
}

#[derive(Debug, Serialize)]
pub struct CartPoleReport {
    pub architectures: Vec<Vec<usize>>,
    pub steps: Vec<u64>,
    pub returns: Vec<f64>,
    /// How often each member was the target, over all target updates.
    pub target_counts: Vec<u64>,
    /// How often each member chose the action.
    pub behavior_counts: Vec<u64>,
    pub behavior_entropy: f64,
}

pub fn cartpole_report(seed: u64, steps: u32, passive: bool) -> Result<CartPoleReport, String> {
    if !(1000..=MAX_CARTPOLE_STEPS).contains(&steps) {
        return Err(format!("steps must lie in 1000..={MAX_CARTPOLE_STEPS}"));
    }
    let architectures = vec![vec![8, 8], vec![32, 32], vec![64, 64], vec![128, 128]];
    let cfg = AdaDqnConfig {
        total_steps: steps as u64,
        checkpoint_every: 500,
        networks: architectures.iter().cloned().map(NetworkConfig::with_hidden).collect(),
        behavior_mode: if passive { BehaviorMode::AlwaysPsi } else { BehaviorMode::EpsilonB },
        ..AdaDqnConfig::default()
    };
    let rec = run_training(&cfg, seed, 0).map_err(|e| e.to_string())?;
    let k = architectures.len();
    let (mut target_counts, mut behavior_counts) = (vec![0u64; k], vec![0u64; k]);
    for e in &rec.selections {
        target_counts[e.selected[0]] += 1;
        for (b, c) in behavior_counts.iter_mut().zip(&e.behavior_counts) {
            *b += c;
        }
    }
    let (steps, returns) = rec.curve();
    Ok(CartPoleReport {
        architectures,
        steps,
        returns,
        behavior_entropy: entropy(&behavior_counts),
        target_counts,
        behavior_counts,
    })
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, String> {
    r.map(|v| serde_json::to_string(&v).expect("reports serialize"))
}

/// Sup-norm error of the selected table on the benchmark MDP.
#[wasm_bindgen]
pub fn tabular_convergence(seed: u32, updates: u32, members: u32) -> Result<String, String> {
    json(tabular_report(seed as u64, updates, members))
}

/// Empirical-loss versus true-error selection on one random dyadic MDP.
#[wasm_bindgen]
pub fn selection_oracle(seed: u32, members: u32) -> Result<String, String> {
    json(selection_oracle_report(seed as u64, members))
}

/// Short cart-pole run over four architectures.
#[wasm_bindgen]
pub fn cartpole_selection(seed: u32, steps: u32, passive: bool) -> Result<String, String> {
    json(cartpole_report(seed as u64, steps, passive))
}
