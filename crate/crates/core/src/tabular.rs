//! Tabular instantiation: `N` Q-tables updated toward one shared target
//! `r + gamma * max_a Q^psi(s', a)`, where `psi` is re-selected periodically as
//! the table closest to one application of the Bellman operator on the
//! previous target table.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::{value_iteration, TabularMdp};
use crate::harness::{Checkpoint, RecordHeader, RunRecord, SelectionEvent};
use crate::rng::{self, Rng};
use crate::{argmin, Error, Result};

pub const DEFAULT_OMEGA: f64 = 0.85;
pub const DEFAULT_SELECTION_PERIOD: u64 = 100;
pub const BENCHMARK_GAMMA: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TabularTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// How the next target index is chosen.
#[derive(Clone, Copy, Debug)]
pub enum PsiMode<'a> {
    /// Bellman operator evaluated with the true model, squared error summed
    /// over every `(s, a)`.
    Exact(&'a TabularMdp),
    /// Squared TD errors summed over a batch of observed transitions.
    Empirical(&'a [TabularTransition]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    Exact,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiRecord {
    pub update: u64,
    pub psi: usize,
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TabularEnsemble {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    q: Vec<Vec<f64>>,
    visits: Vec<Vec<u64>>,
    omega: f64,
    psi: usize,
    selection_period: u64,
    updates: u64,
    window: Vec<TabularTransition>,
    history: Vec<PsiRecord>,
}

impl TabularEnsemble {
    /// All tables start at zero.
    pub fn new(
        n_members: usize,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        omega: f64,
        selection_period: u64,
    ) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::config("ensemble needs at least one table"));
        }
        if !(omega > 0.5 && omega <= 1.0) {
            return Err(Error::config(format!(
                "step-size exponent must lie in (0.5, 1] for Robbins-Monro, got {omega}"
            )));
        }
        if selection_period == 0 {
            return Err(Error::config("selection period must be positive"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        let sa = n_states * n_actions;
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            q: vec![vec![0.0; sa]; n_members],
            visits: vec![vec![0; sa]; n_members],
            omega,
            psi: 0,
            selection_period,
            updates: 0,
            window: Vec::new(),
            history: Vec::new(),
        })
    }

    /// Fills every table with independent uniform values in `[0, scale)`.
    pub fn randomize(&mut self, scale: f64, rng: &mut Rng) {
        for table in &mut self.q {
            for v in table.iter_mut() {
                *v = rng.random::<f64>() * scale;
            }
        }
    }

    pub fn n_members(&self) -> usize {
        self.q.len()
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn table(&self, i: usize) -> &[f64] {
        &self.q[i]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn set_table(&mut self, i: usize, values: Vec<f64>) {
        assert_eq!(values.len(), self.n_states * self.n_actions);
        self.q[i] = values;
    }

    pub fn history(&self) -> &[PsiRecord] {
        &self.history
    }

    pub fn step_size(&self, member: usize, sa: usize) -> f64 {
        1.0 / (1.0 + self.visits[member][sa] as f64).powf(self.omega)
    }

    fn max_q(&self, member: usize, s: usize) -> f64 {
        self.q[member][s * self.n_actions..(s + 1) * self.n_actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, t: &TabularTransition) -> Result<()> {
        for (index, bound, context) in [
            (t.state, self.n_states, "tabular state"),
            (t.next_state, self.n_states, "tabular next state"),
            (t.action, self.n_actions, "tabular action"),
        ] {
            if index >= bound {
                return Err(Error::OutOfRange {
                    context,
                    index,
                    bound,
                });
            }
        }
        Ok(())
    }

    /// Shared-target update of every table, without re-selection.
    pub fn apply_update(&mut self, t: &TabularTransition) -> Result<()> {
        self.check(t)?;
        let target = if t.done {
            t.reward
        } else {
            t.reward + self.gamma * self.max_q(self.psi, t.next_state)
        };
        let sa = t.state * self.n_actions + t.action;
        for i in 0..self.q.len() {
            let alpha = self.step_size(i, sa);
            self.q[i][sa] += alpha * (target - self.q[i][sa]);
            self.visits[i][sa] += 1;
        }
        self.updates += 1;
        self.window.push(*t);
        Ok(())
    }

    /// Re-selects `psi` when a selection period has elapsed. With no model the
    /// transitions seen since the previous selection form the batch.
    pub fn maybe_select(&mut self, model: Option<&TabularMdp>) -> Result<()> {
        if !self.updates.is_multiple_of(self.selection_period) {
            return Ok(());
        }
        let window = std::mem::take(&mut self.window);
        let mode = match model {
            Some(mdp) => PsiMode::Exact(mdp),
            None => PsiMode::Empirical(&window),
        };
        let errors = self.selection_errors(mode)?;
        self.psi = argmin(&errors);
        self.history.push(PsiRecord {
            update: self.updates,
            psi: self.psi,
            errors,
        });
        Ok(())
    }

    pub fn update(&mut self, t: &TabularTransition, model: Option<&TabularMdp>) -> Result<()> {
        self.apply_update(t)?;
        self.maybe_select(model)
    }

    /// Squared distance of every table to the Bellman backup of table `psi`.
    pub fn selection_errors(&self, mode: PsiMode<'_>) -> Result<Vec<f64>> {
        match mode {
            PsiMode::Exact(mdp) => {
                if mdp.n_states() != self.n_states || mdp.n_actions() != self.n_actions {
                    return Err(Error::config("model shape differs from the ensemble"));
                }
                let backup = mdp.bellman_optimality(&self.q[self.psi]);
                Ok(self
                    .q
                    .iter()
                    .map(|table| backup.iter().zip(table).map(|(b, q)| (b - q).powi(2)).sum())
                    .collect())
            }
            PsiMode::Empirical(batch) => {
                if batch.is_empty() {
                    return Err(Error::Empty("empirical selection batch"));
                }
                let mut errors = vec![0.0; self.q.len()];
                for t in batch {
                    self.check(t)?;
                    let y = if t.done {
                        t.reward
                    } else {
                        t.reward + self.gamma * self.max_q(self.psi, t.next_state)
                    };
                    let sa = t.state * self.n_actions + t.action;
                    for (e, table) in errors.iter_mut().zip(&self.q) {
                        *e += (y - table[sa]).powi(2);
                    }
                }
                Ok(errors)
            }
        }
    }

    /// Index the current state would select; ties go to the lowest index.
    pub fn select_psi(&self, mode: PsiMode<'_>) -> Result<usize> {
        Ok(argmin(&self.selection_errors(mode)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    pub n_members: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_period")]
    pub selection_period: u64,
    /// Tables start uniform in `[0, init_scale)`.
    #[serde(default)]
    pub init_scale: f64,
    pub updates: u64,
    pub checkpoint_every: u64,
    /// The behavior trajectory restarts from a uniform state this often.
    #[serde(default = "default_reset")]
    pub reset_every: u64,
    #[serde(default = "default_source")]
    pub selection: SelectionSource,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}
fn default_period() -> u64 {
    DEFAULT_SELECTION_PERIOD
}
fn default_reset() -> u64 {
    20
}
fn default_source() -> SelectionSource {
    SelectionSource::Exact
}

impl TabularConfig {
    pub fn benchmark() -> Self {
        Self {
            n_members: 4,
            omega: DEFAULT_OMEGA,
            selection_period: DEFAULT_SELECTION_PERIOD,
            init_scale: 1.0 / (1.0 - BENCHMARK_GAMMA),
            updates: 200_000,
            checkpoint_every: 10_000,
            reset_every: 20,
            selection: SelectionSource::Exact,
        }
    }
}

/// The 5-state, 2-action benchmark MDP (branching 3, rewards in `[0, 1)`,
/// discount 0.7).
pub fn benchmark_mdp() -> TabularMdp {
    crate::envs::random_mdp(5, 2, 3, 1.0, BENCHMARK_GAMMA, &mut rng::stream(0xADA, 0, "benchmark-mdp"))
        .expect("benchmark parameters are valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularRun {
    /// `(update count, ||Q^psi - Q*||_inf)`
    pub errors: Vec<(u64, f64)>,
    pub final_error: f64,
    pub psi_trace: Vec<(u64, usize)>,
    pub updates: u64,
}

impl TabularRun {
    /// Checkpoints carry the sup-norm error; each selection event carries the
    /// selected table.
    pub fn to_record(&self, variant: &str, seed: u64, run_index: u64, members: usize) -> RunRecord {
        let mut header = RecordHeader::new("tabular", variant, "tabular", seed, members);
        header.run_index = run_index;
        let mut rec = RunRecord::new(header);
        rec.checkpoints = self.errors.iter().map(|&(step, value)| Checkpoint { step, value }).collect();
        rec.selections = self
            .psi_trace
            .iter()
            .map(|&(step, psi)| SelectionEvent { step, selected: vec![psi], losses: Vec::new(), behavior_counts: Vec::new() })
            .collect();
        rec.ledger.gradient_steps = self.updates;
        rec
    }
}

/// Runs the ensemble on `mdp` under uniform-random actions and reports the
/// sup-norm distance of the selected table to the value-iteration oracle.
pub fn run_tabular(mdp: &TabularMdp, cfg: &TabularConfig, streams: &rng::RngStreams) -> Result<TabularRun> {
    let q_star = value_iteration(mdp, 1e-12);
    let mut ens = TabularEnsemble::new(
        cfg.n_members,
        mdp.n_states(),
        mdp.n_actions(),
        mdp.gamma(),
        cfg.omega,
        cfg.selection_period,
    )?;
    ens.randomize(cfg.init_scale, &mut streams.stream(rng::INIT));
    let mut env_rng = streams.stream(rng::ENV);
    let mut act_rng = streams.stream(rng::EXPLORE);
    let model = match cfg.selection {
        SelectionSource::Exact => Some(mdp),
        SelectionSource::Empirical => None,
    };
    let sup_err = |ens: &TabularEnsemble| {
        ens.table(ens.psi())
            .iter()
            .zip(&q_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut errors = vec![(0, sup_err(&ens))];
    let mut state = env_rng.random_range(0..mdp.n_states());
    for u in 1..=cfg.updates {
        let action = act_rng.random_range(0..mdp.n_actions());
        let next_state = mdp.sample_next(state, action, &mut env_rng);
        let t = TabularTransition {
            state,
            action,
            reward: mdp.reward(state, action),
            next_state,
            done: mdp.is_terminal(next_state),
        };
        ens.update(&t, model)?;
        state = if t.done || u % cfg.reset_every.max(1) == 0 {
            env_rng.random_range(0..mdp.n_states())
        } else {
            next_state
        };
        if u % cfg.checkpoint_every.max(1) == 0 {
            errors.push((u, sup_err(&ens)));
        }
    }
    let final_error = sup_err(&ens);
    let psi_trace = ens.history().iter().map(|h| (h.update, h.psi)).collect();
    Ok(TabularRun {
        errors,
        final_error,
        psi_trace,
        updates: cfg.updates,
    })
}
