use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::space::SearchSpace;
use crate::adadqn::{AgentNetwork, HyperparamSet};
use crate::rng::Rng;
use crate::tinynn::{weight_transfer, MlpSpec, OptimizerConfig};
use crate::{argmax, Error, Result};

/// Floor added to losses before inverting them.
pub const LOSS_FLOOR: f64 = 1e-8;

/// Samples index `k` with probability proportional to `1 / (L_k + 1e-8)`.
pub fn loss_proportional_behavior(losses: &[f64], rng: &mut Rng) -> usize {
    assert!(!losses.is_empty(), "loss-proportional sampling needs at least one member");
    let w: Vec<f64> = losses.iter().map(|l| 1.0 / (l.max(0.0) + LOSS_FLOOR)).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, wk) in w.iter().enumerate() {
        if u < *wk {
            return k;
        }
        u -= wk;
    }
    w.len() - 1
}

/// `K - 1` tournaments of `size` members drawn without replacement, the
/// fittest of each (lowest index on ties) filling one slot, followed by the
/// global best in the last slot.
pub fn tournament_select(fitness: &[f64], size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let k = fitness.len();
    if k < 3 || size < 2 || size > k {
        return Err(Error::config(format!(
            "tournament needs a population of at least 3 and 2 <= size <= population (got {k}, size {size})"
        )));
    }
    if fitness.iter().any(|f| f.is_nan()) {
        return Err(Error::NonFinite("fitness contains NaN".into()));
    }
    let mut parents = Vec::with_capacity(k);
    for _ in 0..k - 1 {
        let mut entrants = sample(rng, k, size).into_vec();
        entrants.sort_unstable();
        let winner = entrants.iter().copied().fold(entrants[0], |best, i| if fitness[i] > fitness[best] { i } else { best });
        parents.push(winner);
    }
    parents.push(argmax(fitness));
    Ok(parents)
}

/// The best `fraction` of the population (at least one member), repeated in
/// rank order to fill `K - 1` slots, followed by the global best.
pub fn truncation_select(fitness: &[f64], fraction: f64) -> Result<Vec<usize>> {
    let k = fitness.len();
    if k == 0 {
        return Err(Error::Empty("population"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("truncation fraction must lie in (0, 1]"));
    }
    let mut ranked: Vec<usize> = (0..k).collect();
    ranked.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    let keep = ((k as f64 * fraction).ceil() as usize).clamp(1, k);
    let mut parents: Vec<usize> = (0..k - 1).map(|i| ranked[i % keep]).collect();
    parents.push(ranked[0]);
    Ok(parents)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationCategory {
    Architecture,
    Activation,
    Loss,
    Optimizer,
    LearningRate,
}

impl MutationCategory {
    pub const ALL: [MutationCategory; 5] = [
        MutationCategory::Architecture,
        MutationCategory::Activation,
        MutationCategory::Loss,
        MutationCategory::Optimizer,
        MutationCategory::LearningRate,
    ];
}

/// Probability that an architecture mutation edits the layer count rather
/// than a layer width.
pub const LAYER_EDIT_PROB: f64 = 0.2;
pub const WIDTH_STEP: i64 = 16;
/// Learning-rate mutations multiply by `10^u`, `u ~ U(-0.5, 0.5)`.
pub const LR_DECADES: f64 = 0.5;

fn pick_other<T: Copy + PartialEq>(menu: &[T], current: T, rng: &mut Rng) -> T {
    let others: Vec<T> = menu.iter().copied().filter(|m| *m != current).collect();
    others.choose(rng).copied().unwrap_or(current)
}

fn mutate_architecture(spec: &MlpSpec, space: &SearchSpace, rng: &mut Rng) -> Vec<usize> {
    let mut hidden = spec.hidden_layers.clone();
    let can_grow = hidden.len() < space.max_layers;
    let can_shrink = hidden.len() > space.min_layers;
    if rng.random::<f64>() < LAYER_EDIT_PROB && (can_grow || can_shrink) {
        let grow = if can_grow && can_shrink { rng.random::<bool>() } else { can_grow };
        if grow {
            let width = hidden.last().copied().unwrap_or(space.min_width);
            hidden.push(space.clip_width(width as i64));
        } else {
            hidden.pop();
        }
    } else if !hidden.is_empty() {
        let l = rng.random_range(0..hidden.len());
        let delta = if rng.random::<bool>() { WIDTH_STEP } else { -WIDTH_STEP };
        hidden[l] = space.clip_width(hidden[l] as i64 + delta);
    }
    hidden
}

/// Applies one uniformly chosen mutation. Overlapping weights are carried
/// over, new ones freshly initialized, and the optimizer state restarts.
pub fn mutate(member: &AgentNetwork, space: &SearchSpace, rng: &mut Rng) -> Result<(AgentNetwork, MutationCategory)> {
    let category = *MutationCategory::ALL.choose(rng).expect("non-empty");
    let old = &member.hyper;
    let mut hyper: HyperparamSet = old.clone();
    match category {
        MutationCategory::Architecture => {
            hyper.spec.hidden_layers = mutate_architecture(&old.spec, space, rng);
        }
        MutationCategory::Activation => {
            hyper.spec.activation = pick_other(&space.activations, old.spec.activation, rng);
        }
        MutationCategory::Loss => hyper.loss = pick_other(&space.losses, old.loss, rng),
        MutationCategory::Optimizer => {
            hyper.optimizer.kind = pick_other(&space.optimizers, old.optimizer.kind, rng);
        }
        MutationCategory::LearningRate => {
            let u = rng.random_range(-LR_DECADES..LR_DECADES);
            hyper.optimizer.learning_rate = old.optimizer.learning_rate * 10f64.powf(u);
        }
    }
    hyper.optimizer = OptimizerConfig::new(hyper.optimizer.kind, space.clip_lr(hyper.optimizer.learning_rate))?;
    hyper.validate()?;
    let params = weight_transfer(&member.params, &old.spec, &hyper.spec, rng)?;
    Ok((AgentNetwork::with_params(hyper, params), category))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentSelection {
    #[default]
    Tournament,
    /// Keep the top 20 % instead of running tournaments.
    Truncation,
}

pub const TRUNCATION_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub parents: Vec<usize>,
    pub elite: usize,
    /// `(slot, category)` for every mutated slot.
    pub mutations: Vec<(usize, MutationCategory)>,
}

/// Slots that must be mutated: the last slot holds the elite unmutated;
/// among the other slots, the first copy of a parent is kept unless that
/// parent is the elite (already present in the last slot).
pub fn duplicate_slots(parents: &[usize]) -> Vec<usize> {
    let (elite, rest) = parents.split_last().expect("non-empty parents");
    let mut seen = vec![*elite];
    let mut out = Vec::new();
    for (slot, p) in rest.iter().enumerate() {
        if seen.contains(p) {
            out.push(slot);
        } else {
            seen.push(*p);
        }
    }
    out
}

/// Exploitation and exploration on a population with known fitness.
pub fn generation_step(
    members: &[AgentNetwork],
    fitness: &[f64],
    space: &SearchSpace,
    selection: ParentSelection,
    tournament_size: usize,
    rng: &mut Rng,
) -> Result<(Vec<AgentNetwork>, GenerationReport)> {
    if members.len() != fitness.len() {
        return Err(Error::DimensionMismatch { context: "fitness", expected: members.len(), got: fitness.len() });
    }
    let parents = match selection {
        ParentSelection::Tournament => tournament_select(fitness, tournament_size, rng)?,
        ParentSelection::Truncation => truncation_select(fitness, TRUNCATION_FRACTION)?,
    };
    let mut next: Vec<AgentNetwork> = parents.iter().map(|&p| members[p].clone()).collect();
    let mut mutations = Vec::new();
    for slot in duplicate_slots(&parents) {
        let (m, cat) = mutate(&next[slot], space, rng)?;
        next[slot] = m;
        mutations.push((slot, cat));
    }
    for n in &mut next {
        n.cum_loss = 0.0;
    }
    let elite = *parents.last().expect("non-empty");
    Ok((next, GenerationReport { parents, elite, mutations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn member(space: &SearchSpace, r: &mut Rng) -> AgentNetwork {
        AgentNetwork::new(space.sample(4, 2, r).unwrap(), r).unwrap()
    }

    #[test]
    fn equal_fitness_picks_lowest_sampled() {
        let mut r = rng::stream(0, 0, rng::MUTATION);
        for _ in 0..50 {
            let p = tournament_select(&[1.0; 6], 3, &mut r).unwrap();
            assert_eq!(*p.last().unwrap(), 0);
            assert!(p[..5].iter().all(|&i| i <= 3));
        }
    }

    #[test]
    fn tournament_trace_matches_replay() {
        let fitness = [5.0, 1.0, 3.0];
        let mut r = rng::stream(7, 0, rng::MUTATION);
        let p = tournament_select(&fitness, 3, &mut r).unwrap();
        // With K = 3 every tournament contains the whole population.
        assert_eq!(p, vec![0, 0, 0]);
        let fitness = [5.0, 1.0, 3.0, 9.0, 2.0];
        let mut r = rng::stream(8, 0, rng::MUTATION);
        let mut replay = rng::stream(8, 0, rng::MUTATION);
        let p = tournament_select(&fitness, 3, &mut r).unwrap();
        for &winner in &p[..4] {
            let triple = sample(&mut replay, 5, 3).into_vec();
            let best = triple.iter().copied().max_by(|&a, &b| fitness[a].total_cmp(&fitness[b])).unwrap();
            assert_eq!(winner, best);
        }
        assert_eq!(p[4], 3);
    }

    #[test]
    fn dominant_member_wins_when_sampled() {
        let fitness = [0.0, f64::INFINITY, 0.5, 0.2];
        let mut r = rng::stream(9, 0, rng::MUTATION);
        let mut replay = rng::stream(9, 0, rng::MUTATION);
        let p = tournament_select(&fitness, 3, &mut r).unwrap();
        for &winner in &p[..3] {
            let triple = sample(&mut replay, 4, 3).into_vec();
            if triple.contains(&1) {
                assert_eq!(winner, 1);
            }
        }
        assert_eq!(p[3], 1);
    }

    #[test]
    fn small_population_rejected() {
        let mut r = rng::stream(0, 0, rng::MUTATION);
        assert!(tournament_select(&[1.0, 2.0], 3, &mut r).is_err());
    }

    #[test]
    fn duplicates() {
        assert_eq!(duplicate_slots(&[1, 1, 2, 0, 2]), vec![1, 2]);
        assert_eq!(duplicate_slots(&[0, 1, 2, 3]), Vec::<usize>::new());
        assert_eq!(duplicate_slots(&[3, 3, 3, 3]), vec![0, 1, 2]);
    }

    #[test]
    fn truncation_keeps_top_fraction() {
        let p = truncation_select(&[0.0, 5.0, 3.0, 1.0, 4.0, 2.0, 9.0, 8.0, 7.0, 6.0], 0.2).unwrap();
        assert_eq!(p, vec![6, 7, 6, 7, 6, 7, 6, 7, 6, 6]);
    }

    #[test]
    fn mutation_stays_in_space_and_keeps_io() {
        let space = SearchSpace::default();
        let mut r = rng::stream(1, 0, rng::MUTATION);
        let mut m = member(&space, &mut r);
        for _ in 0..500 {
            let (next, _) = mutate(&m, &space, &mut r).unwrap();
            assert!(space.contains(&next.hyper), "{:?}", next.hyper);
            assert_eq!((next.hyper.spec.input_dim, next.hyper.spec.output_dim), (4, 2));
            assert_eq!(next.opt.steps(), 0);
            assert_eq!(next.params.len(), next.hyper.spec.num_params());
            m = next;
        }
    }

    #[test]
    fn lr_mutation_clips() {
        let space = SearchSpace::default();
        let mut r = rng::stream(2, 0, rng::MUTATION);
        let mut m = member(&space, &mut r);
        m.hyper.optimizer.learning_rate = 1e-3;
        for _ in 0..200 {
            let (next, cat) = mutate(&m, &space, &mut r).unwrap();
            let lr = next.hyper.optimizer.learning_rate;
            assert!((1e-6..=1e-3).contains(&lr));
            if cat == MutationCategory::LearningRate {
                assert!(lr <= 1e-3 && lr >= 1e-3 * 10f64.powf(-0.5) - 1e-18);
            }
        }
    }

    #[test]
    fn width_mutation_preserves_overlap() {
        let space = SearchSpace::default();
        let mut r = rng::stream(3, 0, rng::MUTATION);
        let m = member(&space, &mut r);
        for _ in 0..100 {
            let (next, cat) = mutate(&m, &space, &mut r).unwrap();
            if cat != MutationCategory::Architecture || next.hyper.spec.hidden_layers.len() != m.hyper.spec.hidden_layers.len() {
                continue;
            }
            // First layer weights of overlapping units are shared.
            let (old_l, new_l) = (m.hyper.spec.layers()[0], next.hyper.spec.layers()[0]);
            let units = old_l.fan_out.min(new_l.fan_out);
            let n = units * old_l.fan_in;
            assert_eq!(&m.params[..n], &next.params[..n]);
        }
    }

    #[test]
    fn loss_proportional_frequencies() {
        let mut r = rng::stream(4, 0, rng::BEHAVIOR);
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[loss_proportional_behavior(&[1.0, 1.0, 2.0], &mut r)] += 1;
        }
        // p ∝ (1, 1, 1/2) → (0.4, 0.4, 0.2).
        for (c, p) in counts.iter().zip([0.4, 0.4, 0.2]) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
        assert!((0..1000).all(|_| loss_proportional_behavior(&[1.0, 1e12], &mut r) == 0));
    }
}
