use adaqn::rng::RngStreams;
use adaqn::tabular::{benchmark_mdp, run_tabular, TabularConfig};

#[test]
fn benchmark_ensemble_reaches_the_optimal_values() {
    let mdp = benchmark_mdp();
    let cfg = TabularConfig::benchmark();
    for seed in 0..4 {
        let run = run_tabular(&mdp, &cfg, &RngStreams::new(seed, 0)).unwrap();
        assert_eq!(run.updates, cfg.updates);
        assert!(run.final_error < 1e-2, "seed {seed}: {}", run.final_error);
        let first = run.errors.first().unwrap().1;
        assert!(run.final_error < first / 10.0, "seed {seed}: {first} -> {}", run.final_error);
    }
}

#[test]
fn short_runs_have_not_converged_yet() {
    let mdp = benchmark_mdp();
    let cfg = TabularConfig { updates: 500, checkpoint_every: 100, ..TabularConfig::benchmark() };
    let run = run_tabular(&mdp, &cfg, &RngStreams::new(0, 0)).unwrap();
    assert!(run.final_error > 1e-2);
    let steps: Vec<u64> = run.errors.iter().map(|e| e.0).collect();
    assert_eq!(steps, vec![0, 100, 200, 300, 400, 500]);
}

#[test]
fn record_conversion_keeps_the_error_curve() {
    let mdp = benchmark_mdp();
    let cfg = TabularConfig { updates: 5000, checkpoint_every: 1000, ..TabularConfig::benchmark() };
    let run = run_tabular(&mdp, &cfg, &RngStreams::new(3, 1)).unwrap();
    let rec = run.to_record("tabular", 3, 1, cfg.n_members);
    let (steps, values) = rec.curve();
    assert_eq!(steps, run.errors.iter().map(|e| e.0).collect::<Vec<_>>());
    assert_eq!(values, run.errors.iter().map(|e| e.1).collect::<Vec<_>>());
    assert_eq!(rec.ledger.gradient_steps, 5000);
}
