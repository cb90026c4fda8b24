use std::path::PathBuf;
use std::process::ExitCode;

use adaqn_cli::config;
use adaqn_cli::report::{self, Figure, ReportOptions};
use adaqn_cli::run::run_experiment;
use adaqn_cli::verify::{self, Suite};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaqn", version, about = "Adaptive Q-network ensemble experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant, seed) pair of an experiment file.
    Run {
        config: PathBuf,
        /// Use seeds 0..N instead of the file's seed list.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Output directory (overrides `out` in the file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted `key=value` applied before validation; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Aggregate run records into CSV and JSON.
    Report {
        records: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        figure: Figure,
        /// Defaults to `<records>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Monte Carlo orders for random search (0: exact when possible).
        #[arg(long, default_value_t = 0)]
        mc_orders: usize,
        /// Random search may repeat a hyperparameter.
        #[arg(long)]
        with_replacement: bool,
    },
    /// Run the oracle suites.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Seeds for the tabular suite.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config: path, seeds, workers, out, overrides } => {
            let mut exp = config::load(&path, &overrides)?;
            if let Some(n) = seeds {
                anyhow::ensure!(n > 0, "--seeds must be >= 1");
                exp.seeds = (0..n).collect();
            }
            let out = out.or_else(|| exp.out.clone()).context("no output directory: pass --out or set `out`")?;
            let manifest = run_experiment(&exp, &out, workers)?;
            let failed = manifest.failed();
            println!("{} runs, {failed} failed; manifest in {}", manifest.runs.len(), out.display());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Report { records, figure, out, resamples, level, bins, mc_orders, with_replacement } => {
            let out = out.unwrap_or_else(|| records.join("report"));
            let opts = ReportOptions { figure, resamples, level, bins, mc_orders, with_replacement };
            let summary = report::report(&records, &out, &opts)?;
            for (rank, name) in summary.ranking.iter().enumerate() {
                let v = summary.variants.iter().find(|v| &v.variant == name).expect("ranked");
                println!("{:>2}. {name}: AUC {:.3} [{:.3}, {:.3}]", rank + 1, v.auc, v.auc_ci.0, v.auc_ci.1);
            }
            println!("wrote {} files to {}", summary.files.len() + 1, out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, seeds, workers } => {
            rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global().ok();
            let results = verify::run(suite, seeds)?;
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
