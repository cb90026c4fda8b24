use std::fs;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use adaqn::adadqn::run_training;
use adaqn::adasac::run_adasac;
use adaqn::evo::run_evo;
use adaqn::harness::RunRecord;
use adaqn::rng::RngStreams;
use adaqn::tabular::run_tabular;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, VariantConfig, CONFIG_SCHEMA_VERSION};
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub variant: String,
    pub seed: u64,
    pub run_index: u64,
    pub config_hash: String,
    pub status: RunStatus,
    /// Relative to the output directory.
    pub path: Option<PathBuf>,
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_schema_version: u32,
    pub software_version: String,
    pub kind: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        serde_json::from_str(&text).map_err(|e| CliError::Record(format!("{}: {e}", path.display())))
    }

    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| r.status == RunStatus::Failed).count()
    }
}

/// Runs one variant for one seed. The seed's position in the seed list is
/// the run index, so every run owns its own RNG streams.
pub fn execute(variant: &VariantConfig, seed: u64, run_index: u64) -> adaqn::Result<RunRecord> {
    let mut record = match variant {
        VariantConfig::Tabular(t) => {
            let mdp = t.mdp.build()?;
            run_tabular(&mdp, &t.run, &RngStreams::new(seed, run_index))?.to_record(&t.name, seed, run_index, t.run.n_members)
        }
        VariantConfig::Adadqn(c) => run_training(c, seed, run_index)?,
        VariantConfig::Adasac(c) => run_adasac(c, seed, run_index)?,
        VariantConfig::Evo(c) => run_evo(c, seed, run_index)?,
    };
    record.header.config_hash = variant.hash();
    Ok(record)
}

fn record_path(variant: &str, seed: u64) -> PathBuf {
    PathBuf::from("records").join(variant).join(format!("seed_{seed}.jsonl"))
}

fn write_record(out: &Path, rel: &Path, record: &RunRecord) -> Result<(), CliError> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Io { path: parent.to_path_buf(), source: e })?;
    }
    let file = fs::File::create(&path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
    record.write_jsonl(BufWriter::new(file)).map_err(|e| CliError::Io { path, source: e })
}

/// Executes every (variant, seed) pair on a pool of `workers` threads and
/// writes one record per run plus the manifest. A failing run is recorded
/// as such and does not stop the others.
pub fn run_experiment(exp: &Experiment, out: &Path, workers: usize) -> Result<Manifest, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io { path: out.to_path_buf(), source: e })?;
    let resolved = serde_json::to_string_pretty(&exp.variants).expect("configs serialize");
    fs::write(out.join("config.json"), resolved).map_err(|e| CliError::Io { path: out.join("config.json"), source: e })?;

    let jobs: Vec<(&VariantConfig, u64, u64)> = exp
        .variants
        .iter()
        .flat_map(|v| exp.seeds.iter().enumerate().map(move |(i, &s)| (v, s, i as u64)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let runs: Vec<RunEntry> = pool.install(|| {
        jobs.par_iter()
            .map(|&(variant, seed, run_index)| {
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| execute(variant, seed, run_index)))
                    .unwrap_or_else(|p| {
                        let msg = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".into());
                        Err(adaqn::Error::NonFinite(format!("run panicked: {msg}")))
                    });
                let rel = record_path(variant.name(), seed);
                let (status, path, error) = match outcome.map_err(CliError::from).and_then(|r| write_record(out, &rel, &r)) {
                    Ok(()) => (RunStatus::Ok, Some(rel), None),
                    Err(e) => (RunStatus::Failed, None, Some(e.to_string())),
                };
                eprintln!("{} seed {seed}: {status:?}", variant.name());
                RunEntry {
                    variant: variant.name().to_string(),
                    seed,
                    run_index,
                    config_hash: variant.hash(),
                    status,
                    path,
                    error,
                    wall_seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect()
    });
    let manifest = Manifest {
        config_schema_version: CONFIG_SCHEMA_VERSION,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: format!("{:?}", exp.kind).to_lowercase(),
        config_hash: exp.hash(),
        seeds: exp.seeds.clone(),
        runs,
    };
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(|e| CliError::Io { path, source: e })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("adaqn-run-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn tabular_runs_are_reproducible() {
        let exp = parse(
            "schema_version = 1\nkind = \"tabular\"\nseeds = [1, 2]\n",
            &["tabular.run.updates=2000".into(), "tabular.run.checkpoint_every=500".into()],
        )
        .unwrap();
        let (a, b) = (tmp("a"), tmp("b"));
        let m = run_experiment(&exp, &a, 2).unwrap();
        run_experiment(&exp, &b, 1).unwrap();
        assert_eq!(m.runs.len(), 2);
        assert_eq!(m.failed(), 0);
        for r in &m.runs {
            let p = r.path.as_ref().unwrap();
            assert_eq!(fs::read(a.join(p)).unwrap(), fs::read(b.join(p)).unwrap());
        }
        assert_eq!(Manifest::read(&a).unwrap().config_hash, m.config_hash);
    }
}
