use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adaqn::adadqn::AdaDqnConfig;
use adaqn::adasac::AdaSacConfig;
use adaqn::envs::{random_mdp, TabularMdp};
use adaqn::evo::EvoConfig;
use adaqn::rng;
use adaqn::tabular::{benchmark_mdp, TabularConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Tabular,
    Adadqn,
    Adasac,
    Evo,
    /// Several `adadqn` variants, each a partial override of the `[adadqn]`
    /// table.
    AblationSuite,
}

impl ExperimentKind {
    fn section(self) -> &'static str {
        match self {
            ExperimentKind::Tabular => "tabular",
            ExperimentKind::Adadqn | ExperimentKind::AblationSuite => "adadqn",
            ExperimentKind::Adasac => "adasac",
            ExperimentKind::Evo => "evo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpChoice {
    /// The fixed 5-state benchmark.
    Benchmark,
    Random {
        n_states: usize,
        n_actions: usize,
        branching: usize,
        gamma: f64,
        #[serde(default)]
        mdp_seed: u64,
    },
}

impl MdpChoice {
    pub fn build(&self) -> adaqn::Result<TabularMdp> {
        match *self {
            MdpChoice::Benchmark => Ok(benchmark_mdp()),
            MdpChoice::Random { n_states, n_actions, branching, gamma, mdp_seed } => {
                random_mdp(n_states, n_actions, branching, 1.0, gamma, &mut rng::stream(mdp_seed, 0, "tabular-mdp"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularExperiment {
    pub name: String,
    pub mdp: MdpChoice,
    pub run: TabularConfig,
}

impl Default for TabularExperiment {
    fn default() -> Self {
        Self { name: "tabular".into(), mdp: MdpChoice::Benchmark, run: TabularConfig::benchmark() }
    }
}

/// One fully resolved agent configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "agent", content = "config", rename_all = "snake_case")]
pub enum VariantConfig {
    Tabular(TabularExperiment),
    Adadqn(AdaDqnConfig),
    Adasac(AdaSacConfig),
    Evo(EvoConfig),
}

impl VariantConfig {
    pub fn name(&self) -> &str {
        match self {
            VariantConfig::Tabular(c) => &c.name,
            VariantConfig::Adadqn(c) => &c.name,
            VariantConfig::Adasac(c) => &c.name,
            VariantConfig::Evo(c) => &c.name,
        }
    }

    pub fn validate(&self) -> adaqn::Result<()> {
        match self {
            VariantConfig::Tabular(c) => {
                let mdp = c.mdp.build()?;
                adaqn::tabular::TabularEnsemble::new(
                    c.run.n_members,
                    mdp.n_states(),
                    mdp.n_actions(),
                    mdp.gamma(),
                    c.run.omega,
                    c.run.selection_period,
                )
                .map(|_| ())
            }
            VariantConfig::Adadqn(c) => c.validate(),
            VariantConfig::Adasac(c) => c.validate(),
            VariantConfig::Evo(c) => c.validate(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("configs serialize").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Top-level file layout. Agent sections stay raw until resolution so that
/// omitted keys fall back to the module defaults.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    schema_version: u32,
    kind: ExperimentKind,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    tabular: Option<Table>,
    #[serde(default)]
    adadqn: Option<Table>,
    #[serde(default)]
    adasac: Option<Table>,
    #[serde(default)]
    evo: Option<Table>,
    #[serde(default)]
    variants: BTreeMap<String, Table>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub variants: Vec<VariantConfig>,
}

impl Experiment {
    pub fn hash(&self) -> String {
        let hashes: Vec<String> = self.variants.iter().map(VariantConfig::hash).collect();
        sha256_hex(format!("{:?}|{:?}|{}", self.kind, self.seeds, hashes.join(",")).as_bytes())
    }
}

/// Reads, overrides and fully validates an experiment file.
pub fn load(path: &Path, overrides: &[String]) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse(&text, overrides)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<Experiment, CliError> {
    let mut table: Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let raw: RawExperiment = Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if raw.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
            raw.schema_version
        )));
    }
    let section = raw.kind.section();
    for (name, present) in [
        ("tabular", raw.tabular.is_some()),
        ("adadqn", raw.adadqn.is_some()),
        ("adasac", raw.adasac.is_some()),
        ("evo", raw.evo.is_some()),
    ] {
        if present && name != section {
            return Err(CliError::Config(format!("section [{name}] does not apply to kind {:?}", raw.kind)));
        }
    }
    if !raw.variants.is_empty() && raw.kind != ExperimentKind::AblationSuite {
        return Err(CliError::Config("[variants] is only valid for kind = \"ablation_suite\"".into()));
    }
    let variants = match raw.kind {
        ExperimentKind::Tabular => vec![VariantConfig::Tabular(resolve("tabular", raw.tabular.as_ref(), None)?)],
        ExperimentKind::Adadqn => vec![VariantConfig::Adadqn(resolve("adadqn", raw.adadqn.as_ref(), None)?)],
        ExperimentKind::Adasac => vec![VariantConfig::Adasac(resolve("adasac", raw.adasac.as_ref(), None)?)],
        ExperimentKind::Evo => vec![VariantConfig::Evo(resolve("evo", raw.evo.as_ref(), None)?)],
        ExperimentKind::AblationSuite => {
            if raw.variants.is_empty() {
                return Err(CliError::Config("an ablation suite needs at least one [variants.<name>] table".into()));
            }
            raw.variants
                .iter()
                .map(|(name, patch)| {
                    let mut cfg: AdaDqnConfig = resolve(&format!("variants.{name}"), raw.adadqn.as_ref(), Some(patch))?;
                    cfg.name = name.clone();
                    Ok(VariantConfig::Adadqn(cfg))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    let mut names = std::collections::BTreeSet::new();
    for v in &variants {
        if !names.insert(v.name().to_string()) {
            return Err(CliError::Config(format!("duplicate variant name `{}`", v.name())));
        }
        v.validate().map_err(|e| CliError::Config(format!("{}: {e}", v.name())))?;
    }
    let seeds = raw.seeds.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(CliError::Config("the seed list is empty".into()));
    }
    Ok(Experiment { kind: raw.kind, seeds, out: raw.out, variants })
}

/// Defaults, then the section, then an optional variant patch; the merged
/// table must deserialize with no unknown keys.
fn resolve<T: Default + Serialize + DeserializeOwned>(
    context: &str,
    section: Option<&Table>,
    patch: Option<&Table>,
) -> Result<T, CliError> {
    let mut base = match Value::try_from(T::default()).map_err(|e| CliError::Config(e.to_string()))? {
        Value::Table(t) => t,
        _ => unreachable!("agent configs are tables"),
    };
    for layer in [section, patch].into_iter().flatten() {
        merge(&mut base, layer);
    }
    Value::Table(base)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("[{context}] {}", e.message())))
}

/// Deep merge. A table whose `kind` tag changes replaces the old one
/// wholesale, since the old variant's fields would not apply.
fn merge(base: &mut Table, overlay: &Table) {
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) if b.get("kind") == o.get("kind") || o.get("kind").is_none() => {
                merge(b, o)
            }
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// `a.b.c=value`; the value is parsed as a TOML value, falling back to a
/// bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{path}`")));
    }
    let value = match toml::from_str::<Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override `{path}`: `{k}` is not a table"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
