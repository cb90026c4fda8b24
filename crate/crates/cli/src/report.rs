use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use adaqn::harness::{
    auc, bootstrap_ci, entropy, grid_search_curve, iqm, random_search_curve, random_search_curve_exact, Curve,
    RunRecord, ScoreTensor, MAX_EXACT_K,
};
use adaqn::rng;
use serde::Serialize;

use crate::run::{Manifest, RunStatus};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// IQM curves with bootstrap intervals and worst-seed curves.
    Curves,
    /// AUC ranking table.
    Auc,
    /// Target-index and behavior-index histograms.
    Selection,
    /// Grid-search and random-search curves across variants.
    Search,
    All,
}

#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub figure: Figure,
    pub resamples: usize,
    pub level: f64,
    pub bins: usize,
    /// Monte Carlo orders for random search; 0 enumerates exactly when the
    /// variant count allows it.
    pub mc_orders: usize,
    pub with_replacement: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { figure: Figure::All, resamples: 2000, level: 0.95, bins: 10, mc_orders: 0, with_replacement: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub n_runs: usize,
    pub seeds: Vec<u64>,
    pub auc: f64,
    pub auc_ci: (f64, f64),
    pub final_iqm: f64,
    /// Entropy (nats) of the pooled target-index histogram.
    pub selection_entropy: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub metric: String,
    pub higher_is_better: bool,
    pub skipped_failed_runs: usize,
    pub variants: Vec<VariantSummary>,
    /// Variant names, best first.
    pub ranking: Vec<String>,
    pub grid_search_auc: Option<f64>,
    pub random_search_auc: Option<f64>,
    pub files: Vec<String>,
}

/// Loads records listed in the manifest (successful runs only), or every
/// `.jsonl` file below `dir` when there is no manifest.
pub fn load_records(dir: &Path) -> Result<(Vec<RunRecord>, usize), CliError> {
    let mut paths = Vec::new();
    let mut failed = 0;
    if dir.join(crate::run::MANIFEST_FILE).exists() {
        let m = Manifest::read(dir)?;
        for r in &m.runs {
            match (&r.status, &r.path) {
                (RunStatus::Ok, Some(p)) => paths.push(dir.join(p)),
                _ => failed += 1,
            }
        }
    } else {
        collect_jsonl(dir, &mut paths)?;
        paths.sort();
    }
    let records = paths
        .iter()
        .map(|p| {
            let f = fs::File::open(p).map_err(|e| CliError::Io { path: p.clone(), source: e })?;
            RunRecord::read_jsonl(BufReader::new(f)).map_err(|e| CliError::Record(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(CliError::Record(format!("no run records under {}", dir.display())));
    }
    Ok((records, failed))
}

fn collect_jsonl(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })? {
        let path = entry.map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?.path();
        if path.is_dir() {
            collect_jsonl(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// Records of one variant on one checkpoint grid, ordered by seed.
struct Group<'a> {
    name: String,
    steps: Vec<u64>,
    runs: Vec<&'a RunRecord>,
}

impl Group<'_> {
    fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.header.seed).collect()
    }

    fn values_at(&self, t: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r.checkpoints[t].value).collect()
    }

    fn iqm_curve(&self) -> Result<Vec<f64>, CliError> {
        (0..self.steps.len()).map(|t| Ok(iqm(&self.values_at(t))?)).collect()
    }
}

fn group(records: &[RunRecord]) -> Result<Vec<Group<'_>>, CliError> {
    let mut by_name: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        by_name.entry(r.header.variant.as_str()).or_default().push(r);
    }
    by_name
        .into_iter()
        .map(|(name, mut runs)| {
            runs.sort_by_key(|r| (r.header.seed, r.header.run_index));
            let steps: Vec<u64> = runs[0].checkpoints.iter().map(|c| c.step).collect();
            if steps.is_empty() {
                return Err(CliError::Record(format!("variant `{name}` has runs without checkpoints")));
            }
            for r in &runs[1..] {
                if r.checkpoints.len() != steps.len() || r.checkpoints.iter().zip(&steps).any(|(c, s)| c.step != *s) {
                    return Err(CliError::Record(format!(
                        "variant `{name}`: seed {} has a different checkpoint grid",
                        r.header.seed
                    )));
                }
            }
            Ok(Group { name: name.to_string(), steps, runs })
        })
        .collect()
}

fn write(out: &Path, name: &str, body: String, files: &mut Vec<String>) -> Result<(), CliError> {
    let path = out.join(name);
    fs::write(&path, body).map_err(|e| CliError::Io { path, source: e })?;
    files.push(name.to_string());
    Ok(())
}

fn safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn curve_csv(c: &Curve) -> String {
    let mut s = String::from("step,metric\n");
    for (x, y) in c.steps.iter().zip(&c.values) {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

/// Counts per member index in `bins` consecutive slices of the event list,
/// pooled over runs. `pick` extracts the per-event counts.
fn histogram(group: &Group, members: usize, bins: usize, pick: impl Fn(&adaqn::harness::SelectionEvent) -> Vec<u64>) -> String {
    let n_events = group.runs.iter().map(|r| r.selections.len()).max().unwrap_or(0);
    let bins = bins.clamp(1, n_events.max(1));
    let mut s = String::from("bin,first_step,last_step,events");
    for k in 0..members {
        write!(s, ",member_{k}").unwrap();
    }
    s.push('\n');
    for b in 0..bins {
        let (lo, hi) = (b * n_events / bins, (b + 1) * n_events / bins);
        if lo == hi {
            continue;
        }
        let mut counts = vec![0u64; members];
        let (mut first, mut last, mut events) = (u64::MAX, 0, 0);
        for r in &group.runs {
            for e in r.selections.iter().take(hi).skip(lo) {
                for (k, c) in pick(e).into_iter().enumerate() {
                    if k < members {
                        counts[k] += c;
                    }
                }
                first = first.min(e.step);
                last = last.max(e.step);
                events += 1;
            }
        }
        write!(s, "{b},{first},{last},{events}").unwrap();
        for c in counts {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn target_counts(e: &adaqn::harness::SelectionEvent, members: usize) -> Vec<u64> {
    let mut c = vec![0; members];
    for &k in &e.selected {
        if k < members {
            c[k] += 1;
        }
    }
    c
}

/// Writes the requested report files into `out` and returns the summary,
/// which is also written as `summary.json`.
pub fn report(dir: &Path, out: &Path, opts: &ReportOptions) -> Result<Summary, CliError> {
    let (records, failed) = load_records(dir)?;
    let groups = group(&records)?;
    fs::create_dir_all(out).map_err(|e| CliError::Io { path: out.to_path_buf(), source: e })?;
    let tabular = records.iter().all(|r| r.header.kind == "tabular");
    let higher_is_better = !tabular;
    let mut files = Vec::new();
    let mut rng = rng::stream(0, 0, "report");
    let want = |f: Figure| opts.figure == Figure::All || opts.figure == f;

    let mut summaries = Vec::new();
    for g in &groups {
        let steps_f: Vec<f64> = g.steps.iter().map(|&s| s as f64).collect();
        let curve = g.iqm_curve()?;
        let tag = safe(&g.name);
        if want(Figure::Curves) {
            let mut s = String::from("step,metric,lo,hi\n");
            let mut worst = String::from("step,metric\n");
            for (t, step) in g.steps.iter().enumerate() {
                let v = g.values_at(t);
                let (lo, hi) = bootstrap_ci(std::slice::from_ref(&v), opts.resamples, opts.level, &mut rng)?;
                writeln!(s, "{step},{},{lo},{hi}", curve[t]).unwrap();
                let w = if higher_is_better { v.iter().copied().fold(f64::INFINITY, f64::min) } else { v.iter().copied().fold(f64::NEG_INFINITY, f64::max) };
                writeln!(worst, "{step},{w}").unwrap();
            }
            write(out, &format!("curve_{tag}.csv"), s, &mut files)?;
            write(out, &format!("worst_{tag}.csv"), worst, &mut files)?;
        }
        let members = g.runs.iter().map(|r| r.header.members).max().unwrap_or(0);
        let has_selections = members > 0 && g.runs.iter().any(|r| !r.selections.is_empty());
        if want(Figure::Selection) && has_selections {
            write(out, &format!("selection_{tag}.csv"), histogram(g, members, opts.bins, |e| target_counts(e, members)), &mut files)?;
            if g.runs.iter().any(|r| r.selections.iter().any(|e| !e.behavior_counts.is_empty())) {
                write(out, &format!("behavior_{tag}.csv"), histogram(g, members, opts.bins, |e| e.behavior_counts.clone()), &mut files)?;
            }
        }
        let (auc_value, auc_ci) = if g.steps.len() >= 2 {
            let per_seed = g
                .runs
                .iter()
                .map(|r| auc(&steps_f, &r.checkpoints.iter().map(|c| c.value).collect::<Vec<_>>()))
                .collect::<adaqn::Result<Vec<_>>>()?;
            (auc(&steps_f, &curve)?, bootstrap_ci(&[per_seed], opts.resamples, opts.level, &mut rng)?)
        } else {
            (curve[0], (curve[0], curve[0]))
        };
        let selection_entropy = has_selections.then(|| {
            let mut pooled = vec![0u64; members];
            for r in &g.runs {
                for e in &r.selections {
                    for (k, c) in target_counts(e, members).into_iter().enumerate() {
                        pooled[k] += c;
                    }
                }
            }
            entropy(&pooled)
        });
        summaries.push(VariantSummary {
            variant: g.name.clone(),
            n_runs: g.runs.len(),
            seeds: g.seeds(),
            auc: auc_value,
            auc_ci,
            final_iqm: *curve.last().expect("non-empty grid"),
            selection_entropy,
        });
    }

    let mut order: Vec<usize> = (0..summaries.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (summaries[a].auc, summaries[b].auc);
        if higher_is_better { y.total_cmp(&x) } else { x.total_cmp(&y) }
    });
    let ranking: Vec<String> = order.iter().map(|&i| summaries[i].variant.clone()).collect();
    if want(Figure::Auc) {
        let mut s = String::from("rank,variant,auc,lo,hi,final_iqm,n_runs\n");
        for (rank, &i) in order.iter().enumerate() {
            let v = &summaries[i];
            writeln!(s, "{},{},{},{},{},{},{}", rank + 1, v.variant, v.auc, v.auc_ci.0, v.auc_ci.1, v.final_iqm, v.n_runs).unwrap();
        }
        write(out, "auc.csv", s, &mut files)?;
    }

    let (mut grid_auc, mut random_auc) = (None, None);
    if want(Figure::Search) && groups.len() >= 2 {
        let tensor = search_tensor(&groups)?;
        let grid = grid_search_curve(&tensor);
        let random = if opts.mc_orders == 0 && groups.len() <= MAX_EXACT_K {
            random_search_curve_exact(&tensor, opts.with_replacement)?
        } else {
            random_search_curve(&tensor, opts.mc_orders.max(1000), opts.with_replacement, &mut rng)?
        };
        let axis = |c: &Curve| c.steps.iter().map(|&s| s as f64).collect::<Vec<_>>();
        if grid.steps.len() >= 2 {
            grid_auc = Some(auc(&axis(&grid), &grid.values)?);
            random_auc = Some(auc(&axis(&random), &random.values)?);
        }
        write(out, "search_grid.csv", curve_csv(&grid), &mut files)?;
        write(out, "search_random.csv", curve_csv(&random), &mut files)?;
    }

    let summary = Summary {
        metric: if tabular { "sup_error".into() } else { "return".into() },
        higher_is_better,
        skipped_failed_runs: failed,
        variants: summaries,
        ranking,
        grid_search_auc: grid_auc,
        random_search_auc: random_auc,
        files,
    };
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).map_err(|e| CliError::Io { path, source: e })?;
    Ok(summary)
}

/// Variants become the hyperparameter axis, tasks the second and seeds the
/// third; all variants must share the grid, the tasks and the seed list.
fn search_tensor(groups: &[Group]) -> Result<ScoreTensor, CliError> {
    let steps = groups[0].steps.clone();
    let seeds = groups[0].seeds();
    let mut tasks: Vec<String> = groups[0].runs.iter().map(|r| r.header.task.clone()).collect();
    tasks.sort();
    tasks.dedup();
    let mut data = Vec::new();
    for g in groups {
        if g.steps != steps || g.seeds() != seeds {
            return Err(CliError::Record(format!(
                "variant `{}` does not share the checkpoint grid and seed list of `{}`",
                g.name, groups[0].name
            )));
        }
        let per_task = tasks
            .iter()
            .map(|task| {
                g.runs
                    .iter()
                    .filter(|r| &r.header.task == task)
                    .map(|r| r.checkpoints.iter().map(|c| c.value).collect())
                    .collect::<Vec<Vec<f64>>>()
            })
            .collect();
        data.push(per_task);
    }
    Ok(ScoreTensor::new(steps, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaqn::harness::{Checkpoint, RecordHeader, SelectionEvent};

    fn record(variant: &str, seed: u64, values: &[f64], psis: &[usize]) -> RunRecord {
        let mut r = RunRecord::new(RecordHeader::new("adadqn", variant, "cartpole", seed, 3));
        r.checkpoints = values.iter().enumerate().map(|(i, &v)| Checkpoint { step: 100 * (i as u64 + 1), value: v }).collect();
        r.selections = psis
            .iter()
            .enumerate()
            .map(|(i, &p)| SelectionEvent { step: 50 * (i as u64 + 1), selected: vec![p], losses: vec![0.0; 3], behavior_counts: vec![1, 2, 3] })
            .collect();
        r
    }

    fn dump(dir: &Path, recs: &[RunRecord]) {
        let _ = fs::remove_dir_all(dir);
        fs::create_dir_all(dir).unwrap();
        for (i, r) in recs.iter().enumerate() {
            fs::write(dir.join(format!("r{i}.jsonl")), r.to_jsonl()).unwrap();
        }
    }

    fn tmp(name: &str) -> PathBuf {
        std::env::temp_dir().join(format!("adaqn-report-{name}-{}", std::process::id()))
    }

    #[test]
    fn single_run_curve_is_raw() {
        let dir = tmp("single");
        dump(&dir, &[record("a", 0, &[1.0, 4.0, 2.5], &[0, 1])]);
        let out = dir.join("report");
        let s = report(&dir, &out, &ReportOptions::default()).unwrap();
        let csv = fs::read_to_string(out.join("curve_a.csv")).unwrap();
        assert_eq!(csv, "step,metric,lo,hi\n100,1,1,1\n200,4,4,4\n300,2.5,2.5,2.5\n");
        assert_eq!(s.variants[0].final_iqm, 2.5);
    }

    #[test]
    fn selection_columns_count_events() {
        let dir = tmp("hist");
        let psis = [0, 0, 1, 2, 2, 2];
        dump(&dir, &[record("a", 0, &[1.0, 2.0], &psis), record("a", 1, &[1.0, 2.0], &psis), record("a", 2, &[1.0, 2.0], &psis)]);
        let out = dir.join("report");
        let opts = ReportOptions { bins: 3, ..ReportOptions::default() };
        report(&dir, &out, &opts).unwrap();
        let csv = fs::read_to_string(out.join("selection_a.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let f: Vec<u64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            // 3 seeds x 2 target updates per bin
            assert_eq!(f[3], 6);
            assert_eq!(f[4..].iter().sum::<u64>(), 6);
        }
    }

    #[test]
    fn mixed_grids_rejected() {
        let dir = tmp("mixed");
        dump(&dir, &[record("a", 0, &[1.0, 2.0], &[]), record("a", 1, &[1.0, 2.0, 3.0], &[])]);
        assert!(report(&dir, &dir.join("report"), &ReportOptions::default()).is_err());
    }

    #[test]
    fn suite_ranking_and_search() {
        let dir = tmp("suite");
        dump(
            &dir,
            &[
                record("low", 0, &[1.0, 1.0], &[]),
                record("low", 1, &[1.0, 1.0], &[]),
                record("high", 0, &[3.0, 3.0], &[]),
                record("high", 1, &[3.0, 3.0], &[]),
            ],
        );
        let out = dir.join("report");
        let s = report(&dir, &out, &ReportOptions::default()).unwrap();
        assert_eq!(s.ranking, vec!["high", "low"]);
        assert_eq!(s.grid_search_auc, Some(3.0));
        let random = fs::read_to_string(out.join("search_random.csv")).unwrap();
        // The first trial averages the two constants.
        assert!(random.lines().nth(1).unwrap().ends_with(",2"), "{random}");
        for f in ["curve_low.csv", "curve_high.csv", "auc.csv", "search_grid.csv", "summary.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
    }
}
