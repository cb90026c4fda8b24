//! Per-run metric stream, stored as line-delimited JSON: one header line
//! followed by one tagged line per event.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema_version: u32,
    pub software_version: String,
    pub kind: String,
    pub variant: String,
    /// Environment or task identifier; the stratum for bootstrap CIs.
    pub task: String,
    pub seed: u64,
    pub run_index: u64,
    pub config_hash: String,
    /// Number of ensemble members (or population size).
    pub members: usize,
}

impl RecordHeader {
    pub fn new(kind: &str, variant: &str, task: &str, seed: u64, members: usize) -> Self {
        Self {
            schema_version: RECORD_SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            variant: variant.to_string(),
            task: task.to_string(),
            seed,
            run_index: 0,
            config_hash: String::new(),
            members,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub step: u64,
    pub ret: f64,
}

/// One target selection: the chosen indices, the losses they were chosen
/// from, and how often each member acted since the previous selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub step: u64,
    pub selected: Vec<usize>,
    pub losses: Vec<f64>,
    pub behavior_counts: Vec<u64>,
}

/// One exploitation/exploration round of a population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationEvent {
    pub step: u64,
    pub fitness: Vec<f64>,
    pub parents: Vec<usize>,
    /// `(slot, mutation category)` for every mutated slot.
    pub mutations: Vec<(usize, String)>,
    /// Evaluation steps spent on each member before this round.
    pub eval_steps: Vec<u64>,
}

/// Environment-step accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLedger {
    pub train_env_steps: u64,
    pub eval_env_steps: u64,
    pub gradient_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RecordHeader),
    Checkpoint(Checkpoint),
    Episode(EpisodeEnd),
    Selection(SelectionEvent),
    Generation(GenerationEvent),
    Ledger(StepLedger),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub header: RecordHeader,
    pub checkpoints: Vec<Checkpoint>,
    pub episodes: Vec<EpisodeEnd>,
    pub selections: Vec<SelectionEvent>,
    pub generations: Vec<GenerationEvent>,
    pub ledger: StepLedger,
}

impl RunRecord {
    pub fn new(header: RecordHeader) -> Self {
        Self {
            header,
            checkpoints: Vec::new(),
            episodes: Vec::new(),
            selections: Vec::new(),
            generations: Vec::new(),
            ledger: StepLedger::default(),
        }
    }

    pub fn curve(&self) -> (Vec<u64>, Vec<f64>) {
        self.checkpoints.iter().map(|c| (c.step, c.value)).unzip()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut put = |line: &Line| -> std::io::Result<()> {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n")
        };
        put(&Line::Header(self.header.clone()))?;
        for c in &self.checkpoints {
            put(&Line::Checkpoint(*c))?;
        }
        for e in &self.episodes {
            put(&Line::Episode(*e))?;
        }
        for s in &self.selections {
            put(&Line::Selection(s.clone()))?;
        }
        for g in &self.generations {
            put(&Line::Generation(g.clone()))?;
        }
        put(&Line::Ledger(self.ledger))
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut record: Option<RunRecord> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("record line {}: {e}", i + 1)))?;
            match (parsed, record.as_mut()) {
                (Line::Header(h), None) => record = Some(RunRecord::new(h)),
                (Line::Header(_), Some(_)) => {
                    return Err(Error::Parse("duplicate record header".into()))
                }
                (_, None) => return Err(Error::Parse("record must start with a header".into())),
                (Line::Checkpoint(c), Some(rec)) => rec.checkpoints.push(c),
                (Line::Episode(e), Some(rec)) => rec.episodes.push(e),
                (Line::Selection(s), Some(rec)) => rec.selections.push(s),
                (Line::Generation(g), Some(rec)) => rec.generations.push(g),
                (Line::Ledger(l), Some(rec)) => rec.ledger = l,
            }
        }
        record.ok_or(Error::Empty("run record"))
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}

/// Turns a stream of episode returns into values on a fixed checkpoint grid:
/// each checkpoint reports the mean return of the episodes that finished
/// since the previous one, or repeats the previous value if none did.
#[derive(Clone, Debug, Default)]
pub struct ReturnTracker {
    pending: Vec<f64>,
    last: f64,
    episode_return: f64,
}

impl ReturnTracker {
    pub fn add_reward(&mut self, r: f64) {
        self.episode_return += r;
    }

    /// Closes the running episode and returns its total.
    pub fn end_episode(&mut self) -> f64 {
        let ret = std::mem::take(&mut self.episode_return);
        self.pending.push(ret);
        ret
    }

    pub fn checkpoint(&mut self) -> f64 {
        if !self.pending.is_empty() {
            self.last = self.pending.iter().sum::<f64>() / self.pending.len() as f64;
            self.pending.clear();
        }
        self.last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut rec = RunRecord::new(RecordHeader::new("adadqn", "adadqn", "cartpole", 3, 2));
        rec.checkpoints.push(Checkpoint { step: 10, value: 1.5 });
        rec.episodes.push(EpisodeEnd { step: 7, ret: 2.0 });
        rec.selections.push(SelectionEvent {
            step: 10,
            selected: vec![1],
            losses: vec![0.5, 0.25],
            behavior_counts: vec![4, 6],
        });
        rec.ledger.train_env_steps = 10;
        let text = rec.to_jsonl();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(RunRecord::from_jsonl(&text).unwrap(), rec);
    }

    #[test]
    fn header_required() {
        assert!(RunRecord::from_jsonl("{\"type\":\"checkpoint\",\"step\":1,\"value\":0.0}").is_err());
        assert!(RunRecord::from_jsonl("").is_err());
    }

    #[test]
    fn tracker_repeats_when_idle() {
        let mut t = ReturnTracker::default();
        assert_eq!(t.checkpoint(), 0.0);
        t.add_reward(3.0);
        t.end_episode();
        t.add_reward(5.0);
        t.end_episode();
        assert_eq!(t.checkpoint(), 4.0);
        t.add_reward(1.0);
        assert_eq!(t.checkpoint(), 4.0);
    }
}
