use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{io_err, CorpusError, Solution, SolveOutcome};

/// Enumerated solutions, one JSON object per line in `<dir>/<instance>.jsonl`.
/// A `<instance>.meta.json` sidecar written last marks the file complete.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusMeta {
    instance: String,
    count: usize,
    exhausted: bool,
}

pub struct StoredCorpus {
    pub solutions: Vec<Solution>,
    pub exhausted: bool,
}

impl CorpusStore {
    pub fn new(dir: PathBuf) -> Self {
        CorpusStore { dir }
    }

    fn paths(&self, instance: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{instance}.jsonl")), self.dir.join(format!("{instance}.meta.json")))
    }

    pub fn load(&self, instance: &str) -> Result<Option<StoredCorpus>, CorpusError> {
        let (data, meta) = self.paths(instance);
        if !meta.exists() {
            return Ok(None);
        }
        let m: CorpusMeta = serde_json::from_str(&fs::read_to_string(&meta).map_err(io_err(&meta))?)
            .map_err(|e| CorpusError::Corrupt { path: meta.clone(), line: 1, message: e.to_string() })?;
        let f = fs::File::open(&data).map_err(io_err(&data))?;
        let mut solutions = Vec::with_capacity(m.count);
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(&data))?;
            let s: Solution = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Corrupt { path: data.clone(), line: i + 1, message: e.to_string() })?;
            solutions.push(s);
        }
        if solutions.len() != m.count {
            return Err(CorpusError::Corrupt {
                path: data,
                line: solutions.len(),
                message: format!("expected {} solutions", m.count),
            });
        }
        Ok(Some(StoredCorpus { solutions, exhausted: m.exhausted }))
    }

    pub fn save(&self, instance: &str, solutions: &[Solution], exhausted: bool) -> Result<(), CorpusError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let (data, meta) = self.paths(instance);
        let mut text = String::new();
        for s in solutions {
            text.push_str(&serde_json::to_string(s).expect("solution serializes"));
            text.push('\n');
        }
        fs::write(&data, text).map_err(io_err(&data))?;
        let m = CorpusMeta { instance: instance.to_string(), count: solutions.len(), exhausted };
        fs::write(&meta, serde_json::to_string(&m).expect("meta serializes")).map_err(io_err(&meta))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineLine {
    problem: String,
    instance: String,
    outcome: SolveOutcome,
}

/// Write-once baseline outcomes keyed by (problem, instance), persisted as
/// an append-only JSONL file.
#[derive(Debug)]
pub struct BaselineCache {
    path: PathBuf,
    entries: RwLock<BTreeMap<(String, String), SolveOutcome>>,
}

impl BaselineCache {
    pub fn open(path: PathBuf) -> Result<Self, CorpusError> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let f = fs::File::open(&path).map_err(io_err(&path))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let b: BaselineLine = serde_json::from_str(&line)
                    .map_err(|e| CorpusError::Corrupt { path: path.clone(), line: i + 1, message: e.to_string() })?;
                entries.entry((b.problem, b.instance)).or_insert(b.outcome);
            }
        }
        Ok(BaselineCache { path, entries: RwLock::new(entries) })
    }

    pub fn get(&self, problem: &str, instance: &str) -> Option<SolveOutcome> {
        let e = self.entries.read().expect("baseline lock");
        e.get(&(problem.to_string(), instance.to_string())).cloned()
    }

    /// Store `outcome` unless a record exists; returns the record that is
    /// now cached.
    pub fn insert(&self, problem: &str, instance: &str, outcome: SolveOutcome) -> Result<SolveOutcome, CorpusError> {
        let mut e = self.entries.write().expect("baseline lock");
        let key = (problem.to_string(), instance.to_string());
        if let Some(existing) = e.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let line = BaselineLine { problem: key.0.clone(), instance: key.1.clone(), outcome: outcome.clone() };
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err(&self.path))?;
        writeln!(f, "{}", serde_json::to_string(&line).expect("baseline serializes")).map_err(io_err(&self.path))?;
        e.insert(key, outcome.clone());
        Ok(outcome)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("baseline lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
