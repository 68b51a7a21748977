//! Two-phase validation of candidate streamliners against cached
//! baselines, checkpointed per (candidate, instance), and the metrics
//! computed from the resulting records.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{streamlined_solve, BaselineCache, CorpusError, Problem, SolverBackend, Status};

/// Floor applied to times in speedup ratios.
pub const TIMER_RESOLUTION: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum ValidError {
    #[error("no cached baseline for instance `{0}`")]
    MissingBaseline(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("record table {path}: {source}")]
    Table { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ValidError + '_ {
    move |source| ValidError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

fn sat() -> Status {
    Status::Sat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    #[serde(rename = "candidate_id")]
    pub candidate: String,
    #[serde(rename = "instance_id")]
    pub instance: String,
    pub phase: Phase,
    pub status: Status,
    #[serde(rename = "elapsed_s")]
    pub elapsed: f64,
    #[serde(rename = "baseline_s")]
    pub baseline: f64,
    pub seed: u64,
    #[serde(default = "sat")]
    pub baseline_status: Status,
}

impl ValidationRecord {
    fn key(&self) -> (String, String, Phase) {
        (self.candidate.clone(), self.instance.clone(), self.phase)
    }
}

/// `t_b / t_c` when both the streamliner and the baseline returned SAT.
pub fn per_instance_speedup(r: &ValidationRecord) -> Option<f64> {
    (r.status == Status::Sat && r.baseline_status == Status::Sat)
        .then(|| r.baseline.max(TIMER_RESOLUTION) / r.elapsed.max(TIMER_RESOLUTION))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomeanSummary {
    pub geomean: Option<f64>,
    pub retained: usize,
    pub max: Option<f64>,
}

pub fn geomean_speedup<'a>(records: impl IntoIterator<Item = &'a ValidationRecord>) -> GeomeanSummary {
    let speedups: Vec<f64> = records.into_iter().filter_map(per_instance_speedup).collect();
    if speedups.is_empty() {
        return GeomeanSummary { geomean: None, retained: 0, max: None };
    }
    let mean_log = speedups.iter().map(|s| s.ln()).sum::<f64>() / speedups.len() as f64;
    GeomeanSummary {
        geomean: Some(mean_log.exp()),
        retained: speedups.len(),
        max: speedups.iter().copied().reduce(f64::max),
    }
}

/// `sum_i max(0, t_b - t_c)` over SAT records.
pub fn training_score<'a>(records: impl IntoIterator<Item = &'a ValidationRecord>) -> f64 {
    records.into_iter().filter(|r| r.status == Status::Sat).map(|r| (r.baseline - r.elapsed).max(0.0)).sum()
}

/// Oracle savings from the fastest SAT record per instance.
pub fn pool_ceiling(records: &[ValidationRecord], baselines: &BTreeMap<String, f64>) -> f64 {
    let total: f64 = baselines.values().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let best: f64 = baselines
        .iter()
        .map(|(inst, &tb)| {
            records
                .iter()
                .filter(|r| &r.instance == inst && r.status == Status::Sat)
                .map(|r| r.elapsed)
                .fold(tb, f64::min)
        })
        .sum();
    (total - best) / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub candidate: String,
    pub sat: usize,
    pub unsat: usize,
    pub timeout: usize,
    pub error: usize,
    pub geomean: Option<f64>,
    pub retained: usize,
    pub max_speedup: Option<f64>,
}

/// Per-candidate counts and speedups, candidates in first-seen order.
pub fn candidate_metrics(records: &[ValidationRecord]) -> Vec<CandidateMetrics> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.candidate.as_str()) {
            order.push(&r.candidate);
        }
    }
    order
        .into_iter()
        .map(|c| {
            let mine: Vec<&ValidationRecord> = records.iter().filter(|r| r.candidate == c).collect();
            let count = |s: Status| mine.iter().filter(|r| r.status == s).count();
            let g = geomean_speedup(mine.iter().copied());
            CandidateMetrics {
                candidate: c.to_string(),
                sat: count(Status::Sat),
                unsat: count(Status::Unsat),
                timeout: count(Status::Timeout),
                error: count(Status::Error),
                geomean: g.geomean,
                retained: g.retained,
                max_speedup: g.max,
            }
        })
        .collect()
}

/// Append-only JSONL record file; completed pairs are never re-run.
pub struct RecordStore {
    path: PathBuf,
    inner: Mutex<(Vec<ValidationRecord>, HashSet<(String, String, Phase)>)>,
}

impl RecordStore {
    pub fn open(path: PathBuf) -> Result<Self, ValidError> {
        let mut records = Vec::new();
        let mut keys = HashSet::new();
        if path.exists() {
            let f = std::fs::File::open(&path).map_err(io_err(&path))?;
            for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: ValidationRecord = serde_json::from_str(&line).map_err(|e| ValidError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                if keys.insert(r.key()) {
                    records.push(r);
                }
            }
        }
        Ok(RecordStore { path, inner: Mutex::new((records, keys)) })
    }

    pub fn contains(&self, candidate: &str, instance: &str, phase: Phase) -> bool {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        g.1.contains(&(candidate.to_string(), instance.to_string(), phase))
    }

    /// Appends unless the pair is already recorded; returns whether it was.
    pub fn append(&self, r: ValidationRecord) -> Result<bool, ValidError> {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if g.1.contains(&r.key()) {
            return Ok(false);
        }
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut f =
            std::fs::OpenOptions::new().create(true).append(true).open(&self.path).map_err(io_err(&self.path))?;
        writeln!(f, "{}", serde_json::to_string(&r).expect("record serializes")).map_err(io_err(&self.path))?;
        g.1.insert(r.key());
        g.0.push(r);
        Ok(true)
    }

    pub fn records(&self) -> Vec<ValidationRecord> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).0.clone()
    }
}

const TABLE_HEADER: [&str; 7] = ["candidate_id", "instance_id", "phase", "status", "elapsed_s", "baseline_s", "seed"];

/// Flat table, one row per (candidate, instance, phase).
pub fn write_table(path: &Path, records: &[ValidationRecord]) -> Result<(), ValidError> {
    let table = |source| ValidError::Table { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(table)?;
    w.write_record(TABLE_HEADER).map_err(table)?;
    for r in records {
        let phase = match r.phase {
            Phase::Train => "train",
            Phase::Test => "test",
        };
        w.write_record([
            r.candidate.as_str(),
            &r.instance,
            phase,
            r.status.as_str(),
            &r.elapsed.to_string(),
            &r.baseline.to_string(),
            &r.seed.to_string(),
        ])
        .map_err(table)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_table(path: &Path) -> Result<Vec<ValidationRecord>, ValidError> {
    let table = |source| ValidError::Table { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(table)?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(table)?;
        let bad = |m: &str| ValidError::Corrupt { path: path.to_path_buf(), line: i + 2, message: m.to_string() };
        let num = |k: usize| row.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("bad number"));
        out.push(ValidationRecord {
            candidate: row.get(0).ok_or_else(|| bad("missing candidate"))?.to_string(),
            instance: row.get(1).ok_or_else(|| bad("missing instance"))?.to_string(),
            phase: match row.get(2) {
                Some("train") => Phase::Train,
                Some("test") => Phase::Test,
                _ => return Err(bad("bad phase")),
            },
            status: row.get(3).and_then(Status::parse).ok_or_else(|| bad("bad status"))?,
            elapsed: num(4)?,
            baseline: num(5)?,
            seed: row.get(6).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad seed"))?,
            baseline_status: Status::Sat,
        });
    }
    Ok(out)
}

pub struct PhaseRequest<'a> {
    pub problem: &'a Problem,
    pub backend: &'a dyn SolverBackend,
    pub cache: &'a BaselineCache,
    /// `(candidate id, constraint text)`
    pub candidates: &'a [(String, String)],
    pub instances: &'a [String],
    pub phase: Phase,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PhaseResult {
    pub records: Vec<ValidationRecord>,
    pub solves_run: usize,
    /// Candidates SAT and faster than baseline on at least one instance.
    pub survivors: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

/// Solve every pending (candidate, instance) pair with cap `t_b(i)`.
pub fn validate_phase(req: &PhaseRequest, store: &RecordStore) -> Result<PhaseResult, ValidError> {
    let mut baselines = BTreeMap::new();
    for inst in req.instances {
        let b = req.cache.get(req.problem.id(), inst).ok_or_else(|| ValidError::MissingBaseline(inst.clone()))?;
        baselines.insert(inst.clone(), b);
    }
    let pending: Vec<(&String, &String, &String)> = req
        .candidates
        .iter()
        .flat_map(|(id, text)| req.instances.iter().map(move |inst| (id, text, inst)))
        .filter(|(id, _, inst)| !store.contains(id, inst, req.phase))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(req.workers.max(1))
        .build()
        .map_err(|e| ValidError::Io { path: PathBuf::new(), source: std::io::Error::other(e.to_string()) })?;
    let solved: Result<Vec<()>, ValidError> = pool.install(|| {
        pending
            .par_iter()
            .map(|(id, text, inst)| {
                let base = &baselines[*inst];
                let out = streamlined_solve(
                    req.problem,
                    req.backend,
                    req.cache,
                    inst,
                    std::slice::from_ref(*text),
                    base.elapsed,
                    req.seed,
                )?;
                store.append(ValidationRecord {
                    candidate: (*id).clone(),
                    instance: (*inst).clone(),
                    phase: req.phase,
                    status: out.status,
                    elapsed: out.elapsed.min(base.elapsed),
                    baseline: base.elapsed,
                    seed: req.seed,
                    baseline_status: base.status,
                })?;
                Ok(())
            })
            .collect()
    });
    solved?;

    let ids: HashSet<&str> = req.candidates.iter().map(|(id, _)| id.as_str()).collect();
    let insts: HashSet<&str> = req.instances.iter().map(String::as_str).collect();
    let records: Vec<ValidationRecord> = store
        .records()
        .into_iter()
        .filter(|r| r.phase == req.phase && ids.contains(r.candidate.as_str()) && insts.contains(r.instance.as_str()))
        .collect();
    let mut survivors = Vec::new();
    let mut scores = BTreeMap::new();
    for (id, _) in req.candidates {
        let mine: Vec<&ValidationRecord> = records.iter().filter(|r| &r.candidate == id).collect();
        if mine.iter().any(|r| r.status == Status::Sat && r.elapsed < r.baseline) {
            survivors.push(id.clone());
        }
        scores.insert(id.clone(), training_score(mine.iter().copied()));
    }
    Ok(PhaseResult { records, solves_run: pending.len(), survivors, scores })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(c: &str, i: &str, status: Status, tc: f64, tb: f64) -> ValidationRecord {
        ValidationRecord {
            candidate: c.into(),
            instance: i.into(),
            phase: Phase::Test,
            status,
            elapsed: tc,
            baseline: tb,
            seed: 0,
            baseline_status: Status::Sat,
        }
    }

    #[test]
    fn speedups() {
        assert!((per_instance_speedup(&rec("c", "i", Status::Sat, 0.1, 100.0)).unwrap() - 1000.0).abs() < 1e-9);
        assert_eq!(per_instance_speedup(&rec("c", "i", Status::Unsat, 0.1, 100.0)), None);
        assert_eq!(per_instance_speedup(&rec("c", "i", Status::Sat, 5.0, 5.0)), Some(1.0));
        let g = geomean_speedup(&[rec("c", "a", Status::Sat, 10.0, 100.0), rec("c", "b", Status::Sat, 0.1, 100.0)]);
        assert!((g.geomean.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(g.retained, 2);
        let g = geomean_speedup(&[rec("c", "a", Status::Sat, 1.0, 7.0)]);
        assert!((g.geomean.unwrap() - 7.0).abs() < 1e-12);
        let g = geomean_speedup(&[rec("c", "a", Status::Unsat, 1.0, 7.0)]);
        assert_eq!((g.geomean, g.retained), (None, 0));
        // zero elapsed clamps instead of dividing by zero
        assert_eq!(per_instance_speedup(&rec("c", "i", Status::Sat, 0.0, 1.0)), Some(1000.0));
    }

    #[test]
    fn scores_and_ceiling() {
        let rs = [
            rec("c", "a", Status::Sat, 5.0, 10.0),
            rec("c", "b", Status::Unsat, 1.0, 10.0),
            rec("c", "d", Status::Timeout, 10.0, 10.0),
        ];
        assert_eq!(training_score(&rs), 5.0);
        let tb: BTreeMap<String, f64> = [("a", 10.0), ("b", 10.0), ("d", 10.0)].map(|(k, v)| (k.to_string(), v)).into();
        assert!((pool_ceiling(&rs, &tb) - 5.0 / 30.0).abs() < 1e-12);
        assert_eq!(pool_ceiling(&[], &tb), 0.0);
        let tenth: Vec<_> = ["a", "b", "d"].iter().map(|i| rec("x", i, Status::Sat, 1.0, 10.0)).collect();
        assert!((pool_ceiling(&tenth, &tb) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn store_is_append_only_and_table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let s = RecordStore::open(path.clone()).unwrap();
        assert!(s.append(rec("c", "a", Status::Sat, 1.0, 2.0)).unwrap());
        assert!(!s.append(rec("c", "a", Status::Unsat, 1.0, 2.0)).unwrap());
        let s = RecordStore::open(path).unwrap();
        assert_eq!(s.records().len(), 1);
        assert!(s.contains("c", "a", Phase::Test));
        let t = dir.path().join("records.csv");
        write_table(&t, &s.records()).unwrap();
        assert_eq!(read_table(&t).unwrap(), s.records());
        assert!(std::fs::read_to_string(&t).unwrap().starts_with("candidate_id,instance_id,phase,status,elapsed_s,baseline_s,seed"));
    }
}
