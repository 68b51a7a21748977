//! Problems, instances, solver backends, solution corpora and the baseline
//! cache.

mod backend;
mod external;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::minicp::{Assignment, MiniCpError, MiniModel, ModelFile, ParamSource};

pub use backend::{BuiltinBackend, Enumeration, SolverBackend};
pub use external::{parse_solver_stream, ExternalBackend, StreamSummary, MINIZINC_ENV};
pub use store::{BaselineCache, CorpusStore};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    MiniCp(#[from] MiniCpError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("problem file {path}: {message}")]
    Problem { path: PathBuf, message: String },
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("instance `{0}` is not a training instance")]
    NotTraining(String),
    #[error("instance unsatisfiable: `{0}`")]
    Unsatisfiable(String),
    #[error("no solutions for `{0}` within the enumeration budget")]
    NoSolutions(String),
    #[error("solution {0} violates the base model")]
    InvalidSolution(String),
    #[error("no baseline cached for `{0}`; run baseline_solve first")]
    NoBaseline(String),
    #[error("cap exceeds baseline contract: cap {cap} > baseline {baseline} on `{instance}`")]
    CapExceedsBaseline { instance: String, cap: f64, baseline: f64 },
    #[error("failed to launch solver {exe}: {message}")]
    Launch { exe: String, message: String },
    #[error("corrupt record in {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Matrix,
    Permutation,
    Assignment,
    PackingCoords,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Matrix => "matrix",
            ShapeKind::Permutation => "permutation",
            ShapeKind::Assignment => "assignment",
            ShapeKind::PackingCoords => "packing_coords",
        }
    }
}

/// Variable and parameter names the packing encoder reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingNames {
    #[serde(default = "d_left")]
    pub left: String,
    #[serde(default = "d_bottom")]
    pub bottom: String,
    #[serde(default = "d_rotated")]
    pub rotated: String,
    #[serde(default = "d_width")]
    pub width: String,
    #[serde(default = "d_length")]
    pub length: String,
    #[serde(default = "d_class")]
    pub class: String,
    #[serde(default = "d_deck_width")]
    pub deck_width: String,
    #[serde(default = "d_deck_length")]
    pub deck_length: String,
}

fn d_left() -> String {
    "Left".into()
}
fn d_bottom() -> String {
    "Bottom".into()
}
fn d_rotated() -> String {
    "rotated".into()
}
fn d_width() -> String {
    "width".into()
}
fn d_length() -> String {
    "length".into()
}
fn d_class() -> String {
    "class".into()
}
fn d_deck_width() -> String {
    "deck_width".into()
}
fn d_deck_length() -> String {
    "deck_length".into()
}

impl Default for PackingNames {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

/// Contents of a `problem.toml`.
///
/// ```toml
/// id = "latin_square"
/// kind = "matrix"            # matrix | permutation | assignment | packing_coords
/// model = "model.toml"       # builtin model, relative to the problem file
/// external_model = "model.mzn"
/// primary = "a"              # variable the encoders read
/// size_param = "n"           # instance size used by progression tables
/// train = ["n4"]
/// test = ["p5_1"]
///
/// [instances.n4]
/// n = 4
/// ```
///
/// Instance tables override model parameters. Packing problems may add a
/// `[packing]` table renaming the coordinate variables and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub kind: ShapeKind,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub external_model: Option<PathBuf>,
    #[serde(default)]
    pub primary: Option<String>,
    #[serde(default)]
    pub size_param: Option<String>,
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
    #[serde(default)]
    pub instances: BTreeMap<String, BTreeMap<String, ParamSource>>,
    #[serde(default)]
    pub packing: PackingNames,
}

/// A loaded problem: spec, its directory and the builtin model file.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub dir: PathBuf,
    pub model_file: Option<ModelFile>,
}

impl Problem {
    pub fn load(path: &Path) -> Result<Problem, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let spec: ProblemSpec = toml::from_str(&text)
            .map_err(|e| CorpusError::Problem { path: path.to_path_buf(), message: e.to_string() })?;
        let model_file = match &spec.model {
            Some(m) => {
                let mp = dir.join(m);
                let mt = std::fs::read_to_string(&mp).map_err(io_err(&mp))?;
                Some(ModelFile::from_toml_str(&mt)?)
            }
            None => None,
        };
        Problem::new(spec, dir, model_file)
            .map_err(|message| CorpusError::Problem { path: path.to_path_buf(), message })
    }

    pub fn new(spec: ProblemSpec, dir: PathBuf, model_file: Option<ModelFile>) -> Result<Problem, String> {
        if spec.model.is_none() && model_file.is_none() && spec.external_model.is_none() {
            return Err("needs `model` or `external_model`".into());
        }
        for id in spec.train.iter().chain(&spec.test) {
            if !spec.instances.contains_key(id) {
                return Err(format!("instance `{id}` listed but not defined"));
            }
        }
        if let Some(id) = spec.train.iter().find(|t| spec.test.contains(t)) {
            return Err(format!("instance `{id}` is both a training and a test instance"));
        }
        Ok(Problem { spec, dir, model_file })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn kind(&self) -> ShapeKind {
        self.spec.kind
    }

    pub fn overrides(&self, instance: &str) -> Result<&BTreeMap<String, ParamSource>, CorpusError> {
        self.spec
            .instances
            .get(instance)
            .ok_or_else(|| CorpusError::UnknownInstance(instance.to_string()))
    }

    /// The builtin model instantiated for `instance`.
    pub fn model(&self, instance: &str) -> Result<MiniModel, CorpusError> {
        let mf = self.model_file.as_ref().ok_or_else(|| CorpusError::Problem {
            path: self.dir.clone(),
            message: "no builtin model".into(),
        })?;
        Ok(mf.instantiate(self.overrides(instance)?)?)
    }

    /// Name of the variable the encoders read; defaults to the first one.
    pub fn primary_var(&self, model: &MiniModel) -> String {
        self.spec.primary.clone().unwrap_or_else(|| model.vars[0].name.clone())
    }

    /// Instance size for progression tables: the `size_param` value, else
    /// the primary variable's element count.
    pub fn instance_size(&self, instance: &str) -> Result<i64, CorpusError> {
        let m = self.model(instance)?;
        if let Some(p) = &self.spec.size_param {
            if let Some(v) = m.param_int(p) {
                return Ok(v);
            }
        }
        let pv = self.primary_var(&m);
        Ok(m.var(&pv).map(|v| v.len() as i64).unwrap_or(0))
    }
}

/// One feasible assignment, keyed by variable name, each array row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub instance: String,
    pub index: usize,
    pub vars: BTreeMap<String, Vec<i64>>,
}

impl Solution {
    pub fn from_assignment(instance: &str, index: usize, model: &MiniModel, a: &Assignment) -> Solution {
        let vars = model.vars.iter().zip(a).map(|(d, v)| (d.name.clone(), v.clone())).collect();
        Solution { instance: instance.to_string(), index, vars }
    }

    pub fn id(&self) -> String {
        format!("{}#{}", self.instance, self.index)
    }

    /// Values in model declaration order; `None` when a variable is missing
    /// or has the wrong length.
    pub fn to_assignment(&self, model: &MiniModel) -> Option<Assignment> {
        model
            .vars
            .iter()
            .map(|d| self.vars.get(&d.name).filter(|v| v.len() == d.len()).cloned())
            .collect()
    }

    pub fn get(&self, var: &str) -> Option<&[i64]> {
        self.vars.get(var).map(|v| v.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNSAT")]
    Unsat,
    #[serde(rename = "TIMEOUT")]
    Timeout,
    #[serde(rename = "ERROR")]
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Sat => "SAT",
            Status::Unsat => "UNSAT",
            Status::Timeout => "TIMEOUT",
            Status::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        Some(match s {
            "SAT" => Status::Sat,
            "UNSAT" => Status::Unsat,
            "TIMEOUT" => Status::Timeout,
            "ERROR" => Status::Error,
            _ => return None,
        })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: Status,
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
    pub backend: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

impl SolveOutcome {
    pub fn error(backend: &str, seed: u64, message: String) -> Self {
        SolveOutcome { status: Status::Error, elapsed: 0.0, solution: None, backend: backend.into(), seed, diagnostics: Some(message) }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusReport {
    pub solutions: Vec<Solution>,
    pub fewer_than_target: bool,
    pub exhausted: bool,
}

/// Enumerate (or load from `store`) up to `target_n` solutions of a training
/// instance.
pub fn enumerate_training_corpus(
    problem: &Problem,
    backend: &dyn SolverBackend,
    store: &CorpusStore,
    instance: &str,
    target_n: usize,
    budget: f64,
    seed: u64,
) -> Result<CorpusReport, CorpusError> {
    if !problem.spec.train.iter().any(|t| t == instance) {
        return Err(CorpusError::NotTraining(instance.to_string()));
    }
    if target_n == 0 {
        return Err(CorpusError::Problem { path: problem.dir.clone(), message: "target_n must be at least 1".into() });
    }
    if let Some(stored) = store.load(instance)? {
        let n = stored.solutions.len();
        return Ok(CorpusReport {
            fewer_than_target: n < target_n,
            exhausted: stored.exhausted,
            solutions: stored.solutions,
        });
    }
    let en = backend.enumerate(problem, instance, target_n, budget, seed)?;
    if en.solutions.is_empty() {
        return Err(if en.exhausted {
            CorpusError::Unsatisfiable(instance.to_string())
        } else {
            CorpusError::NoSolutions(instance.to_string())
        });
    }
    if problem.model_file.is_some() {
        let model = problem.model(instance)?;
        let ev = crate::minicp::Evaluator::new(&model);
        for s in &en.solutions {
            let a = s.to_assignment(&model).ok_or_else(|| CorpusError::InvalidSolution(s.id()))?;
            for c in &model.constraints {
                if !ev.eval_bool(c, &a)? {
                    return Err(CorpusError::InvalidSolution(s.id()));
                }
            }
        }
    }
    store.save(instance, &en.solutions, en.exhausted)?;
    Ok(CorpusReport {
        fewer_than_target: en.solutions.len() < target_n,
        exhausted: en.exhausted,
        solutions: en.solutions,
    })
}

/// Cached baseline for `instance`, solving once on a miss.
pub fn baseline_solve(
    problem: &Problem,
    backend: &dyn SolverBackend,
    cache: &BaselineCache,
    instance: &str,
    timeout: f64,
    seed: u64,
) -> Result<SolveOutcome, CorpusError> {
    if let Some(hit) = cache.get(problem.id(), instance) {
        return Ok(hit);
    }
    let out = backend.solve(problem, instance, &[], timeout, seed)?;
    cache.insert(problem.id(), instance, out)
}

/// Solve with extra constraints under a cap no larger than the cached
/// baseline time.
pub fn streamlined_solve(
    problem: &Problem,
    backend: &dyn SolverBackend,
    cache: &BaselineCache,
    instance: &str,
    extra: &[String],
    cap: f64,
    seed: u64,
) -> Result<SolveOutcome, CorpusError> {
    let base = cache
        .get(problem.id(), instance)
        .ok_or_else(|| CorpusError::NoBaseline(instance.to_string()))?;
    if cap > base.elapsed {
        return Err(CorpusError::CapExceedsBaseline { instance: instance.to_string(), cap, baseline: base.elapsed });
    }
    let mut out = backend.solve(problem, instance, extra, cap, seed)?;
    if out.status != Status::Error && out.elapsed > cap {
        out.status = Status::Timeout;
        out.solution = None;
    }
    if out.status == Status::Timeout {
        out.elapsed = cap;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn latin_problem() -> Problem {
        let model = ModelFile::from_toml_str(
            r#"
name = "latin"
constraints = [
  'forall(i in 1..n)(alldifferent([a[i, j] | j in 1..n]))',
  'forall(j in 1..n)(alldifferent([a[i, j] | i in 1..n]))',
]
[params]
n = 4
[[var]]
name = "a"
shape = ["1..n", "1..n"]
domain = "1..n"
"#,
        )
        .unwrap();
        let spec: ProblemSpec = toml::from_str(
            r#"
id = "latin"
kind = "matrix"
model = "model.toml"
train = ["n3", "n4"]
test = ["n5"]
[instances.n3]
n = 3
[instances.n4]
n = 4
[instances.n5]
n = 5
"#,
        )
        .unwrap();
        Problem::new(spec, PathBuf::from("."), Some(model)).unwrap()
    }

    fn backend() -> BuiltinBackend {
        BuiltinBackend::default()
    }

    #[test]
    fn enumerates_and_flags_short_corpora() {
        let p = latin_problem();
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::new(dir.path().join("corpus"));
        let r = enumerate_training_corpus(&p, &backend(), &store, "n4", 500, 60.0, 0).unwrap();
        assert_eq!(r.solutions.len(), 500);
        assert!(!r.fewer_than_target);
        let r = enumerate_training_corpus(&p, &backend(), &store, "n3", 500, 60.0, 0).unwrap();
        assert_eq!(r.solutions.len(), 12);
        assert!(r.fewer_than_target && r.exhausted);
        let again = enumerate_training_corpus(&p, &backend(), &store, "n3", 500, 60.0, 0).unwrap();
        assert_eq!(again.solutions, r.solutions);
        assert!(matches!(
            enumerate_training_corpus(&p, &backend(), &store, "n5", 5, 60.0, 0),
            Err(CorpusError::NotTraining(_))
        ));
    }

    #[test]
    fn unsat_instance_reported() {
        let mut p = latin_problem();
        p.model_file.as_mut().unwrap().constraints.push("a[1,1] = 0".into());
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::new(dir.path().to_path_buf());
        let err = enumerate_training_corpus(&p, &backend(), &store, "n3", 10, 10.0, 0).unwrap_err();
        assert!(err.to_string().contains("instance unsatisfiable"), "{err}");
    }

    #[test]
    fn baseline_cache_and_cap_contract() {
        let p = latin_problem();
        let dir = tempfile::tempdir().unwrap();
        let cache = BaselineCache::open(dir.path().join("baselines.jsonl")).unwrap();
        let b = backend();
        assert!(matches!(
            streamlined_solve(&p, &b, &cache, "n5", &[], 1.0, 0),
            Err(CorpusError::NoBaseline(_))
        ));
        let first = baseline_solve(&p, &b, &cache, "n5", 60.0, 0).unwrap();
        assert_eq!(first.status, Status::Sat);
        assert!(first.elapsed > 0.0);
        let second = baseline_solve(&p, &b, &cache, "n5", 60.0, 0).unwrap();
        assert_eq!(first, second);
        let reopened = BaselineCache::open(dir.path().join("baselines.jsonl")).unwrap();
        assert_eq!(reopened.get("latin", "n5").unwrap(), first);

        let unsat = streamlined_solve(&p, &b, &cache, "n5", &["1 = 2".into()], first.elapsed, 0).unwrap();
        assert_eq!(unsat.status, Status::Unsat);
        let err = streamlined_solve(&p, &b, &cache, "n5", &[], first.elapsed * 2.0, 0).unwrap_err();
        assert!(err.to_string().contains("cap exceeds baseline contract"));
        let broken = streamlined_solve(&p, &b, &cache, "n5", &["a[1,1] = = 2".into()], first.elapsed, 0).unwrap();
        assert_eq!(broken.status, Status::Error);
        assert!(broken.diagnostics.is_some());
    }

    #[test]
    fn tiny_timeout() {
        let p = latin_problem();
        let out = backend().solve(&p, "n5", &[], 0.000001, 0).unwrap();
        assert_eq!(out.status, Status::Timeout);
    }
}
