//! Stage runner. Each stage reads earlier artifacts from the run directory,
//! writes its own, and finishes by writing a manifest; a stage whose
//! manifest matches the current config is skipped.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cnn::{
    generate_negatives, select_contrast_pairs, train_ensemble, CnnConfig, CnnError, ContrastPair, FilterRecord,
    TrainReport,
};
use crate::corpus::{
    baseline_solve, enumerate_training_corpus, BaselineCache, BuiltinBackend, CorpusError, CorpusStore,
    ExternalBackend, Problem, Solution, SolverBackend,
};
use crate::correlate::{correlate, rank_properties, CorrelateError, CorrelationMatrix, RankedProperty};
use crate::encode::{encode, EncodeError, SolutionTensor};
use crate::grid::write_grid;
use crate::minicp::MiniModel;
use crate::pool::{cluster, cluster_report, expand_representatives, pool_across_instances, Extrapolation, Representative};
use crate::portfolio::{
    race_all, select_family_budget, select_simple_top_k, sweep_km, PortfolioError, RaceResult, RecordIndex,
    ScoredCandidate, Savings, SweepCell, DEFAULT_MS,
};
use crate::props::{
    catalog, classify_properties, compute_properties, progression_table, FormCtx, Progression, PropForm,
    PropertyStats, PropertyVector, PropsError,
};
use crate::synth::{
    build_discovery_payload, build_stats_payload, dedup, parse_candidates, read_candidates, synthesize_templates,
    write_candidates, CandidateStreamliner, GenParams, LiveBackend, LlmBackend, LlmRequest, Method, Origin, Purpose,
    ReplayBackend, StatsInput, StubBackend, SynthError,
};
use crate::valid::{
    candidate_metrics, pool_ceiling, validate_phase, write_table, Phase, PhaseRequest, RecordStore, ValidError,
    ValidationRecord,
};

pub use config::{LlmConfig, LlmKind, RunConfig, SolverConfig, SolverKind};
pub use report::{heatmap, markdown_table, HeatCell, Heatmap};

type T = f32;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{stage}` needs the `{missing}` stage; run it first")]
    Prerequisite { stage: Stage, missing: Stage },
    #[error("missing {path}; run the `{stage}` stage first")]
    MissingArtifact { path: PathBuf, stage: Stage },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Props(#[from] PropsError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Correlate(#[from] CorrelateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Valid(#[from] ValidError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Enumerate,
    Encode,
    Props,
    Train,
    Correlate,
    Synth,
    Pool,
    Validate,
    Race,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Enumerate,
        Stage::Encode,
        Stage::Props,
        Stage::Train,
        Stage::Correlate,
        Stage::Synth,
        Stage::Pool,
        Stage::Validate,
        Stage::Race,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Enumerate => "enumerate",
            Stage::Encode => "encode",
            Stage::Props => "props",
            Stage::Train => "train",
            Stage::Correlate => "correlate",
            Stage::Synth => "synth",
            Stage::Pool => "pool",
            Stage::Validate => "validate",
            Stage::Race => "race",
            Stage::Report => "report",
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Enumerate => &[],
            Stage::Encode => &[Stage::Enumerate],
            Stage::Props => &[Stage::Encode],
            Stage::Train => &[Stage::Encode],
            Stage::Correlate => &[Stage::Props, Stage::Train],
            Stage::Synth => &[Stage::Correlate],
            Stage::Pool => &[Stage::Synth],
            Stage::Validate => &[Stage::Pool],
            Stage::Race => &[Stage::Validate],
            Stage::Report => &[Stage::Race],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Stage::ALL.iter().map(|st| st.name()).collect();
            format!("unknown stage `{s}` (one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_digest: String,
    pub summary: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOne {
    pub survivors: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceSummary {
    pub family: Savings,
    pub simple: Savings,
    pub pool_ceiling: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub candidates: usize,
    pub validated: usize,
    pub race: RaceSummary,
    pub heatmap_speedup_cells: usize,
    pub heatmap_unsat_cells: usize,
    pub heatmap_timeout_cells: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), PipelineError> {
    write_text(path, &serde_json::to_string_pretty(value).expect("artifact serializes"))
}

/// Writes `<digest>.request.txt` / `.response.txt` so a later run can
/// replay the exchange.
struct Recording {
    inner: Box<dyn LlmBackend>,
    dir: PathBuf,
}

impl LlmBackend for Recording {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, SynthError> {
        let resp = self.inner.complete(request)?;
        let d = request.digest();
        let save = |name: String, text: &str| {
            let p = self.dir.join(name);
            std::fs::create_dir_all(&self.dir)
                .and_then(|_| std::fs::write(&p, text))
                .map_err(|source| SynthError::Io { path: p, source })
        };
        save(format!("{d}.request.txt"), &request.text)?;
        save(format!("{d}.response.txt"), &resp)?;
        Ok(resp)
    }
}

/// A configured run bound to its output directory.
pub struct Run {
    pub config: RunConfig,
    pub problem: Problem,
    pub dir: PathBuf,
    solver: Box<dyn SolverBackend>,
    digest: String,
}

impl Run {
    /// Validate `config`, load its problem and write `config.toml` into the
    /// run directory.
    pub fn open(config: RunConfig) -> Result<Run, PipelineError> {
        config.validate()?;
        let problem = Problem::load(&config.problem)?;
        let dir = config.out.clone();
        let text = config.to_toml();
        write_text(&dir.join("config.toml"), &text)?;
        let solver: Box<dyn SolverBackend> = match config.solver.backend {
            SolverKind::Builtin => Box::new(BuiltinBackend::new(config.solver.clock)),
            SolverKind::External => {
                Box::new(ExternalBackend::from_env(&config.solver.external_solver, dir.join("external")))
            }
        };
        let run = Run { digest: hex::encode(Sha256::digest(text.as_bytes())), config, problem, dir, solver };
        for inst in run.corpus_instances() {
            if !run.problem.spec.train.contains(&inst) {
                return Err(PipelineError::Config(format!("corpus instance `{inst}` is not a training instance")));
            }
        }
        for inst in run.train_instances().iter().chain(&run.test_instances()) {
            run.problem.overrides(inst)?;
        }
        Ok(run)
    }

    pub fn corpus_instances(&self) -> Vec<String> {
        pick(&self.config.corpus_instances, &self.problem.spec.train)
    }

    pub fn train_instances(&self) -> Vec<String> {
        pick(&self.config.train_instances, &self.problem.spec.train)
    }

    pub fn test_instances(&self) -> Vec<String> {
        pick(&self.config.test_instances, &self.problem.spec.test)
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.dir.join(rel)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.path(format!("manifests/{stage}.json"))
    }

    pub fn manifest(&self, stage: Stage) -> Option<Manifest> {
        let text = std::fs::read_to_string(self.manifest_path(stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn need<V: DeserializeOwned>(&self, rel: impl AsRef<Path>, stage: Stage) -> Result<V, PipelineError> {
        let path = self.path(rel);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PipelineError::MissingArtifact { path, stage })
            }
            Err(source) => return Err(PipelineError::Io { path, source }),
        };
        serde_json::from_str(&text).map_err(|e| PipelineError::Artifact { path, message: e.to_string() })
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>, PipelineError> {
        Stage::ALL.into_iter().map(|s| Ok((s, self.run_stage(s)?))).collect()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        for &p in stage.prerequisites() {
            if self.manifest(p).is_none() {
                return Err(PipelineError::Prerequisite { stage, missing: p });
            }
        }
        if self.manifest(stage).is_some_and(|m| m.config_digest == self.digest) {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome::Skipped);
        }
        log::info!("{stage}: running");
        let summary = match stage {
            Stage::Enumerate => self.enumerate()?,
            Stage::Encode => self.encode()?,
            Stage::Props => self.props()?,
            Stage::Train => self.train()?,
            Stage::Correlate => self.correlate()?,
            Stage::Synth => self.synth()?,
            Stage::Pool => self.pool()?,
            Stage::Validate => self.validate()?,
            Stage::Race => self.race()?,
            Stage::Report => self.report()?,
        };
        write_json(&self.manifest_path(stage), &Manifest { stage, config_digest: self.digest.clone(), summary })?;
        Ok(StageOutcome::Ran)
    }

    fn store(&self) -> CorpusStore {
        CorpusStore::new(self.path("corpus"))
    }

    fn corpus(&self, inst: &str) -> Result<Vec<Solution>, PipelineError> {
        match self.store().load(inst)? {
            Some(c) => Ok(c.solutions),
            None => Err(PipelineError::MissingArtifact { path: self.path(format!("corpus/{inst}.jsonl")), stage: Stage::Enumerate }),
        }
    }

    fn encoded(&self, inst: &str) -> Result<(MiniModel, Vec<Solution>, Vec<SolutionTensor<T>>), PipelineError> {
        let model = self.problem.model(inst)?;
        let sols = self.corpus(inst)?;
        let tensors = sols.iter().map(|s| encode::<T>(&self.problem, &model, s)).collect::<Result<_, _>>()?;
        Ok((model, sols, tensors))
    }

    fn forms(&self, model: &MiniModel) -> BTreeMap<String, PropForm> {
        let ctx = FormCtx::new(&self.problem, model);
        catalog(self.problem.kind()).iter().filter_map(|d| (d.form)(&ctx).map(|f| (d.id.to_string(), f))).collect()
    }

    fn enumerate(&self) -> Result<Value, PipelineError> {
        let s = &self.config.solver;
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let rep = enumerate_training_corpus(
                &self.problem,
                self.solver.as_ref(),
                &self.store(),
                &inst,
                s.enumeration_target,
                s.enumeration_timeout,
                self.config.seed,
            )?;
            if rep.fewer_than_target {
                log::warn!("{inst}: {} solutions, fewer than the target {}", rep.solutions.len(), s.enumeration_target);
            }
            out.insert(inst, json!({"solutions": rep.solutions.len(), "exhausted": rep.exhausted}));
        }
        Ok(Value::Object(out))
    }

    fn encode(&self) -> Result<Value, PipelineError> {
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let (_, _, ts) = self.encoded(&inst)?;
            let (c, h, w) = ts[0].dims();
            let info = json!({"count": ts.len(), "channels": c, "height": h, "width": w});
            write_text(&self.path(format!("encode/{inst}.grid")), &ts[0].to_grid(&format!("{inst}_0")))?;
            write_json(&self.path(format!("encode/{inst}.json")), &info)?;
            out.insert(inst, info);
        }
        Ok(Value::Object(out))
    }

    fn props(&self) -> Result<Value, PipelineError> {
        let mut per_size: BTreeMap<i64, PropertyStats> = BTreeMap::new();
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let (model, sols, ts) = self.encoded(&inst)?;
            let vectors: Vec<PropertyVector> = sols
                .iter()
                .zip(&ts)
                .map(|(s, t)| compute_properties(&self.problem, &model, t, s))
                .collect::<Result<_, _>>()?;
            let stats = classify_properties(self.problem.kind(), &vectors)?;
            write_json(&self.path(format!("props/{inst}/vectors.json")), &vectors)?;
            write_json(&self.path(format!("props/{inst}/stats.json")), &stats)?;
            let near: Vec<&str> = stats.props.iter().filter(|p| p.near_constant).map(|p| p.id.as_str()).collect();
            out.insert(inst.clone(), json!({"solutions": vectors.len(), "near_constant": near}));
            per_size.entry(self.problem.instance_size(&inst)?).or_insert(stats);
        }
        write_json(&self.path("props/progression.json"), &progression_table(&per_size))?;
        Ok(Value::Object(out))
    }

    fn train(&self) -> Result<Value, PipelineError> {
        let config = CnnConfig { seed: self.config.seed, ..self.config.cnn.clone() };
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let (_, _, pos) = self.encoded(&inst)?;
            let dir = format!("train/{inst}");
            if pos.len() < config.min_per_class.max(2) {
                log::warn!("{inst}: {} solutions, too few to train; properties will be ranked without it", pos.len());
                write_json(&self.path(format!("{dir}/records.json")), &Vec::<FilterRecord>::new())?;
                write_json(&self.path(format!("{dir}/reports.json")), &Vec::<TrainReport>::new())?;
                out.insert(inst, json!({"skipped": "too few solutions"}));
                continue;
            }
            let neg: Vec<SolutionTensor<T>> =
                generate_negatives(&pos, self.config.seed)?.into_iter().map(|n| n.tensor).collect();
            let models = train_ensemble(&pos, &neg, &config)?;
            let mut records = Vec::new();
            let mut reports = Vec::new();
            for m in &models {
                write_json(&self.path(format!("{dir}/seed{}.weights.json", m.report.seed)), &m.network.to_weights())?;
                if m.report.no_signal {
                    log::warn!("{inst}: seed {} held-out accuracy {:.3}, no signal", m.report.seed, m.report.held_out_accuracy);
                } else {
                    records.extend(m.records.iter().cloned());
                }
                reports.push(m.report.clone());
            }
            write_json(&self.path(format!("{dir}/records.json")), &records)?;
            write_json(&self.path(format!("{dir}/reports.json")), &reports)?;
            let acc: Vec<f64> = reports.iter().map(|r| r.held_out_accuracy).collect();
            out.insert(inst, json!({"held_out_accuracy": acc, "filters": records.len()}));
        }
        Ok(Value::Object(out))
    }

    fn correlate(&self) -> Result<Value, PipelineError> {
        let ids: Vec<String> = catalog(self.problem.kind()).iter().map(|d| d.id.to_string()).collect();
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let vectors: Vec<PropertyVector> = self.need(format!("props/{inst}/vectors.json"), Stage::Props)?;
            let stats: PropertyStats = self.need(format!("props/{inst}/stats.json"), Stage::Props)?;
            let records: Vec<FilterRecord> = self.need(format!("train/{inst}/records.json"), Stage::Train)?;
            let solutions: Vec<String> = vectors.iter().map(|v| v.solution.clone()).collect();
            let matrix = if records.is_empty() { None } else { Some(correlate(&records, &solutions, &vectors, &ids)?) };
            let ranking = rank_properties(matrix.as_ref(), &stats);
            let pairs = select_contrast_pairs(&records, None)?;
            let dir = format!("correlate/{inst}");
            if let Some(m) = &matrix {
                write_text(&self.path(format!("{dir}/matrix.tsv")), &m.to_text())?;
            }
            write_json(&self.path(format!("{dir}/matrix.json")), &matrix)?;
            write_json(&self.path(format!("{dir}/ranking.json")), &ranking)?;
            write_json(&self.path(format!("{dir}/pairs.json")), &pairs)?;
            let top: Vec<Value> = ranking.iter().take(5).map(|r| json!({"id": r.id, "score": r.score})).collect();
            out.insert(inst, json!({"top": top, "pairs": pairs.len()}));
        }
        Ok(Value::Object(out))
    }

    fn llm(&self) -> Result<Box<dyn LlmBackend>, PipelineError> {
        let fixtures = self.config.llm.fixtures.clone().unwrap_or_else(|| self.path("fixtures"));
        Ok(match self.config.llm.backend {
            LlmKind::Stub => Box::new(Recording { inner: Box::new(StubBackend::default()), dir: fixtures }),
            LlmKind::Replay => Box::new(ReplayBackend { dir: fixtures }),
            LlmKind::Live => Box::new(LiveBackend::from_env(fixtures)?),
        })
    }

    fn synth(&self) -> Result<Value, PipelineError> {
        let backend = self.llm()?;
        let progression: Progression = self.need("props/progression.json", Stage::Props)?;
        let llm = &self.config.llm;
        let params = GenParams { temperature: llm.temperature, max_tokens: llm.max_tokens, backend: backend.id() };
        let mut out = serde_json::Map::new();
        for inst in self.corpus_instances() {
            let model = self.problem.model(&inst)?;
            let corpus = self.corpus(&inst)?;
            let stats: PropertyStats = self.need(format!("props/{inst}/stats.json"), Stage::Props)?;
            let ranking: Vec<RankedProperty> = self.need(format!("correlate/{inst}/ranking.json"), Stage::Correlate)?;
            let matrix: Option<CorrelationMatrix> = self.need(format!("correlate/{inst}/matrix.json"), Stage::Correlate)?;
            let pairs: Vec<ContrastPair> = self.need(format!("correlate/{inst}/pairs.json"), Stage::Correlate)?;
            let forms = self.forms(&model);
            let variable = self.problem.primary_var(&model);
            let dir = self.path(format!("synth/{inst}"));
            let mut candidates = Vec::new();
            let mut diagnostics = Vec::new();
            let mut ask = |purpose: Purpose, name: String, text: String, method: Method| -> Result<(), PipelineError> {
                let req = LlmRequest { purpose, text, params: params.clone() };
                let resp = backend.complete(&req)?;
                write_text(&dir.join(format!("{name}.request.txt")), &req.text)?;
                write_text(&dir.join(format!("{name}.response.txt")), &resp)?;
                let origin = Origin { method, instance: &inst, seed: self.config.seed, generation: Some(params.clone()) };
                let parsed = parse_candidates(&resp, &model, &origin);
                diagnostics.extend(parsed.diagnostics.into_iter().map(|d| format!("{name}: {d}")));
                candidates.extend(parsed.candidates);
                Ok(())
            };

            let stats_payload = build_stats_payload(StatsInput {
                problem: self.problem.id(),
                instance: &inst,
                variable: &variable,
                model: &model,
                ranking: &ranking,
                stats: &stats,
                matrix: matrix.as_ref(),
                forms: &forms,
                corpus: &corpus,
                progression: Some(&progression),
                max_candidates: llm.max_candidates,
            });
            ask(Purpose::Stats, "stats".into(), stats_payload.render(), Method::LlmStats)?;

            for pair in strongest_pairs(&pairs, matrix.as_ref(), llm.max_discovery) {
                let Some(p) =
                    build_discovery_payload(self.problem.id(), &inst, &variable, pair, &corpus, &model, llm.max_candidates)
                else {
                    continue;
                };
                ask(Purpose::Discovery, format!("discovery_{}", pair.label()), p.render(), Method::LlmDiscovery)?;
            }

            if llm.templates {
                let ctx = FormCtx::new(&self.problem, &model);
                let t = synthesize_templates(&stats, self.problem.kind(), &ctx, &model, &inst, self.config.seed);
                diagnostics.extend(t.skipped.into_iter().map(|d| format!("template: {d}")));
                candidates.extend(t.candidates);
            }
            let candidates = dedup(candidates);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_candidates(&dir.join("candidates.jsonl"), &candidates)?;
            write_text(&dir.join("diagnostics.txt"), &diagnostics.join("\n"))?;
            out.insert(inst, json!({"candidates": candidates.len(), "diagnostics": diagnostics.len()}));
        }
        Ok(Value::Object(out))
    }

    fn pool(&self) -> Result<Value, PipelineError> {
        let mut per_instance: BTreeMap<String, Vec<CandidateStreamliner>> = BTreeMap::new();
        for inst in self.corpus_instances() {
            let path = self.path(format!("synth/{inst}/candidates.jsonl"));
            if !path.exists() {
                return Err(PipelineError::MissingArtifact { path, stage: Stage::Synth });
            }
            per_instance.insert(inst, read_candidates(&path)?);
        }
        let pool = pool_across_instances(&per_instance);
        let backend = self.llm()?;
        let (clusters, mut diagnostics) = cluster(&pool, Some(backend.as_ref()));
        let progression: Progression = self.need("props/progression.json", Stage::Props)?;
        let largest = self.corpus_instances().into_iter().last().expect("validated non-empty");
        let scale = self.forms(&self.problem.model(&largest)?).into_iter().map(|(id, f)| (id, f.denom())).collect();
        let ex = Extrapolation { progression: Some(&progression), scale };

        let check_on: Vec<MiniModel> = self
            .train_instances()
            .iter()
            .chain(&self.test_instances())
            .map(|i| self.problem.model(i))
            .collect::<Result<_, _>>()?;
        let mut reps: Vec<Representative> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in &clusters {
            for r in expand_representatives(c, &pool, &ex) {
                if let Some(e) = check_on.iter().find_map(|m| r.candidate.clone().checked(m).err()) {
                    diagnostics.push(format!("{} dropped: {e}", r.id));
                } else if seen.insert(r.id.clone()) {
                    reps.push(r);
                }
            }
        }
        write_json(&self.path("pool/pool.json"), &pool)?;
        write_json(&self.path("pool/clusters.json"), &clusters)?;
        write_text(&self.path("pool/clusters.txt"), &cluster_report(&clusters, &reps))?;
        write_json(&self.path("pool/representatives.json"), &reps)?;
        write_text(&self.path("pool/diagnostics.txt"), &diagnostics.join("\n"))?;
        Ok(json!({"pooled": pool.len(), "clusters": clusters.len(), "representatives": reps.len()}))
    }

    fn baselines(&self) -> Result<BaselineCache, PipelineError> {
        Ok(BaselineCache::open(self.path("baselines.jsonl"))?)
    }

    fn validate(&self) -> Result<Value, PipelineError> {
        let reps: Vec<Representative> = self.need("pool/representatives.json", Stage::Pool)?;
        let cache = self.baselines()?;
        let (train, test) = (self.train_instances(), self.test_instances());
        for inst in train.iter().chain(&test) {
            let b = baseline_solve(
                &self.problem,
                self.solver.as_ref(),
                &cache,
                inst,
                self.config.solver.baseline_timeout,
                self.config.seed,
            )?;
            log::info!("baseline {inst}: {} in {:.4}s", b.status.as_str(), b.elapsed);
        }
        let store = RecordStore::open(self.path("validate/records.jsonl"))?;
        let candidates: Vec<(String, String)> = reps.iter().map(|r| (r.id.clone(), r.candidate.constraint.clone())).collect();
        let request = |candidates, instances, phase| PhaseRequest {
            problem: &self.problem,
            backend: self.solver.as_ref(),
            cache: &cache,
            candidates,
            instances,
            phase,
            seed: self.config.seed,
            workers: self.config.solver.workers,
        };
        let one = validate_phase(&request(&candidates, &train, Phase::Train), &store)?;
        let survivors: Vec<(String, String)> =
            candidates.iter().filter(|(id, _)| one.survivors.contains(id)).cloned().collect();
        let two = validate_phase(&request(&survivors, &test, Phase::Test), &store)?;
        write_json(&self.path("validate/phase1.json"), &PhaseOne { survivors: one.survivors.clone(), scores: one.scores })?;
        write_table(&self.path("validate/records.csv"), &store.records())?;
        Ok(json!({
            "candidates": candidates.len(),
            "survivors": one.survivors.len(),
            "solves_run": one.solves_run + two.solves_run,
        }))
    }

    /// Test-phase records and test baselines.
    fn test_records(&self) -> Result<(Vec<ValidationRecord>, BTreeMap<String, f64>), PipelineError> {
        let path = self.path("validate/records.jsonl");
        if !path.exists() {
            return Err(PipelineError::MissingArtifact { path, stage: Stage::Validate });
        }
        let records: Vec<ValidationRecord> =
            RecordStore::open(path)?.records().into_iter().filter(|r| r.phase == Phase::Test).collect();
        let cache = self.baselines()?;
        let mut baselines = BTreeMap::new();
        for inst in self.test_instances() {
            let b = cache.get(self.problem.id(), &inst).ok_or_else(|| ValidError::MissingBaseline(inst.clone()))?;
            baselines.insert(inst, b.elapsed);
        }
        Ok((records, baselines))
    }

    fn scored(&self) -> Result<Vec<ScoredCandidate>, PipelineError> {
        let reps: Vec<Representative> = self.need("pool/representatives.json", Stage::Pool)?;
        let one: PhaseOne = self.need("validate/phase1.json", Stage::Validate)?;
        Ok(reps
            .into_iter()
            .filter(|r| one.survivors.contains(&r.id))
            .map(|r| ScoredCandidate { score: one.scores[&r.id], id: r.id, descriptor: r.candidate.descriptor })
            .collect())
    }

    fn race(&self) -> Result<Value, PipelineError> {
        let scored = self.scored()?;
        let (records, baselines) = self.test_records()?;
        if baselines.is_empty() {
            return Err(PipelineError::Config("no test instances to race on".into()));
        }
        let index = RecordIndex::new(&records);
        let policy = self.config.slot_policy;
        let family = select_family_budget(&scored, self.config.k, self.config.m)?;
        let simple = select_simple_top_k(&scored, self.config.k)?;
        let family_results = race_all(&family, &index, &baselines, policy)?;
        let simple_results = race_all(&simple, &index, &baselines, policy)?;
        let ks: Vec<usize> = (1..=5).collect();
        let sweep = sweep_km(&scored, &index, &baselines, &ks, &DEFAULT_MS, policy)?;
        let summary = RaceSummary {
            family: crate::portfolio::portfolio_savings(&family_results)?,
            simple: crate::portfolio::portfolio_savings(&simple_results)?,
            pool_ceiling: pool_ceiling(&records, &baselines),
            instances: baselines.len(),
        };
        write_json(&self.path("race/plan_family.json"), &family)?;
        write_json(&self.path("race/plan_simple.json"), &simple)?;
        write_json(&self.path("race/results_family.json"), &family_results)?;
        write_json(&self.path("race/results_simple.json"), &simple_results)?;
        write_json(&self.path("race/sweep.json"), &sweep)?;
        write_json(&self.path("race/summary.json"), &summary)?;
        Ok(serde_json::to_value(&summary).expect("summary serializes"))
    }

    fn report(&self) -> Result<Value, PipelineError> {
        let reps: Vec<Representative> = self.need("pool/representatives.json", Stage::Pool)?;
        let one: PhaseOne = self.need("validate/phase1.json", Stage::Validate)?;
        let (records, baselines) = self.test_records()?;
        let race: RaceSummary = self.need("race/summary.json", Stage::Race)?;
        let sweep: Vec<SweepCell> = self.need("race/sweep.json", Stage::Race)?;
        let winners: Vec<RaceResult> = self.need("race/results_family.json", Stage::Race)?;
        let descriptor: BTreeMap<&str, &str> =
            reps.iter().map(|r| (r.id.as_str(), r.candidate.descriptor.as_str())).collect();
        let constraint: BTreeMap<&str, &str> =
            reps.iter().map(|r| (r.id.as_str(), r.candidate.constraint.as_str())).collect();

        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        let metrics: Vec<Vec<String>> = candidate_metrics(&records)
            .into_iter()
            .map(|m| {
                vec![
                    m.candidate.clone(),
                    descriptor.get(m.candidate.as_str()).unwrap_or(&"").to_string(),
                    format!("{:.4}", one.scores.get(&m.candidate).copied().unwrap_or(0.0)),
                    m.sat.to_string(),
                    m.unsat.to_string(),
                    m.timeout.to_string(),
                    m.error.to_string(),
                    opt(m.geomean),
                    m.retained.to_string(),
                    opt(m.max_speedup),
                ]
            })
            .collect();
        let metric_header =
            ["candidate_id", "descriptor", "train_score", "sat", "unsat", "timeout", "error", "geomean", "retained", "max"];
        write_csv(&self.path("report/metrics.csv"), &metric_header, &metrics)?;

        let mut portfolio: Vec<Vec<String>> = vec![
            vec!["family_budget".into(), self.config.k.to_string(), self.config.m.label(), f4(race.family.wall_clock), f4(race.family.cpu)],
            vec!["simple_top_k".into(), self.config.k.to_string(), "1".into(), f4(race.simple.wall_clock), f4(race.simple.cpu)],
            vec!["pool_ceiling".into(), "-".into(), "-".into(), f4(race.pool_ceiling), "-".into()],
        ];
        portfolio.extend(sweep.iter().map(|c| {
            vec!["sweep".into(), c.k.to_string(), c.m.label(), f4(c.savings.wall_clock), f4(c.savings.cpu)]
        }));
        let portfolio_header = ["rule", "k", "m", "wall_clock", "cpu_adjusted"];
        write_csv(&self.path("report/portfolio.csv"), &portfolio_header, &portfolio)?;

        let winner_rows: Vec<Vec<String>> = winners
            .iter()
            .map(|r| {
                vec![
                    r.instance.clone(),
                    f4(r.t_b),
                    r.winner.clone().unwrap_or_else(|| "baseline".into()),
                    f4(r.t_winner),
                ]
            })
            .collect();
        write_csv(&self.path("report/winners.csv"), &["instance_id", "baseline_s", "winner", "winner_s"], &winner_rows)?;

        let hm = heatmap(&records, &baselines);
        write_text(&self.path("report/heatmap.csv"), &hm.to_csv())?;
        write_json(&self.path("report/heatmap.json"), &hm)?;
        let count = |f: fn(&HeatCell) -> bool| hm.cells.iter().flatten().filter(|c| f(c)).count();

        let mut grids = 0;
        for inst in self.corpus_instances() {
            let matrix: Option<CorrelationMatrix> = self.need(format!("correlate/{inst}/matrix.json"), Stage::Correlate)?;
            let records: Vec<FilterRecord> = self.need(format!("train/{inst}/records.json"), Stage::Train)?;
            let Some(matrix) = matrix else { continue };
            let wanted: BTreeSet<&str> = matrix.top.values().flatten().map(|t| t.filter.as_str()).collect();
            for r in records.iter().filter(|r| wanted.contains(r.label().as_str())) {
                let label = r.label();
                let text = write_grid(&label, 1, r.height, r.width, &r.mean_map);
                write_text(&self.path(format!("report/activations/{inst}/{label}.grid")), &text)?;
                grids += 1;
            }
        }

        let summary = ReportSummary {
            candidates: reps.len(),
            validated: one.survivors.len(),
            race: race.clone(),
            heatmap_speedup_cells: count(|c| matches!(c, HeatCell::Speedup(_))),
            heatmap_unsat_cells: count(|c| matches!(c, HeatCell::Unsat)),
            heatmap_timeout_cells: count(|c| matches!(c, HeatCell::Timeout)),
        };
        write_json(&self.path("report/summary.json"), &summary)?;

        let mut md = format!("# {} run report\n\n", self.problem.id());
        md.push_str(&format!(
            "{} candidates, {} kept after training-instance validation, {} test instances.\n\n",
            reps.len(),
            one.survivors.len(),
            race.instances
        ));
        md.push_str("## Candidates\n\n");
        let with_text: Vec<Vec<String>> = metrics
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r.insert(2, format!("`{}`", constraint.get(row[0].as_str()).unwrap_or(&"")));
                r
            })
            .collect();
        let mut header = metric_header.to_vec();
        header.insert(2, "constraint");
        md.push_str(&markdown_table(&header, &with_text));
        md.push_str("\n## Portfolios\n\n");
        md.push_str(&markdown_table(&portfolio_header, &portfolio));
        md.push_str(&format!("\nHeatmap: `heatmap.csv`; {grids} activation grids under `activations/`.\n"));
        write_text(&self.path("report/summary.md"), &md)?;
        Ok(serde_json::to_value(&summary).expect("summary serializes"))
    }
}

fn pick(chosen: &[String], fallback: &[String]) -> Vec<String> {
    if chosen.is_empty() {
        fallback.to_vec()
    } else {
        chosen.to_vec()
    }
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })?;
    write_text(path, &String::from_utf8(bytes).expect("utf-8 rows"))
}

/// Non-degenerate pairs whose filter correlates most with any property.
fn strongest_pairs<'a>(pairs: &'a [ContrastPair], matrix: Option<&CorrelationMatrix>, n: usize) -> Vec<&'a ContrastPair> {
    let strength = |p: &ContrastPair| -> f64 {
        matrix
            .and_then(|m| {
                let row = m.filters.iter().position(|f| *f == p.label())?;
                m.r[row].iter().flatten().map(|v| v.abs()).reduce(f64::max)
            })
            .unwrap_or(0.0)
    };
    let mut live: Vec<(&ContrastPair, f64)> = pairs.iter().filter(|p| !p.degenerate).map(|p| (p, strength(p))).collect();
    live.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| (a.0.seed, a.0.layer, a.0.filter).cmp(&(b.0.seed, b.0.layer, b.0.filter))));
    live.into_iter().take(n).map(|(p, _)| p).collect()
}
