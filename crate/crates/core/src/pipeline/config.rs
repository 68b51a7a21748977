use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cnn::CnnConfig;
use crate::minicp::Clock;
use crate::portfolio::{Members, SlotPolicy};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Builtin,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub backend: SolverKind,
    /// Builtin solver clock; the effort clock makes runs reproducible.
    pub clock: Clock,
    /// Solver id passed to the external driver.
    pub external_solver: String,
    pub enumeration_target: usize,
    pub enumeration_timeout: f64,
    pub baseline_timeout: f64,
    /// Parallel solves during validation.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: SolverKind::Builtin,
            clock: Clock::Wall,
            external_solver: "gecode".into(),
            enumeration_target: 1000,
            enumeration_timeout: 60.0,
            baseline_timeout: 60.0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmKind {
    Live,
    Replay,
    #[default]
    Stub,
}

impl std::str::FromStr for LlmKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(LlmKind::Live),
            "replay" => Ok(LlmKind::Replay),
            "stub" => Ok(LlmKind::Stub),
            _ => Err(format!("unknown LLM backend `{s}` (live, replay, stub)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: LlmKind,
    /// Replay source, or where live exchanges are recorded. Defaults to
    /// `<out>/fixtures`.
    pub fixtures: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_candidates: usize,
    /// Contrast pairs sent for discovery per instance.
    pub max_discovery: usize,
    pub templates: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: LlmKind::Stub,
            fixtures: None,
            temperature: 0.7,
            max_tokens: 4096,
            max_candidates: 20,
            max_discovery: 6,
            templates: true,
        }
    }
}

/// Everything a run needs; a copy lands in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Path to a `problem.toml`.
    pub problem: PathBuf,
    /// Training instances to enumerate and learn from; empty means all
    /// training instances.
    pub corpus_instances: Vec<String>,
    /// Phase-one validation instances; empty means the problem's list.
    pub train_instances: Vec<String>,
    pub test_instances: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub k: usize,
    pub m: Members,
    pub slot_policy: SlotPolicy,
    pub solver: SolverConfig,
    /// Ensemble seeds derive from the run seed.
    pub cnn: CnnConfig,
    pub llm: LlmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: PathBuf::new(),
            corpus_instances: Vec::new(),
            train_instances: Vec::new(),
            test_instances: Vec::new(),
            out: PathBuf::from("runs/default"),
            seed: 0,
            k: 3,
            m: Members::Fixed(3),
            slot_policy: SlotPolicy::Reallocate,
            solver: SolverConfig::default(),
            cnn: CnnConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.problem.as_os_str().is_empty() {
            return bad("no problem given");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.solver.enumeration_target == 0 {
            return bad("enumeration target must be at least 1");
        }
        if !(self.solver.baseline_timeout > 0.0 && self.solver.enumeration_timeout > 0.0) {
            return bad("timeouts must be positive");
        }
        if let Clock::Effort { seconds_per_node } = self.solver.clock {
            if !(seconds_per_node > 0.0) {
                return bad("seconds_per_node must be positive");
            }
        }
        if self.llm.max_candidates == 0 {
            return bad("max_candidates must be at least 1");
        }
        self.cnn.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_reads_member_words() {
        let mut c = RunConfig { problem: "p.toml".into(), m: Members::All, ..Default::default() };
        c.solver.clock = Clock::Effort { seconds_per_node: 1e-4 };
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let c: RunConfig = toml::from_str("problem = \"x\"\nm = 2\n[llm]\nbackend = \"replay\"").unwrap();
        assert_eq!((c.m, c.llm.backend), (Members::Fixed(2), LlmKind::Replay));
        assert!(c.validate().is_ok());
        assert!(toml::from_str::<RunConfig>("m = 0").is_err());
        assert!(RunConfig::default().validate().is_err());
    }
}
