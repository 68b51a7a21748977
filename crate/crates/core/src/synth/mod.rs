//! Candidate streamliner synthesis: LLM payloads, backends, response
//! parsing, mechanical templates and text dedup.

mod backend;
mod payload;
mod stub;
mod templates;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::minicp::ast::{Aggregate, BinOp};
use crate::minicp::lexer::normalized_text;
use crate::minicp::{Expr, MiniCpError, MiniModel};

pub use backend::{GenParams, LiveBackend, LlmBackend, LlmRequest, Purpose, ReplayBackend};
pub use payload::{
    build_discovery_payload, build_stats_payload, payload_json, raw_solution, CandidateRequest, ClusterEntry,
    ClusterPayload, Combination, DiscoveryPayload, LabelledSolution, PayloadProperty, StatsInput, StatsPayload,
    PROMPT_VERSION,
};
pub use stub::StubBackend;
pub use templates::{synthesize_templates, TemplateOutput};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("constraint `{constraint}` does not parse: {source}")]
    Parse { constraint: String, source: MiniCpError },
    #[error("invalid descriptor `{0}`")]
    Descriptor(String),
    #[error("llm backend: {0}")]
    Backend(String),
    #[error("no recorded response for request {digest} (expected {path})")]
    MissingFixture { digest: String, path: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LlmStats,
    LlmDiscovery,
    Template,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::LlmStats => "llm_stats",
            Method::LlmDiscovery => "llm_discovery",
            Method::Template => "template",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggressiveness {
    Conservative,
    TightFit,
    Aggressive,
}

impl Aggressiveness {
    pub const ALL: [Aggressiveness; 3] = [Aggressiveness::Conservative, Aggressiveness::TightFit, Aggressiveness::Aggressive];

    pub fn name(self) -> &'static str {
        match self {
            Aggressiveness::Conservative => "conservative",
            Aggressiveness::TightFit => "tight_fit",
            Aggressiveness::Aggressive => "aggressive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntacticForm {
    Existential,
    Universal,
    Aggregate,
    Pairwise,
}

impl SyntacticForm {
    pub const ALL: [SyntacticForm; 4] =
        [SyntacticForm::Existential, SyntacticForm::Universal, SyntacticForm::Aggregate, SyntacticForm::Pairwise];

    pub fn name(self) -> &'static str {
        match self {
            SyntacticForm::Existential => "existential",
            SyntacticForm::Universal => "universal",
            SyntacticForm::Aggregate => "aggregate",
            SyntacticForm::Pairwise => "pairwise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Guess the form from the outermost shape of a constraint.
    pub fn infer(e: &Expr) -> Self {
        match e {
            Expr::Aggregate(Aggregate::Forall, ..) => SyntacticForm::Universal,
            Expr::Aggregate(Aggregate::Exists, ..) => SyntacticForm::Existential,
            Expr::Binary(BinOp::And, l, _) => Self::infer(l),
            Expr::Binary(op, l, r) if op.is_comparison() => {
                if matches!(**l, Expr::Aggregate(..)) || matches!(**r, Expr::Aggregate(..)) {
                    SyntacticForm::Aggregate
                } else {
                    SyntacticForm::Pairwise
                }
            }
            _ => SyntacticForm::Pairwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStreamliner {
    pub constraint: String,
    pub descriptor: String,
    pub method: Method,
    pub aggressiveness: Aggressiveness,
    pub form: SyntacticForm,
    #[serde(default)]
    pub property: Option<String>,
    pub instance: String,
    pub seed: u64,
    #[serde(default)]
    pub generation: Option<GenParams>,
}

pub fn valid_descriptor(d: &str) -> bool {
    !d.is_empty() && d.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Lowercase and map anything outside `[a-z0-9_]` to `_`.
pub fn sanitize_descriptor(d: &str) -> String {
    let s: String = d
        .trim()
        .chars()
        .map(|c| c.to_ascii_lowercase())
        .map(|c| if c.is_ascii_lowercase() || c.is_ascii_digit() { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

impl CandidateStreamliner {
    /// Checks the descriptor and that the constraint parses against `model`.
    pub fn checked(self, model: &MiniModel) -> Result<Self, SynthError> {
        if !valid_descriptor(&self.descriptor) {
            return Err(SynthError::Descriptor(self.descriptor));
        }
        model
            .parse_constraint(&self.constraint)
            .map_err(|source| SynthError::Parse { constraint: self.constraint.clone(), source })?;
        Ok(self)
    }

    /// Whitespace-normalised constraint text used for dedup.
    pub fn normalized(&self) -> String {
        normalize(&self.constraint)
    }
}

pub fn normalize(text: &str) -> String {
    normalized_text(text).unwrap_or_else(|| text.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// First occurrence of each normalised constraint text wins.
pub fn dedup(candidates: Vec<CandidateStreamliner>) -> Vec<CandidateStreamliner> {
    let mut seen = HashSet::new();
    candidates.into_iter().filter(|c| seen.insert(c.normalized())).collect()
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCandidates {
    pub candidates: Vec<CandidateStreamliner>,
    pub diagnostics: Vec<String>,
}

/// Where candidates parsed from a response came from.
#[derive(Debug, Clone)]
pub struct Origin<'a> {
    pub method: Method,
    pub instance: &'a str,
    pub seed: u64,
    pub generation: Option<GenParams>,
}

/// First JSON array in `text` whose elements satisfy `accept`.
pub(crate) fn find_json_array(text: &str, accept: impl Fn(&Value) -> bool) -> Option<Vec<Value>> {
    for (i, _) in text.match_indices('[') {
        let mut it = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = it.next() {
            if !items.is_empty() && items.iter().all(&accept) {
                return Some(items);
            }
        }
    }
    None
}

/// Extract candidates from a free-text response. Bad entries are dropped
/// with a diagnostic; the rest of the batch is kept.
pub fn parse_candidates(response: &str, model: &MiniModel, origin: &Origin) -> ParsedCandidates {
    let mut out = ParsedCandidates::default();
    let Some(items) = find_json_array(response, Value::is_object) else {
        if response.match_indices('[').any(|(i, _)| {
            matches!(serde_json::Deserializer::from_str(&response[i..]).into_iter::<Value>().next(), Some(Ok(Value::Array(a))) if a.is_empty())
        }) {
            out.diagnostics.push("response proposes no candidates".into());
            return out;
        }
        log::warn!("response contains no candidate array");
        out.diagnostics.push("no JSON array of candidate objects found".into());
        return out;
    };
    for (i, item) in items.iter().enumerate() {
        match parse_entry(item, model, origin) {
            Ok(c) => out.candidates.push(c),
            Err(msg) => out.diagnostics.push(format!("entry {i}: {msg}")),
        }
    }
    if out.candidates.is_empty() {
        log::warn!("response yielded no usable candidates");
    }
    out
}

fn parse_entry(item: &Value, model: &MiniModel, origin: &Origin) -> Result<CandidateStreamliner, String> {
    let field = |k: &str| item.get(k).and_then(Value::as_str);
    let constraint = field("constraint").ok_or("missing `constraint`")?.trim().trim_end_matches(';').to_string();
    let expr = model.parse_constraint(&constraint).map_err(|e| format!("`{constraint}`: {e}"))?;
    let descriptor = sanitize_descriptor(field("descriptor").ok_or("missing `descriptor`")?);
    if descriptor.is_empty() {
        return Err("empty descriptor".into());
    }
    let aggressiveness = match field("aggressiveness") {
        None => Aggressiveness::TightFit,
        Some(a) => Aggressiveness::parse(a).ok_or_else(|| format!("unknown aggressiveness `{a}`"))?,
    };
    let form = match field("form") {
        None => SyntacticForm::infer(&expr),
        Some(f) => SyntacticForm::parse(f).ok_or_else(|| format!("unknown form `{f}`"))?,
    };
    Ok(CandidateStreamliner {
        constraint,
        descriptor,
        method: origin.method,
        aggressiveness,
        form,
        property: field("property").map(str::to_string),
        instance: origin.instance.to_string(),
        seed: origin.seed,
        generation: origin.generation.clone(),
    })
}

pub fn write_candidates(path: &Path, candidates: &[CandidateStreamliner]) -> Result<(), SynthError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    for c in candidates {
        let line = serde_json::to_string(c).expect("candidate serializes");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateStreamliner>, SynthError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minicp::ModelFile;
    use std::collections::BTreeMap;

    pub(crate) fn model() -> MiniModel {
        let mf = ModelFile::from_toml_str(
            r#"
            name = "perm"
            constraints = ["alldifferent(x)"]
            [params]
            n = 5
            [[var]]
            name = "x"
            shape = ["1..n"]
            domain = "1..n"
            "#,
        )
        .unwrap();
        mf.instantiate(&BTreeMap::new()).unwrap()
    }

    fn origin() -> Origin<'static> {
        Origin { method: Method::LlmDiscovery, instance: "n5", seed: 1, generation: None }
    }

    #[test]
    fn parses_around_prose_and_drops_bad_entries() {
        let resp = r#"Hypothesis: the high group starts low.
[{"constraint": "x[1] <= 2", "descriptor": "first_low_2", "aggressiveness": "tight_fit", "form": "pairwise"},
 {"constraint": "sum(p in 1..n-1)(bool2int(x[p+1] > x[p])) >= 3", "descriptor": "asc_3", "aggressiveness": "conservative", "form": "aggregate"},
 {"constraint": "forall(i in 1..n-1)(x[i] != i)", "descriptor": "no_fixed", "aggressiveness": "aggressive", "form": "universal"},
 {"constraint": "x[1] <= ", "descriptor": "broken", "aggressiveness": "tight_fit", "form": "pairwise"}]
Thanks."#;
        let p = parse_candidates(resp, &model(), &origin());
        assert_eq!(p.candidates.len(), 3);
        assert_eq!(p.diagnostics.len(), 1);
        assert!(p.candidates.iter().all(|c| c.method == Method::LlmDiscovery));

        let resp = r#"[{"constraint": "x[1] = 1", "descriptor": "a", "aggressiveness": "wild", "form": "pairwise"}]"#;
        let p = parse_candidates(resp, &model(), &origin());
        assert!(p.candidates.is_empty());
        assert!(p.diagnostics[0].contains("wild"));

        let p = parse_candidates("nothing here [1, 2]", &model(), &origin());
        assert!(p.candidates.is_empty());
        assert_eq!(p.diagnostics.len(), 1);
    }

    #[test]
    fn dedup_normalizes_whitespace_only() {
        let c = |t: &str, seed| CandidateStreamliner {
            constraint: t.into(),
            descriptor: "d".into(),
            method: Method::Template,
            aggressiveness: Aggressiveness::TightFit,
            form: SyntacticForm::Pairwise,
            property: None,
            instance: "i".into(),
            seed,
            generation: None,
        };
        let out = dedup(vec![c("x[1]=1", 1), c("x[1] = 1", 2), c("x[1] = 1", 3), c("x[2] = 1", 4)]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].seed, 1);
    }

    #[test]
    fn descriptors() {
        assert!(valid_descriptor("pile_top_early_25"));
        assert!(!valid_descriptor("Pile-Top"));
        assert_eq!(sanitize_descriptor("Pile-Top early"), "pile_top_early");
    }
}
