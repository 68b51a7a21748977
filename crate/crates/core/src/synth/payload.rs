use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cnn::ContrastPair;
use crate::corpus::Solution;
use crate::correlate::{CorrelationMatrix, RankTag, RankedProperty, TopFilter};
use crate::minicp::MiniModel;
use crate::props::{Progression, PropForm, PropertyStats};

use super::{Aggressiveness, SyntacticForm};

pub const PROMPT_VERSION: u32 = 1;
pub(crate) const STATS_PROMPT: &str = include_str!("../../assets/prompts/stats.txt");
pub(crate) const DISCOVERY_PROMPT: &str = include_str!("../../assets/prompts/discovery.txt");
pub(crate) const CLUSTER_PROMPT: &str = include_str!("../../assets/prompts/cluster.txt");

pub const MAX_SAMPLES: usize = 5;

/// A solution in original variable shape: nested arrays per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSolution {
    pub label: String,
    pub vars: BTreeMap<String, Value>,
}

pub fn raw_solution(model: &MiniModel, sol: &Solution) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for d in &model.vars {
        let Some(vals) = sol.get(&d.name) else { continue };
        let extents: Vec<usize> = d.shape.iter().map(|(l, h)| (h - l + 1).max(0) as usize).collect();
        out.insert(d.name.clone(), nest(vals, &extents));
    }
    out
}

fn nest(vals: &[i64], extents: &[usize]) -> Value {
    match extents {
        [] => vals.first().map(|v| Value::from(*v)).unwrap_or(Value::Null),
        [_] => Value::from(vals.to_vec()),
        [_, rest @ ..] => {
            let inner: usize = rest.iter().product();
            Value::Array(vals.chunks(inner.max(1)).map(|c| nest(c, rest)).collect())
        }
    }
}

fn var_shape(model: &MiniModel, var: &str) -> Vec<(i64, i64)> {
    model.var(var).map(|d| d.shape.clone()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub form: SyntacticForm,
    pub aggressiveness: Aggressiveness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRequest {
    pub max_candidates: usize,
    pub combinations: Vec<Combination>,
}

impl CandidateRequest {
    pub fn all(max_candidates: usize) -> Self {
        let combinations = SyntacticForm::ALL
            .into_iter()
            .flat_map(|form| Aggressiveness::ALL.into_iter().map(move |aggressiveness| Combination { form, aggressiveness }))
            .collect();
        CandidateRequest { max_candidates, combinations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadProperty {
    pub id: String,
    pub rank: usize,
    pub tag: RankTag,
    pub score: Option<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub near_constant: bool,
    pub constant: bool,
    pub top_filters: Vec<TopFilter>,
    /// How the property reads as an expression over the model's variables.
    pub expression: Option<PropForm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsPayload {
    pub payload: String,
    pub prompt_version: u32,
    pub problem: String,
    pub instance: String,
    pub variable: String,
    /// Declared index ranges of `variable`.
    pub shape: Vec<(i64, i64)>,
    pub model_text: String,
    pub corpus_size: usize,
    pub properties: Vec<PayloadProperty>,
    pub near_constant: Vec<String>,
    pub samples: Vec<LabelledSolution>,
    pub progression: Option<Progression>,
    pub request: CandidateRequest,
}

pub struct StatsInput<'a> {
    pub problem: &'a str,
    pub instance: &'a str,
    pub variable: &'a str,
    pub model: &'a MiniModel,
    pub ranking: &'a [RankedProperty],
    pub stats: &'a PropertyStats,
    pub matrix: Option<&'a CorrelationMatrix>,
    pub forms: &'a BTreeMap<String, PropForm>,
    pub corpus: &'a [Solution],
    pub progression: Option<&'a Progression>,
    pub max_candidates: usize,
}

/// Up to `k` evenly spaced picks from `n` items.
fn spread(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    (0..k).map(|i| i * n / k).collect()
}

pub fn build_stats_payload(input: StatsInput) -> StatsPayload {
    let properties: Vec<PayloadProperty> = input
        .ranking
        .iter()
        .enumerate()
        .filter_map(|(rank, r)| {
            let s = input.stats.get(&r.id)?;
            Some(PayloadProperty {
                id: r.id.clone(),
                rank: rank + 1,
                tag: r.tag,
                score: r.score,
                mean: s.mean,
                std: s.std,
                min: s.min,
                max: s.max,
                median: s.median,
                near_constant: s.near_constant,
                constant: s.constant,
                top_filters: input.matrix.and_then(|m| m.top.get(&r.id).cloned()).unwrap_or_default(),
                expression: input.forms.get(&r.id).cloned(),
            })
        })
        .collect();
    let near_constant = properties.iter().filter(|p| p.near_constant && !p.constant).map(|p| p.id.clone()).collect();
    let samples = spread(input.corpus.len(), MAX_SAMPLES)
        .into_iter()
        .enumerate()
        .map(|(i, j)| LabelledSolution { label: format!("S{}", i + 1), vars: raw_solution(input.model, &input.corpus[j]) })
        .collect();
    StatsPayload {
        payload: "stats".into(),
        prompt_version: PROMPT_VERSION,
        problem: input.problem.into(),
        instance: input.instance.into(),
        variable: input.variable.into(),
        shape: var_shape(input.model, input.variable),
        model_text: input.model.render(),
        corpus_size: input.corpus.len(),
        properties,
        near_constant,
        samples,
        progression: input.progression.filter(|p| p.props.iter().any(|x| x.rows.len() > 1)).cloned(),
        request: CandidateRequest::all(input.max_candidates),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryPayload {
    pub payload: String,
    pub prompt_version: u32,
    pub problem: String,
    pub instance: String,
    pub variable: String,
    pub shape: Vec<(i64, i64)>,
    pub filter: String,
    pub model_text: String,
    pub high: Vec<LabelledSolution>,
    pub low: Vec<LabelledSolution>,
    pub request: CandidateRequest,
}

/// `None` (with a logged reason) for degenerate pairs.
#[allow(clippy::too_many_arguments)]
pub fn build_discovery_payload(
    problem: &str,
    instance: &str,
    variable: &str,
    pair: &ContrastPair,
    corpus: &[Solution],
    model: &MiniModel,
    max_candidates: usize,
) -> Option<DiscoveryPayload> {
    if pair.degenerate {
        log::info!("skipping filter {}: zero activation variance", pair.label());
        return None;
    }
    if pair.high.is_empty() || pair.low.is_empty() {
        log::info!("skipping filter {}: empty group", pair.label());
        return None;
    }
    let group = |prefix: &str, idx: &[usize]| {
        idx.iter()
            .enumerate()
            .map(|(i, &j)| LabelledSolution { label: format!("{prefix}{}", i + 1), vars: raw_solution(model, &corpus[j]) })
            .collect()
    };
    Some(DiscoveryPayload {
        payload: "discovery".into(),
        prompt_version: PROMPT_VERSION,
        problem: problem.into(),
        instance: instance.into(),
        variable: variable.into(),
        shape: var_shape(model, variable),
        filter: pair.label(),
        model_text: model.render(),
        high: group("H", &pair.high),
        low: group("L", &pair.low),
        request: CandidateRequest::all(max_candidates),
    })
}

fn render<T: Serialize>(prose: &str, payload: &T) -> String {
    let json = serde_json::to_string_pretty(payload).expect("payload serializes");
    format!("{}\n```json\n{json}\n```\n", prose.trim_end())
}

impl StatsPayload {
    pub fn render(&self) -> String {
        render(STATS_PROMPT, self)
    }
}

impl DiscoveryPayload {
    pub fn render(&self) -> String {
        render(DISCOVERY_PROMPT, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub id: String,
    pub constraint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPayload {
    pub payload: String,
    pub prompt_version: u32,
    pub candidates: Vec<ClusterEntry>,
}

impl ClusterPayload {
    pub fn new(candidates: Vec<ClusterEntry>) -> Self {
        ClusterPayload { payload: "cluster".into(), prompt_version: PROMPT_VERSION, candidates }
    }

    pub fn render(&self) -> String {
        render(CLUSTER_PROMPT, self)
    }
}

/// The JSON block of a rendered payload.
pub fn payload_json(text: &str) -> Option<Value> {
    let start = text.find("```json\n")? + 8;
    let end = start + text[start..].find("\n```")?;
    serde_json::from_str(&text[start..end]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::rank_properties;
    use crate::props::PropStat;

    fn stat(id: &str, near: bool) -> PropStat {
        PropStat { id: id.into(), mean: 1.0, std: 0.0, min: 1.0, max: 2.0, median: 1.0, near_constant: near, constant: false }
    }

    #[test]
    fn stats_payload_caps_samples_and_is_deterministic() {
        let model = super::super::tests::model();
        let corpus: Vec<Solution> = (0..7)
            .map(|i| Solution {
                instance: "n5".into(),
                index: i,
                vars: [("x".to_string(), vec![1, 2, 3, 4, 5])].into_iter().collect(),
            })
            .collect();
        let stats = PropertyStats { count: 7, props: vec![stat("a", false), stat("b", false)] };
        let ranking = rank_properties(None, &stats);
        let forms = BTreeMap::new();
        let build = || {
            build_stats_payload(StatsInput {
                problem: "p",
                instance: "n5",
                variable: "x",
                model: &model,
                ranking: &ranking,
                stats: &stats,
                matrix: None,
                forms: &forms,
                corpus: &corpus,
                progression: None,
                max_candidates: 8,
            })
        };
        let p = build();
        assert_eq!(p.samples.len(), 5);
        assert!(p.near_constant.is_empty());
        assert_eq!(p.render(), build().render());
        let back: StatsPayload = serde_json::from_value(payload_json(&p.render()).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(p.render().starts_with("# prompt: stats v1"));
    }

    #[test]
    fn nests_matrices() {
        assert_eq!(nest(&[1, 2, 3, 4, 5, 6], &[2, 3]), serde_json::json!([[1, 2, 3], [4, 5, 6]]));
        assert_eq!(nest(&[7], &[]), serde_json::json!(7));
    }
}
