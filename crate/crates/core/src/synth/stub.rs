//! Rule-based stand-in for a language model, so the pipeline runs offline
//! and deterministically.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::correlate::RankTag;
use crate::minicp::{parse_expr_text, print_signature};
use crate::props::PropForm;

use super::backend::{LlmBackend, LlmRequest, Purpose};
use super::payload::{payload_json, ClusterPayload, DiscoveryPayload, StatsPayload};
use super::SynthError;

#[derive(Debug, Clone)]
pub struct StubBackend {
    /// Properties of the stats payload the stub writes bounds for.
    pub max_properties: usize,
    /// Single-cell pins proposed per discovery payload.
    pub max_pins: usize,
}

impl Default for StubBackend {
    fn default() -> Self {
        StubBackend { max_properties: 4, max_pins: 3 }
    }
}

fn entry(constraint: String, descriptor: String, property: Option<&str>, aggressiveness: &str, form: &str) -> Value {
    json!({
        "constraint": constraint,
        "descriptor": descriptor,
        "property": property,
        "aggressiveness": aggressiveness,
        "form": form,
    })
}

fn label(v: i64) -> String {
    if v < 0 {
        format!("m{}", -v)
    } else {
        v.to_string()
    }
}

impl StubBackend {
    fn stats(&self, p: &StatsPayload) -> Vec<Value> {
        let mut out = Vec::new();
        let usable = p.properties.iter().filter(|q| q.tag != RankTag::Implied && q.expression.is_some());
        for q in usable.take(self.max_properties) {
            let form = q.expression.as_ref().expect("filtered");
            let (op, word, levels, shape) = match form {
                PropForm::MinOf { .. } => (">=", "ge", [q.min, q.median, q.max], "universal"),
                PropForm::MaxOf { .. } => ("<=", "le", [q.max, q.median, q.min], "universal"),
                PropForm::Direct { .. } => ("<=", "le", [q.max, q.median, q.min], "aggregate"),
            };
            if q.near_constant {
                if let Some(text) = form.constraint_value("=", q.median) {
                    let k = (q.median * form.denom() as f64).round() as i64;
                    out.push(entry(text, format!("{}_eq_{}", q.id, label(k)), Some(&q.id), "tight_fit", shape));
                }
            }
            for (value, aggr) in levels.into_iter().zip(["conservative", "tight_fit", "aggressive"]) {
                if let Some(text) = form.constraint_value(op, value) {
                    let k = (value * form.denom() as f64).round() as i64;
                    out.push(entry(text, format!("{}_{word}_{}", q.id, label(k)), Some(&q.id), aggr, shape));
                }
            }
        }
        out.truncate(p.request.max_candidates.max(1));
        out
    }

    fn discovery(&self, p: &DiscoveryPayload) -> Vec<Value> {
        let flat = |groups: &[super::LabelledSolution]| -> Vec<Vec<i64>> {
            groups
                .iter()
                .filter_map(|s| s.vars.get(&p.variable))
                .map(|v| {
                    let mut cells = Vec::new();
                    flatten(v, &mut cells);
                    cells
                })
                .collect()
        };
        let (high, low) = (flat(&p.high), flat(&p.low));
        let Some(first) = high.first() else { return Vec::new() };
        let extents: Vec<i64> = p.shape.iter().map(|(l, h)| h - l + 1).collect();
        let mut pins = Vec::new();
        for (cell, &v) in first.iter().enumerate() {
            let shared_high = high.iter().all(|h| h.get(cell) == Some(&v));
            let shared_low = !low.is_empty() && low.iter().all(|l| l.get(cell) == Some(&v));
            if shared_high && !shared_low {
                pins.push((index_of(cell, &p.shape, &extents), v));
            }
        }
        let var = &p.variable;
        let cell_text = |idx: &[i64]| {
            let parts: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            format!("{var}[{}]", parts.join(", "))
        };
        let mut out: Vec<Value> = pins
            .iter()
            .take(self.max_pins)
            .map(|(idx, v)| {
                let pos: Vec<String> = idx.iter().map(|i| label(*i)).collect();
                entry(
                    format!("{} = {v}", cell_text(idx)),
                    format!("{var}_pin_at_{}_{}", pos.join("_"), label(*v)),
                    None,
                    "tight_fit",
                    "pairwise",
                )
            })
            .collect();
        if pins.len() > 1 {
            let all: Vec<String> = pins.iter().map(|(idx, v)| format!("{} = {v}", cell_text(idx))).collect();
            out.push(entry(all.join(" /\\ "), format!("{var}_high_group_pins_{}", pins.len()), None, "aggressive", "universal"));
        }
        out.truncate(p.request.max_candidates.max(1));
        out
    }

    fn cluster(&self, p: &ClusterPayload) -> Value {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut order = Vec::new();
        for c in &p.candidates {
            let sig = parse_expr_text(&c.constraint).map(|e| print_signature(&e)).unwrap_or_else(|_| c.constraint.clone());
            if !groups.contains_key(&sig) {
                order.push(sig.clone());
            }
            groups.entry(sig).or_default().push(c.id.clone());
        }
        Value::Array(order.iter().map(|s| json!(groups[s])).collect())
    }
}

fn flatten(v: &Value, out: &mut Vec<i64>) {
    match v {
        Value::Array(items) => items.iter().for_each(|i| flatten(i, out)),
        other => out.push(other.as_i64().unwrap_or(0)),
    }
}

fn index_of(mut flat: usize, shape: &[(i64, i64)], extents: &[i64]) -> Vec<i64> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        let e = extents[d].max(1) as usize;
        idx[d] = shape[d].0 + (flat % e) as i64;
        flat /= e;
    }
    idx
}

impl LlmBackend for StubBackend {
    fn id(&self) -> String {
        "stub".into()
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, SynthError> {
        let json = payload_json(&request.text).ok_or_else(|| SynthError::Backend("stub: payload has no JSON block".into()))?;
        let bad = |e: serde_json::Error| SynthError::Backend(format!("stub: {e}"));
        let body = match request.purpose {
            Purpose::Stats => Value::Array(self.stats(&serde_json::from_value(json).map_err(bad)?)),
            Purpose::Discovery => Value::Array(self.discovery(&serde_json::from_value(json).map_err(bad)?)),
            Purpose::Cluster => self.cluster(&serde_json::from_value(json).map_err(bad)?),
        };
        let text = serde_json::to_string_pretty(&body).expect("json");
        Ok(format!("Proposed answer (rule-based):\n{text}\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::payload::{CandidateRequest, LabelledSolution};
    use crate::synth::{parse_candidates, GenParams, Method, Origin};

    fn sol(label: &str, x: &[i64]) -> LabelledSolution {
        LabelledSolution { label: label.into(), vars: [("x".to_string(), json!(x))].into_iter().collect() }
    }

    #[test]
    fn discovery_pins_cells_shared_by_the_high_group() {
        let p = DiscoveryPayload {
            payload: "discovery".into(),
            prompt_version: 1,
            problem: "perm".into(),
            instance: "n5".into(),
            variable: "x".into(),
            shape: vec![(1, 5)],
            filter: "s0_l0_f0".into(),
            model_text: String::new(),
            high: vec![sol("H1", &[1, 2, 3, 4, 5]), sol("H2", &[1, 3, 2, 4, 5])],
            low: vec![sol("L1", &[2, 1, 3, 4, 5]), sol("L2", &[5, 4, 3, 2, 1])],
            request: CandidateRequest::all(10),
        };
        let req = LlmRequest { purpose: Purpose::Discovery, text: p.render(), params: GenParams::default() };
        let resp = StubBackend::default().complete(&req).unwrap();
        assert_eq!(resp, StubBackend::default().complete(&req).unwrap());
        let model = crate::synth::tests::model();
        let origin = Origin { method: Method::LlmDiscovery, instance: "n5", seed: 0, generation: None };
        let parsed = parse_candidates(&resp, &model, &origin);
        let texts: Vec<_> = parsed.candidates.iter().map(|c| c.constraint.as_str()).collect();
        assert_eq!(texts, vec!["x[1] = 1", "x[4] = 4", "x[5] = 5", "x[1] = 1 /\\ x[4] = 4 /\\ x[5] = 5"]);
        assert_eq!(parsed.candidates[0].descriptor, "x_pin_at_1_1");
    }

    #[test]
    fn cluster_groups_by_signature() {
        let p = ClusterPayload::new(vec![
            super::super::ClusterEntry { id: "a".into(), constraint: "x[1] <= 25".into() },
            super::super::ClusterEntry { id: "b".into(), constraint: "x[2] = 1".into() },
            super::super::ClusterEntry { id: "c".into(), constraint: "x[1] <= 30".into() },
        ]);
        let req = LlmRequest { purpose: Purpose::Cluster, text: p.render(), params: GenParams::default() };
        let resp = StubBackend::default().complete(&req).unwrap();
        let groups = crate::synth::find_json_array(&resp, Value::is_array).unwrap();
        assert_eq!(Value::Array(groups), json!([["a", "c"], ["b"]]));
    }
}
