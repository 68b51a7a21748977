//! Pooling candidates across instances, clustering parametric variants and
//! expanding each cluster into the representatives that get validated.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::minicp::ast::{BinOp, CallArg, Expr};
use crate::minicp::{parse_expr_text, print_expr, print_signature};
use crate::props::Progression;
use crate::synth::{
    find_json_array, normalize, Aggressiveness, CandidateStreamliner, ClusterEntry, ClusterPayload, GenParams, LlmBackend,
    LlmRequest, Purpose,
};

/// Stable id: first 12 hex digits of SHA-256 over the normalised text.
pub fn candidate_id(constraint: &str) -> String {
    let digest = Sha256::digest(normalize(constraint).as_bytes());
    hex::encode(&digest[..6])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance: String,
    pub seed: u64,
    pub method: crate::synth::Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCandidate {
    pub id: String,
    pub candidate: CandidateStreamliner,
    pub provenance: Vec<Provenance>,
}

/// Union of all per-instance candidates; the first occurrence of a text
/// is kept and every contributor is listed in its provenance.
pub fn pool_across_instances(per_instance: &BTreeMap<String, Vec<CandidateStreamliner>>) -> Vec<PooledCandidate> {
    let mut out: Vec<PooledCandidate> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for cands in per_instance.values() {
        for c in cands {
            let prov = Provenance { instance: c.instance.clone(), seed: c.seed, method: c.method };
            let id = candidate_id(&c.constraint);
            match index.get(&id) {
                Some(&i) => {
                    if !out[i].provenance.contains(&prov) {
                        out[i].provenance.push(prov);
                    }
                }
                None => {
                    index.insert(id.clone(), out.len());
                    out.push(PooledCandidate { id, candidate: c.clone(), provenance: vec![prov] });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticCluster {
    pub signature: String,
    /// Pool ids in pool order.
    pub members: Vec<String>,
}

fn signature_of(c: &CandidateStreamliner) -> String {
    parse_expr_text(&c.constraint).map(|e| print_signature(&e)).unwrap_or_else(|_| normalize(&c.constraint))
}

/// Group by signature: printed tree with every integer literal a hole.
pub fn cluster_by_signature(pool: &[PooledCandidate]) -> Vec<SemanticCluster> {
    let mut out: Vec<SemanticCluster> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for p in pool {
        let sig = signature_of(&p.candidate);
        match index.get(&sig) {
            Some(&i) => out[i].members.push(p.id.clone()),
            None => {
                index.insert(sig.clone(), out.len());
                out.push(SemanticCluster { signature: sig, members: vec![p.id.clone()] });
            }
        }
    }
    out
}

/// Ask `backend` for groups; repair duplicates, unknown and missing ids,
/// and split groups whose members differ in signature. Falls back to
/// signature clustering when the backend fails.
pub fn cluster(pool: &[PooledCandidate], backend: Option<&dyn LlmBackend>) -> (Vec<SemanticCluster>, Vec<String>) {
    let Some(backend) = backend else { return (cluster_by_signature(pool), Vec::new()) };
    let mut diagnostics = Vec::new();
    let payload = ClusterPayload::new(
        pool.iter().map(|p| ClusterEntry { id: p.id.clone(), constraint: p.candidate.constraint.clone() }).collect(),
    );
    let req = LlmRequest {
        purpose: Purpose::Cluster,
        text: payload.render(),
        params: GenParams { temperature: 0.0, backend: backend.id(), ..GenParams::default() },
    };
    let groups = match backend.complete(&req) {
        Ok(resp) => find_json_array(&resp, serde_json::Value::is_array),
        Err(e) => {
            diagnostics.push(format!("cluster backend failed ({e}); using signature clustering"));
            None
        }
    };
    let Some(groups) = groups else {
        if diagnostics.is_empty() {
            diagnostics.push("cluster response had no groups; using signature clustering".into());
        }
        return (cluster_by_signature(pool), diagnostics);
    };
    let by_id: HashMap<&str, &PooledCandidate> = pool.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut assigned: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<SemanticCluster> = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let mut local: BTreeMap<String, usize> = BTreeMap::new();
        for id in group.as_array().into_iter().flatten().filter_map(|v| v.as_str()) {
            let Some(p) = by_id.get(id) else {
                diagnostics.push(format!("group {g}: unknown id {id}"));
                continue;
            };
            if let Some(first) = assigned.get(id) {
                diagnostics.push(format!("group {g}: {id} already in cluster {first}; keeping the first assignment"));
                continue;
            }
            let sig = signature_of(&p.candidate);
            let ci = *local.entry(sig.clone()).or_insert_with(|| {
                out.push(SemanticCluster { signature: sig.clone(), members: Vec::new() });
                out.len() - 1
            });
            if local.len() > 1 && out[ci].members.is_empty() {
                diagnostics.push(format!("group {g}: split off members with signature {sig}"));
            }
            out[ci].members.push(id.to_string());
            assigned.insert(id.to_string(), ci);
        }
    }
    for p in pool {
        if !assigned.contains_key(&p.id) {
            diagnostics.push(format!("{} missing from backend groups; kept as a singleton", p.id));
            out.push(SemanticCluster { signature: signature_of(&p.candidate), members: vec![p.id.clone()] });
        }
    }
    (out, diagnostics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Tightest,
    Loosest,
    ParametricMedian,
    Extrapolated,
    /// Passed through unchanged: no numeric parameter varies in its cluster.
    Member,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub id: String,
    pub role: Role,
    pub cluster: String,
    pub candidate: CandidateStreamliner,
}

/// Which literal value is tighter for a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `expr <= K`: smaller K is tighter.
    Upper,
    /// `expr >= K`: larger K is tighter.
    Lower,
    Undirected,
}

/// Direction of the `pos`-th integer literal (printing order) when it is a
/// direct operand of a comparison.
pub fn literal_direction(e: &Expr, pos: usize) -> Direction {
    let mut dirs = Vec::new();
    literal_contexts(e, None, &mut dirs);
    dirs.get(pos).copied().unwrap_or(Direction::Undirected)
}

fn classify(op: BinOp, literal_on_right: bool) -> Direction {
    let op = if literal_on_right { op } else { op.mirrored() };
    match op {
        BinOp::Le | BinOp::Lt => Direction::Upper,
        BinOp::Ge | BinOp::Gt => Direction::Lower,
        _ => Direction::Undirected,
    }
}

fn skip_literals(count: usize, out: &mut Vec<Direction>) {
    out.extend(std::iter::repeat_n(Direction::Undirected, count));
}

/// One entry per literal, in the order `Expr::for_each_int_mut` visits them.
fn literal_contexts(e: &Expr, ctx: Option<Direction>, out: &mut Vec<Direction>) {
    match e {
        Expr::Int(_) => out.push(ctx.unwrap_or(Direction::Undirected)),
        Expr::Bool(_) | Expr::Ident(_) => {}
        Expr::Index(_, idx) => idx.iter().for_each(|x| literal_contexts(x, None, out)),
        Expr::Unary(_, x) => literal_contexts(x, None, out),
        Expr::Binary(op, l, r) => {
            let cmp = op.is_comparison();
            literal_contexts(l, cmp.then(|| classify(*op, false)), out);
            literal_contexts(r, cmp.then(|| classify(*op, true)), out);
        }
        Expr::Call(_, args) => {
            for a in args {
                match a {
                    CallArg::Scalar(x) => literal_contexts(x, None, out),
                    CallArg::Array(arr) => {
                        let mut n = 0;
                        arr.clone().for_each_int_mut(&mut |_| n += 1);
                        skip_literals(n, out);
                    }
                }
            }
        }
        Expr::Aggregate(_, gens, body) => {
            for g in gens {
                let mut n = 0;
                g.clone().for_each_int_mut(&mut |_| n += 1);
                skip_literals(n, out);
            }
            literal_contexts(body, None, out);
        }
    }
}

fn replace_literal(e: &Expr, pos: usize, value: i64) -> Expr {
    let mut out = e.clone();
    let mut i = 0;
    out.for_each_int_mut(&mut |v| {
        if i == pos {
            *v = value;
        }
        i += 1;
    });
    out
}

/// Drop a trailing integer token from a descriptor.
fn descriptor_stem(d: &str) -> &str {
    match d.rsplit_once('_') {
        Some((stem, last)) if !stem.is_empty() && (last.parse::<i64>().is_ok() || last.strip_prefix('m').is_some_and(|n| n.parse::<i64>().is_ok())) => stem,
        _ => d,
    }
}

fn int_label(v: i64) -> String {
    if v < 0 {
        format!("m{}", -v)
    } else {
        v.to_string()
    }
}

/// Property values at the next instance size, plus the scale between a
/// property and its constraint literal.
#[derive(Debug, Clone, Default)]
pub struct Extrapolation<'a> {
    pub progression: Option<&'a Progression>,
    pub scale: BTreeMap<String, i64>,
}

/// Up to four representatives per cluster: tightest, loosest, median and
/// (with a progression fit) extrapolated. Clusters whose members share all
/// literals pass through unchanged.
pub fn expand_representatives(
    cluster: &SemanticCluster,
    pool: &[PooledCandidate],
    extrapolation: &Extrapolation,
) -> Vec<Representative> {
    let members: Vec<&PooledCandidate> =
        cluster.members.iter().filter_map(|id| pool.iter().find(|p| &p.id == id)).collect();
    let parsed: Vec<(Expr, Vec<i64>)> = members
        .iter()
        .filter_map(|p| parse_expr_text(&p.candidate.constraint).ok())
        .map(|e| {
            let lits = e.int_literals();
            (e, lits)
        })
        .collect();
    let pass_through = || {
        members
            .iter()
            .map(|p| Representative {
                id: p.id.clone(),
                role: Role::Member,
                cluster: cluster.signature.clone(),
                candidate: p.candidate.clone(),
            })
            .collect()
    };
    if parsed.len() != members.len() || parsed.is_empty() {
        return pass_through();
    }
    let width = parsed[0].1.len();
    let varying: Vec<usize> = (0..width).filter(|&i| parsed.iter().any(|(_, l)| l[i] != parsed[0].1[i])).collect();
    if width == 0 || (varying.is_empty() && extrapolation.progression.is_none()) {
        return pass_through();
    }
    let rep = |m: usize, role: Role| Representative {
        id: members[m].id.clone(),
        role,
        cluster: cluster.signature.clone(),
        candidate: members[m].candidate.clone(),
    };

    if varying.len() > 1 {
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.sort_by(|&a, &b| parsed[a].1.cmp(&parsed[b].1).then(members[a].id.cmp(&members[b].id)));
        return vec![rep(order[(order.len() - 1) / 2], Role::ParametricMedian)];
    }
    // a single numeric parameter (or one shared by every member)
    let pos = varying.first().copied().unwrap_or(width - 1);
    let direction = literal_direction(&parsed[0].0, pos);
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| parsed[a].1[pos].cmp(&parsed[b].1[pos]).then(members[a].id.cmp(&members[b].id)));
    let (lo, hi) = (order[0], order[order.len() - 1]);
    let median = order[(order.len() - 1) / 2];
    let mut reps = match direction {
        Direction::Upper => vec![rep(lo, Role::Tightest), rep(hi, Role::Loosest), rep(median, Role::ParametricMedian)],
        Direction::Lower => vec![rep(hi, Role::Tightest), rep(lo, Role::Loosest), rep(median, Role::ParametricMedian)],
        Direction::Undirected => vec![rep(median, Role::ParametricMedian)],
    };

    let anchor = match direction {
        Direction::Lower => hi,
        Direction::Upper => lo,
        Direction::Undirected => median,
    };
    let base = &members[anchor].candidate;
    let predicted = base.property.as_ref().and_then(|prop| {
        let prog = extrapolation.progression?.get(prop)?;
        let value = prog.predict(prog.next_size()? as f64)?;
        Some(value * *extrapolation.scale.get(prop).unwrap_or(&1) as f64)
    });
    if let Some(v) = predicted.filter(|v| v.is_finite()) {
        let k = match direction {
            Direction::Upper => v.floor(),
            Direction::Lower => v.ceil(),
            Direction::Undirected => v.round(),
        } as i64;
        let text = print_expr(&replace_literal(&parsed[anchor].0, pos, k));
        let candidate = CandidateStreamliner {
            constraint: text.clone(),
            descriptor: format!("{}_{}", descriptor_stem(&base.descriptor), int_label(k)),
            aggressiveness: Aggressiveness::Aggressive,
            ..base.clone()
        };
        reps.push(Representative {
            id: candidate_id(&text),
            role: Role::Extrapolated,
            cluster: cluster.signature.clone(),
            candidate,
        });
    }
    let mut seen = std::collections::HashSet::new();
    reps.retain(|r| seen.insert(r.id.clone()));
    reps
}

/// Plain-text cluster report.
pub fn cluster_report(clusters: &[SemanticCluster], reps: &[Representative]) -> String {
    let mut out = String::new();
    for c in clusters {
        out.push_str(&format!("cluster {} ({} members)\n", c.signature, c.members.len()));
        for r in reps.iter().filter(|r| r.cluster == c.signature) {
            out.push_str(&format!("  {:?} {} {}\n", r.role, r.id, r.candidate.constraint));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::props::{ProgressionRow, PropertyProgression};
    use crate::synth::{Method, SyntacticForm};

    fn cand(text: &str, descriptor: &str, instance: &str) -> CandidateStreamliner {
        CandidateStreamliner {
            constraint: text.into(),
            descriptor: descriptor.into(),
            method: Method::LlmDiscovery,
            aggressiveness: Aggressiveness::TightFit,
            form: SyntacticForm::Universal,
            property: Some("pile_top".into()),
            instance: instance.into(),
            seed: 0,
            generation: None,
        }
    }

    fn pile_pool() -> Vec<PooledCandidate> {
        let mut m = BTreeMap::new();
        m.insert(
            "a".to_string(),
            ["25", "30", "35"]
                .iter()
                .map(|k| cand(&format!("forall(i in 1..17)(y[layout[i, 1]] <= {k})"), &format!("pile_top_early_{k}"), "a"))
                .collect(),
        );
        pool_across_instances(&m)
    }

    #[test]
    fn pooling_merges_provenance() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![cand("x[1] = 1", "p", "a"), cand("x[2] = 2", "q", "a")]);
        m.insert("b".to_string(), vec![cand("x[1]=1", "p", "b")]);
        let p = pool_across_instances(&m);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].provenance.len(), 2);
        assert!(pool_across_instances(&BTreeMap::new()).is_empty());
    }

    #[test]
    fn signature_clusters() {
        let pool = pile_pool();
        let c = cluster_by_signature(&pool);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].members.len(), 3);
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![cand("x[1] = 1", "p", "a"), cand("x[2] = 1", "q", "a"), cand("x[1] < x[2]", "r", "a")]);
        let c = cluster_by_signature(&pool_across_instances(&m));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn representatives_of_upper_bounds() {
        let pool = pile_pool();
        let c = &cluster_by_signature(&pool)[0];
        let reps = expand_representatives(c, &pool, &Extrapolation::default());
        let got: Vec<(Role, String)> = reps.iter().map(|r| (r.role, r.candidate.descriptor.clone())).collect();
        assert_eq!(
            got,
            vec![
                (Role::Tightest, "pile_top_early_25".into()),
                (Role::Loosest, "pile_top_early_35".into()),
                (Role::ParametricMedian, "pile_top_early_30".into())
            ]
        );

        let prog = Progression {
            props: vec![PropertyProgression {
                id: "pile_top".into(),
                rows: vec![
                    ProgressionRow { size: 10, mean: 0.0, min: 0.0, max: 20.0 },
                    ProgressionRow { size: 12, mean: 0.0, min: 0.0, max: 23.0 },
                ],
                fit: Some((1.5, 5.0)),
            }],
        };
        let ex = Extrapolation { progression: Some(&prog), scale: BTreeMap::new() };
        let reps = expand_representatives(c, &pool, &ex);
        assert_eq!(reps.len(), 4);
        let last = reps.last().unwrap();
        assert_eq!(last.role, Role::Extrapolated);
        assert_eq!(last.candidate.constraint, "forall(i in 1..17)(y[layout[i, 1]] <= 26)");
        assert_eq!(last.candidate.descriptor, "pile_top_early_26");
    }

    #[test]
    fn single_member_passes_through() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![cand("x[1] <= 3", "p_3", "a")]);
        let pool = pool_across_instances(&m);
        let c = &cluster_by_signature(&pool)[0];
        let reps = expand_representatives(c, &pool, &Extrapolation::default());
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].candidate.constraint, "x[1] <= 3");
    }

    #[test]
    fn directions() {
        let e = parse_expr_text("forall(i in 1..17)(y[layout[i, 1]] <= 25)").unwrap();
        assert_eq!(literal_direction(&e, 3), Direction::Upper);
        let e = parse_expr_text("3 <= sum(i in 1..n)(x[i])").unwrap();
        assert_eq!(literal_direction(&e, 0), Direction::Lower);
        let e = parse_expr_text("x[1] = 4").unwrap();
        assert_eq!(literal_direction(&e, 1), Direction::Undirected);
    }
}
