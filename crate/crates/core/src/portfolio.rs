//! Deployment selection and race simulation over validation records.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Status;
use crate::valid::ValidationRecord;

#[derive(Debug, thiserror::Error)]
pub enum PortfolioError {
    #[error("no record for candidate `{candidate}` on instance `{instance}`")]
    MissingRecord { candidate: String, instance: String },
    #[error("total baseline time is zero")]
    ZeroBaseline,
    #[error("k and m must be at least 1")]
    EmptyPlan,
}

const STRIP_WORDS: [&str; 5] = ["conservative", "tight", "tightfit", "aggressive", "loose"];

/// Descriptor minus trailing integer and aggressiveness tokens.
pub fn derive_family(descriptor: &str) -> String {
    let tokens: Vec<&str> = descriptor.split('_').collect();
    let mut keep = tokens.len();
    while keep > 1 {
        let t = tokens[keep - 1];
        let numeric = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit());
        // `tight_fit` splits into two tokens
        let word = STRIP_WORDS.contains(&t) || (t == "fit" && keep >= 2 && tokens[keep - 2] == "tight");
        if !(numeric || word) {
            break;
        }
        keep -= 1;
    }
    tokens[..keep].join("_")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub descriptor: String,
    pub score: f64,
}

/// Members per family: a fixed count, or every member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "MembersRepr", into = "MembersRepr")]
pub enum Members {
    Fixed(usize),
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MembersRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<MembersRepr> for Members {
    type Error = String;
    fn try_from(r: MembersRepr) -> Result<Self, String> {
        match r {
            MembersRepr::Count(0) => Err("member count must be at least 1".into()),
            MembersRepr::Count(m) => Ok(Members::Fixed(m)),
            MembersRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Members> for MembersRepr {
    fn from(m: Members) -> Self {
        match m {
            Members::Fixed(m) => MembersRepr::Count(m),
            Members::All => MembersRepr::Word("all".into()),
        }
    }
}

impl Members {
    pub fn label(&self) -> String {
        match self {
            Members::Fixed(m) => m.to_string(),
            Members::All => "all".into(),
        }
    }
}

impl std::str::FromStr for Members {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Members::All),
            n => n.parse().ok().filter(|m| *m >= 1).map(Members::Fixed).ok_or_else(|| format!("bad member count `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    SimpleTopK,
    FamilyBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub family: String,
    /// Candidate ids in run order.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioPlan {
    pub rule: Rule,
    pub k: usize,
    pub m: Members,
    pub lanes: Vec<Lane>,
}

impl PortfolioPlan {
    /// Per-member time slice of a lane.
    pub fn slot(&self, lane: &Lane, t_b: f64) -> f64 {
        match (self.rule, self.m) {
            (Rule::SimpleTopK, _) => t_b,
            (Rule::FamilyBudget, Members::Fixed(m)) => t_b / m as f64,
            (Rule::FamilyBudget, Members::All) => t_b / lane.members.len().max(1) as f64,
        }
    }

    /// Compute reserved per instance: every lane and the baseline get `t_b`.
    pub fn lane_budget(&self, t_b: f64) -> f64 {
        (self.lanes.len() + 1) as f64 * t_b
    }
}

fn by_score(a: &&ScoredCandidate, b: &&ScoredCandidate) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

pub fn select_simple_top_k(cands: &[ScoredCandidate], k: usize) -> Result<PortfolioPlan, PortfolioError> {
    if k == 0 {
        return Err(PortfolioError::EmptyPlan);
    }
    let mut sorted: Vec<&ScoredCandidate> = cands.iter().collect();
    sorted.sort_by(by_score);
    let lanes = sorted
        .into_iter()
        .take(k)
        .map(|c| Lane { family: derive_family(&c.descriptor), members: vec![c.id.clone()] })
        .collect();
    Ok(PortfolioPlan { rule: Rule::SimpleTopK, k, m: Members::Fixed(1), lanes })
}

/// Top `k` families by best member score, top `m` members each.
pub fn select_family_budget(cands: &[ScoredCandidate], k: usize, m: Members) -> Result<PortfolioPlan, PortfolioError> {
    if k == 0 || m == Members::Fixed(0) {
        return Err(PortfolioError::EmptyPlan);
    }
    let mut families: BTreeMap<String, Vec<&ScoredCandidate>> = BTreeMap::new();
    for c in cands {
        families.entry(derive_family(&c.descriptor)).or_default().push(c);
    }
    let mut ranked: Vec<(String, Vec<&ScoredCandidate>)> = families
        .into_iter()
        .map(|(f, mut members)| {
            members.sort_by(by_score);
            (f, members)
        })
        .collect();
    ranked.sort_by(|(fa, a), (fb, b)| by_score(&a[0], &b[0]).then_with(|| fa.cmp(fb)));
    let lanes = ranked
        .into_iter()
        .take(k)
        .map(|(family, members)| {
            let take = match m {
                Members::Fixed(m) => m,
                Members::All => members.len(),
            };
            Lane { family, members: members.into_iter().take(take).map(|c| c.id.clone()).collect() }
        })
        .collect();
    Ok(PortfolioPlan { rule: Rule::FamilyBudget, k, m, lanes })
}

/// What a lane does with slot time left by a member that fails early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPolicy {
    /// Next member starts as soon as the previous one returns.
    #[default]
    Reallocate,
    /// Members start on a fixed schedule at multiples of the slot.
    Fixed,
}

/// Records keyed by (candidate, instance).
#[derive(Debug, Default)]
pub struct RecordIndex<'a> {
    map: HashMap<(&'a str, &'a str), &'a ValidationRecord>,
}

impl<'a> RecordIndex<'a> {
    pub fn new(records: impl IntoIterator<Item = &'a ValidationRecord>) -> Self {
        RecordIndex { map: records.into_iter().map(|r| ((r.candidate.as_str(), r.instance.as_str()), r)).collect() }
    }

    pub fn get(&self, candidate: &str, instance: &str) -> Result<&'a ValidationRecord, PortfolioError> {
        self.map.get(&(candidate, instance)).copied().ok_or_else(|| PortfolioError::MissingRecord {
            candidate: candidate.into(),
            instance: instance.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceResult {
    pub instance: String,
    pub t_b: f64,
    /// Winning candidate, `None` when the baseline finishes first.
    pub winner: Option<String>,
    pub t_winner: f64,
    /// Per-lane contribution time, in plan order.
    pub contributions: Vec<f64>,
    pub cpu: f64,
}

/// Returns (contribution, winning member).
fn run_lane(
    lane: &Lane,
    slot: f64,
    t_b: f64,
    index: &RecordIndex,
    instance: &str,
    policy: SlotPolicy,
) -> Result<(f64, Option<String>), PortfolioError> {
    let mut offset = 0.0;
    for id in &lane.members {
        let r = index.get(id, instance)?;
        if r.elapsed <= slot {
            if r.status == Status::Sat {
                return Ok(((offset + r.elapsed).min(t_b), Some(id.clone())));
            }
            offset += match policy {
                SlotPolicy::Reallocate => r.elapsed,
                SlotPolicy::Fixed => slot,
            };
        } else {
            offset += slot;
        }
    }
    Ok((t_b, None))
}

pub fn simulate_race(
    plan: &PortfolioPlan,
    index: &RecordIndex,
    instance: &str,
    t_b: f64,
    policy: SlotPolicy,
) -> Result<RaceResult, PortfolioError> {
    let mut contributions = Vec::with_capacity(plan.lanes.len());
    let (mut t_winner, mut winner) = (t_b, None);
    for lane in &plan.lanes {
        let (t, who) = run_lane(lane, plan.slot(lane, t_b), t_b, index, instance, policy)?;
        contributions.push(t);
        if t < t_winner {
            t_winner = t;
            winner = who;
        }
    }
    Ok(RaceResult {
        instance: instance.into(),
        t_b,
        winner,
        t_winner,
        contributions,
        cpu: (plan.lanes.len() + 1) as f64 * t_winner,
    })
}

/// Races every instance of `baselines` (instance -> t_b).
pub fn race_all(
    plan: &PortfolioPlan,
    index: &RecordIndex,
    baselines: &BTreeMap<String, f64>,
    policy: SlotPolicy,
) -> Result<Vec<RaceResult>, PortfolioError> {
    let items: Vec<(&String, &f64)> = baselines.iter().collect();
    items.par_iter().map(|(inst, tb)| simulate_race(plan, index, inst, **tb, policy)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub wall_clock: f64,
    pub cpu: f64,
}

pub fn portfolio_savings(results: &[RaceResult]) -> Result<Savings, PortfolioError> {
    let total: f64 = results.iter().map(|r| r.t_b).sum();
    if total <= 0.0 {
        return Err(PortfolioError::ZeroBaseline);
    }
    let wall: f64 = results.iter().map(|r| r.t_winner).sum();
    let cpu: f64 = results.iter().map(|r| r.cpu).sum();
    Ok(Savings { wall_clock: (total - wall) / total, cpu: (total - cpu) / total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub m: Members,
    pub lanes: usize,
    pub savings: Savings,
    /// Reserved compute summed over instances.
    pub budget: f64,
}

pub fn sweep_km(
    cands: &[ScoredCandidate],
    index: &RecordIndex,
    baselines: &BTreeMap<String, f64>,
    ks: &[usize],
    ms: &[Members],
    policy: SlotPolicy,
) -> Result<Vec<SweepCell>, PortfolioError> {
    let mut out = Vec::new();
    for &k in ks {
        for &m in ms {
            let plan = select_family_budget(cands, k, m)?;
            let results = race_all(&plan, index, baselines, policy)?;
            out.push(SweepCell {
                k,
                m,
                lanes: plan.lanes.len(),
                savings: portfolio_savings(&results)?,
                budget: baselines.values().map(|tb| plan.lane_budget(*tb)).sum(),
            });
        }
    }
    Ok(out)
}

pub const DEFAULT_MS: [Members; 4] = [Members::Fixed(1), Members::Fixed(2), Members::Fixed(3), Members::All];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valid::Phase;

    fn rec(c: &str, status: Status, tc: f64) -> ValidationRecord {
        ValidationRecord {
            candidate: c.into(),
            instance: "i".into(),
            phase: Phase::Test,
            status,
            elapsed: tc,
            baseline: 100.0,
            seed: 0,
            baseline_status: Status::Sat,
        }
    }

    fn sc(id: &str, d: &str, s: f64) -> ScoredCandidate {
        ScoredCandidate { id: id.into(), descriptor: d.into(), score: s }
    }

    fn one_lane(members: &[&str], m: usize) -> PortfolioPlan {
        PortfolioPlan {
            rule: Rule::FamilyBudget,
            k: 1,
            m: Members::Fixed(m),
            lanes: vec![Lane { family: "a".into(), members: members.iter().map(|s| s.to_string()).collect() }],
        }
    }

    #[test]
    fn families() {
        assert_eq!(derive_family("pile_top_early_25"), "pile_top_early");
        assert_eq!(derive_family("max_adj_diff_aggressive"), "max_adj_diff");
        assert_eq!(derive_family("rank_walk_endpoints"), "rank_walk_endpoints");
        assert_eq!(derive_family("row_sum_tight_fit_3"), "row_sum");
        assert_eq!(derive_family("42_7"), "42");
    }

    #[test]
    fn lane_rule_traces() {
        let rs = [rec("a", Status::Sat, 10.0), rec("b", Status::Unsat, 5.0), rec("c", Status::Sat, 40.0)];
        let idx = RecordIndex::new(&rs);
        let r = simulate_race(&one_lane(&["a", "b", "c"], 3), &idx, "i", 100.0, SlotPolicy::Reallocate).unwrap();
        assert_eq!((r.t_winner, r.winner.as_deref()), (10.0, Some("a")));
        assert_eq!(r.cpu, 20.0);

        let rs = [rec("a", Status::Timeout, 100.0), rec("b", Status::Sat, 20.0)];
        let idx = RecordIndex::new(&rs);
        let r = simulate_race(&one_lane(&["a", "b"], 3), &idx, "i", 100.0, SlotPolicy::Reallocate).unwrap();
        assert!((r.t_winner - (100.0 / 3.0 + 20.0)).abs() < 1e-12);

        let rs = [rec("a", Status::Unsat, 5.0), rec("b", Status::Sat, 20.0)];
        let idx = RecordIndex::new(&rs);
        let plan = one_lane(&["a", "b"], 2);
        assert_eq!(simulate_race(&plan, &idx, "i", 100.0, SlotPolicy::Reallocate).unwrap().t_winner, 25.0);
        assert_eq!(simulate_race(&plan, &idx, "i", 100.0, SlotPolicy::Fixed).unwrap().t_winner, 70.0);

        let rs = [rec("a", Status::Timeout, 100.0)];
        let idx = RecordIndex::new(&rs);
        let r = simulate_race(&one_lane(&["a"], 1), &idx, "i", 100.0, SlotPolicy::Reallocate).unwrap();
        assert_eq!((r.t_winner, r.winner), (100.0, None));
        assert!(matches!(
            simulate_race(&one_lane(&["zz"], 1), &idx, "i", 100.0, SlotPolicy::Reallocate),
            Err(PortfolioError::MissingRecord { .. })
        ));
    }

    #[test]
    fn baseline_wins_ties() {
        let rs = [rec("a", Status::Sat, 100.0)];
        let idx = RecordIndex::new(&rs);
        let r = simulate_race(&one_lane(&["a"], 1), &idx, "i", 100.0, SlotPolicy::Reallocate).unwrap();
        assert_eq!(r.winner, None);
    }

    #[test]
    fn black_hole_families() {
        let cands = [
            sc("p1", "pile_top_early_25", 9.0),
            sc("p2", "pile_top_early_conservative", 8.0),
            sc("p3", "pile_top_early_aggressive", 7.5),
            sc("p4", "pile_top_early_40", 1.0),
            sc("m1", "max_adj_diff_aggressive", 8.5),
            sc("m2", "max_adj_diff_4", 3.0),
            sc("r1", "rank_walk_endpoints", 6.0),
            sc("z1", "zero_gain_1", 0.5),
        ];
        let plan = select_family_budget(&cands, 3, Members::Fixed(3)).unwrap();
        let names: Vec<&str> = plan.lanes.iter().map(|l| l.family.as_str()).collect();
        assert_eq!(names, ["pile_top_early", "max_adj_diff", "rank_walk_endpoints"]);
        let sizes: Vec<usize> = plan.lanes.iter().map(|l| l.members.len()).collect();
        assert_eq!(sizes, [3, 2, 1]);
        assert_eq!(plan.lanes[0].members, ["p1", "p2", "p3"]);
        let single = select_family_budget(&cands, 1, Members::Fixed(1)).unwrap();
        assert_eq!(single.lanes[0].members, ["p1"]);
        assert_eq!(select_simple_top_k(&cands, 2).unwrap().lanes.len(), 2);
    }

    #[test]
    fn savings_formulas() {
        let mk = |tb: f64, tw: f64| RaceResult {
            instance: "i".into(),
            t_b: tb,
            winner: None,
            t_winner: tw,
            contributions: vec![],
            cpu: 4.0 * tw,
        };
        let s = portfolio_savings(&[mk(10.0, 1.0), mk(50.0, 5.0)]).unwrap();
        assert!((s.wall_clock - 0.9).abs() < 1e-12 && (s.cpu - 0.6).abs() < 1e-12);
        let s = portfolio_savings(&[mk(10.0, 10.0)]).unwrap();
        assert_eq!((s.wall_clock, s.cpu), (0.0, -3.0));
        assert!(matches!(portfolio_savings(&[mk(0.0, 0.0)]), Err(PortfolioError::ZeroBaseline)));
    }
}
