#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamforge::corpus::ShapeKind;
use streamforge::encode::SolutionTensor;

pub const PLANTED_N: usize = 6;
pub const PLANTED_MAX: i64 = 9;

/// Row of `n` cells in `0..=PLANTED_MAX` summing to `s`.
fn row_with_sum<R: Rng>(s: i64, n: usize, rng: &mut R) -> Vec<i64> {
    let mut row = vec![0; n];
    let mut left = s;
    while left > 0 {
        let c = rng.gen_range(0..n);
        if row[c] < PLANTED_MAX {
            row[c] += 1;
            left -= 1;
        }
    }
    row
}

fn tensor(rows: &[Vec<i64>]) -> SolutionTensor<f64> {
    let n = rows.len();
    let mut t = SolutionTensor::zeros(ShapeKind::Matrix, 1, n, rows[0].len());
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            t.set(0, r, c, *v as f64 / PLANTED_MAX as f64);
        }
    }
    t
}

/// Positives share one row sum per matrix (drawn per sample); negatives draw
/// every row sum independently. Returns raw matrices alongside the tensors.
pub struct Planted {
    pub positives: Vec<SolutionTensor<f64>>,
    pub negatives: Vec<SolutionTensor<f64>>,
    pub pos_rows: Vec<Vec<Vec<i64>>>,
    pub neg_rows: Vec<Vec<Vec<i64>>>,
}

pub fn planted_corpus(count: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = PLANTED_N;
    let mut p = Planted { positives: vec![], negatives: vec![], pos_rows: vec![], neg_rows: vec![] };
    for _ in 0..count {
        let s = rng.gen_range(8..=46);
        let rows: Vec<_> = (0..n).map(|_| row_with_sum(s, n, &mut rng)).collect();
        p.positives.push(tensor(&rows));
        p.pos_rows.push(rows);
        let rows: Vec<_> = (0..n).map(|_| row_with_sum(rng.gen_range(8..=46), n, &mut rng)).collect();
        p.negatives.push(tensor(&rows));
        p.neg_rows.push(rows);
    }
    p
}

pub fn row_sums(rows: &[Vec<i64>]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().sum::<i64>() as f64).collect()
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use streamforge::corpus::Status;
use streamforge::portfolio::{Members, PortfolioPlan, Rule, ScoredCandidate, SlotPolicy};
use streamforge::valid::{Phase, ValidationRecord};

/// Scored pool plus test records for every (candidate, instance) pair.
pub struct RaceFixture {
    pub cands: Vec<ScoredCandidate>,
    pub records: Vec<ValidationRecord>,
    pub baselines: BTreeMap<String, f64>,
    pub families: usize,
}

pub fn record(c: &str, i: &str, status: Status, elapsed: f64, tb: f64) -> ValidationRecord {
    ValidationRecord {
        candidate: c.into(),
        instance: i.into(),
        phase: Phase::Test,
        status,
        elapsed,
        baseline: tb,
        seed: 0,
        baseline_status: Status::Sat,
    }
}

fn random_status<R: Rng>(rng: &mut R) -> Status {
    match rng.gen_range(0..20) {
        0..=8 => Status::Sat,
        9..=13 => Status::Unsat,
        14..=18 => Status::Timeout,
        _ => Status::Error,
    }
}

/// `families` families of 1..=5 members over 2..=8 instances. With
/// `nested`, each family leader outranks every non-leader and solves within
/// a fifth of the baseline whenever it returns SAT.
pub fn race_fixture<R: Rng>(rng: &mut R, families: usize, nested: bool) -> RaceFixture {
    let n_inst = rng.gen_range(2..=8);
    let baselines: BTreeMap<String, f64> = (0..n_inst).map(|i| (format!("i{i}"), rng.gen_range(1.0..100.0))).collect();
    let mut cands = Vec::new();
    let mut records = Vec::new();
    for f in 0..families {
        let members = rng.gen_range(1..=5);
        for j in 0..members {
            let id = format!("c{f}_{j}");
            let score = if nested && j == 0 { 1000.0 + rng.gen_range(0.0..100.0) } else { rng.gen_range(0.0..100.0) };
            cands.push(ScoredCandidate { id: id.clone(), descriptor: format!("fam{f}_bound_{j}"), score });
            for (inst, &tb) in &baselines {
                let status = random_status(rng);
                let elapsed = match status {
                    Status::Timeout => tb,
                    Status::Sat if nested && j == 0 => rng.gen_range(0.0..tb / 5.0),
                    _ => rng.gen_range(0.0..tb),
                };
                records.push(record(&id, inst, status, elapsed, tb));
            }
        }
    }
    RaceFixture { cands, records, baselines, families }
}

#[derive(Debug, PartialEq)]
pub struct OracleRace {
    pub winner: Option<String>,
    pub t_winner: f64,
    pub contributions: Vec<f64>,
}

#[derive(PartialEq)]
struct Event {
    time: f64,
    /// 0 = baseline finishes, 1 = lane event; the baseline wins ties.
    order: u8,
    lane: usize,
    kind: EventKind,
}

#[derive(PartialEq)]
enum EventKind {
    Start(usize),
    Return { member: usize, started: f64 },
    Kill { member: usize, started: f64 },
    Baseline,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on (time, order, lane)
        o.time.total_cmp(&self.time).then(o.order.cmp(&self.order)).then(o.lane.cmp(&self.lane))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Event-driven race: lanes start members, members return or are killed at
/// the end of their slot, the baseline finishes at `tb`.
pub fn oracle_race(
    plan: &PortfolioPlan,
    records: &[ValidationRecord],
    instance: &str,
    tb: f64,
    policy: SlotPolicy,
) -> OracleRace {
    let recs: HashMap<(&str, &str), &ValidationRecord> =
        records.iter().map(|r| ((r.candidate.as_str(), r.instance.as_str()), r)).collect();
    let slot = |lane: usize| match (plan.rule, plan.m) {
        (Rule::SimpleTopK, _) => tb,
        (Rule::FamilyBudget, Members::Fixed(m)) => tb / m as f64,
        (Rule::FamilyBudget, Members::All) => tb / plan.lanes[lane].members.len() as f64,
    };
    let mut heap = BinaryHeap::new();
    heap.push(Event { time: tb, order: 0, lane: usize::MAX, kind: EventKind::Baseline });
    for lane in 0..plan.lanes.len() {
        heap.push(Event { time: 0.0, order: 1, lane, kind: EventKind::Start(0) });
    }
    let mut contributions: Vec<Option<f64>> = vec![None; plan.lanes.len()];
    let mut winner: Option<Option<String>> = None;
    let mut t_winner = tb;
    while let Some(ev) = heap.pop() {
        if ev.time > tb {
            break;
        }
        match ev.kind {
            EventKind::Baseline => {
                if winner.is_none() {
                    winner = Some(None);
                }
            }
            EventKind::Start(member) => {
                let Some(id) = plan.lanes[ev.lane].members.get(member) else { continue };
                let r = recs[&(id.as_str(), instance)];
                let s = slot(ev.lane);
                let (time, kind) = if r.elapsed <= s {
                    (ev.time + r.elapsed, EventKind::Return { member, started: ev.time })
                } else {
                    (ev.time + s, EventKind::Kill { member, started: ev.time })
                };
                heap.push(Event { time, order: 1, lane: ev.lane, kind });
            }
            EventKind::Return { member, started } => {
                let id = &plan.lanes[ev.lane].members[member];
                if recs[&(id.as_str(), instance)].status == Status::Sat {
                    contributions[ev.lane] = Some(ev.time);
                    if winner.is_none() {
                        winner = Some(Some(id.clone()));
                        t_winner = ev.time;
                    }
                } else {
                    let next = match policy {
                        SlotPolicy::Reallocate => ev.time,
                        SlotPolicy::Fixed => started + slot(ev.lane),
                    };
                    heap.push(Event { time: next, order: 1, lane: ev.lane, kind: EventKind::Start(member + 1) });
                }
            }
            EventKind::Kill { member, .. } => {
                heap.push(Event { time: ev.time, order: 1, lane: ev.lane, kind: EventKind::Start(member + 1) });
            }
        }
    }
    OracleRace {
        winner: winner.unwrap_or(None),
        t_winner,
        contributions: contributions.into_iter().map(|c| c.unwrap_or(tb)).collect(),
    }
}
