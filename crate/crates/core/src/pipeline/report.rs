use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Status;
use crate::valid::{ValidationRecord, TIMER_RESOLUTION};

/// One heatmap cell. Errors and missing records read as timeouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatCell {
    /// `log10(t_b / t_c)`
    Speedup(f64),
    Unsat,
    Timeout,
}

impl HeatCell {
    pub fn of(record: Option<&ValidationRecord>) -> HeatCell {
        match record {
            Some(r) if r.status == Status::Sat => {
                HeatCell::Speedup((r.baseline.max(TIMER_RESOLUTION) / r.elapsed.max(TIMER_RESOLUTION)).log10())
            }
            Some(r) if r.status == Status::Unsat => HeatCell::Unsat,
            _ => HeatCell::Timeout,
        }
    }

    pub fn text(&self) -> String {
        match self {
            HeatCell::Speedup(v) => format!("{v:.4}"),
            HeatCell::Unsat => "UNSAT".into(),
            HeatCell::Timeout => "TIMEOUT".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// Candidates, most SAT results first.
    pub rows: Vec<String>,
    /// Instances, fastest baseline first.
    pub columns: Vec<String>,
    pub cells: Vec<Vec<HeatCell>>,
}

pub fn heatmap(records: &[ValidationRecord], baselines: &BTreeMap<String, f64>) -> Heatmap {
    let mut columns: Vec<String> = baselines.keys().cloned().collect();
    columns.sort_by(|a, b| baselines[a].total_cmp(&baselines[b]).then_with(|| a.cmp(b)));
    let mut by_pair: BTreeMap<(&str, &str), &ValidationRecord> = BTreeMap::new();
    let mut sat: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        by_pair.insert((&r.candidate, &r.instance), r);
        *sat.entry(&r.candidate).or_default() += usize::from(r.status == Status::Sat);
    }
    let mut rows: Vec<String> = sat.keys().map(|s| s.to_string()).collect();
    rows.sort_by(|a, b| sat[b.as_str()].cmp(&sat[a.as_str()]).then_with(|| a.cmp(b)));
    let cells = rows
        .iter()
        .map(|c| columns.iter().map(|i| HeatCell::of(by_pair.get(&(c.as_str(), i.as_str())).copied())).collect())
        .collect();
    Heatmap { rows, columns, cells }
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = format!("candidate_id,{}\n", self.columns.join(","));
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let cells: Vec<String> = row.iter().map(HeatCell::text).collect();
            let _ = writeln!(out, "{r},{}", cells.join(","));
        }
        out
    }
}

/// Markdown table with a header row.
pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valid::Phase;

    fn rec(c: &str, i: &str, status: Status, tc: f64, tb: f64) -> ValidationRecord {
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
    fn ordering_and_cell_states() {
        let rs = [
            rec("a", "slow", Status::Unsat, 1.0, 100.0),
            rec("a", "fast", Status::Timeout, 10.0, 10.0),
            rec("b", "slow", Status::Sat, 1.0, 100.0),
            rec("b", "fast", Status::Sat, 10.0, 10.0),
            rec("c", "slow", Status::Error, 1.0, 100.0),
        ];
        let tb: BTreeMap<String, f64> = [("slow".to_string(), 100.0), ("fast".to_string(), 10.0)].into();
        let h = heatmap(&rs, &tb);
        assert_eq!(h.columns, ["fast", "slow"]);
        assert_eq!(h.rows, ["b", "a", "c"]);
        assert_eq!(h.cells[0], [HeatCell::Speedup(0.0), HeatCell::Speedup(2.0)]);
        assert_eq!(h.cells[1], [HeatCell::Timeout, HeatCell::Unsat]);
        assert_eq!(h.cells[2], [HeatCell::Timeout, HeatCell::Timeout]);
        assert!(h.to_csv().starts_with("candidate_id,fast,slow\nb,0.0000,2.0000\na,TIMEOUT,UNSAT\n"));
    }
}
