//! Adapter for a MiniZinc-compatible command-line solver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use crate::minicp::ParamSource;

use super::backend::Enumeration;
use super::{io_err, CorpusError, Problem, Solution, SolveOutcome, SolverBackend, Status};

/// Environment variable naming the solver executable.
pub const MINIZINC_ENV: &str = "STREAMFORGE_MINIZINC";

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub executable: PathBuf,
    pub solver_id: String,
    pub workdir: PathBuf,
}

impl ExternalBackend {
    pub fn from_env(solver_id: &str, workdir: PathBuf) -> Self {
        let executable = std::env::var_os(MINIZINC_ENV).map(PathBuf::from).unwrap_or_else(|| "minizinc".into());
        ExternalBackend { executable, solver_id: solver_id.to_string(), workdir }
    }

    fn write_inputs(&self, problem: &Problem, instance: &str, extra: &[String]) -> Result<(PathBuf, PathBuf), CorpusError> {
        let src = problem.spec.external_model.as_ref().ok_or_else(|| CorpusError::Problem {
            path: problem.dir.clone(),
            message: "no external_model for the external backend".into(),
        })?;
        let src = problem.dir.join(src);
        let mut model = std::fs::read_to_string(&src).map_err(io_err(&src))?;
        for c in extra {
            let c = c.trim().trim_end_matches(';');
            let c = c.strip_prefix("constraint ").unwrap_or(c);
            let _ = write!(model, "\nconstraint {c};");
        }
        model.push('\n');
        std::fs::create_dir_all(&self.workdir).map_err(io_err(&self.workdir))?;
        let stem = format!("{}_{}_{}", problem.id(), instance, unique_suffix(&model));
        let mzn = self.workdir.join(format!("{stem}.mzn"));
        let dzn = self.workdir.join(format!("{stem}.dzn"));
        std::fs::write(&mzn, model).map_err(io_err(&mzn))?;
        std::fs::write(&dzn, render_dzn(problem.overrides(instance)?)).map_err(io_err(&dzn))?;
        Ok((mzn, dzn))
    }

    fn run(&self, mzn: &Path, dzn: &Path, all: Option<usize>, budget: f64, seed: u64) -> Result<(StreamSummary, f64, String), CorpusError> {
        let mut cmd = Command::new(&self.executable);
        cmd.arg("--solver")
            .arg(&self.solver_id)
            .arg("--output-mode")
            .arg("json")
            .arg("--output-time")
            .arg("--time-limit")
            .arg(((budget * 1000.0).ceil() as u64).max(1).to_string())
            .arg("-r")
            .arg(seed.to_string());
        if let Some(n) = all {
            cmd.arg("-a").arg("-n").arg(n.to_string());
        }
        cmd.arg(mzn).arg(dzn);
        let start = Instant::now();
        let out = cmd.output().map_err(|e| CorpusError::Launch {
            exe: self.executable.display().to_string(),
            message: e.to_string(),
        })?;
        let wall = start.elapsed().as_secs_f64();
        let stdout = String::from_utf8_lossy(&out.stdout);
        let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
        let mut summary = parse_solver_stream(&stdout);
        if !out.status.success() && summary.solutions.is_empty() && !summary.unsat {
            summary.failed = true;
        }
        Ok((summary, wall, stderr))
    }
}

fn unique_suffix(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(text.as_bytes())[..6])
}

fn render_dzn(params: &BTreeMap<String, ParamSource>) -> String {
    let mut s = String::new();
    for (k, v) in params {
        let rhs = match v {
            ParamSource::Int(i) => i.to_string(),
            ParamSource::Array1(a) => format!("[{}]", join(a)),
            ParamSource::Array2(rows) => {
                let body: Vec<String> = rows.iter().map(|r| join(r)).collect();
                format!("[| {} |]", body.join(" | "))
            }
            ParamSource::Expr(e) => e.clone(),
        };
        let _ = writeln!(s, "{k} = {rhs};");
    }
    s
}

fn join(v: &[i64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// What a solver's standard output stream says.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamSummary {
    /// Variable name to flattened values, one map per `----------` block.
    pub solutions: Vec<BTreeMap<String, Vec<i64>>>,
    pub exhausted: bool,
    pub unsat: bool,
    pub unknown: bool,
    /// Last `% time elapsed:` value, in seconds.
    pub reported_time: Option<f64>,
    pub failed: bool,
    pub diagnostics: Vec<String>,
}

/// Parse the `----------` / `==========` / `=====UNSATISFIABLE=====` stream
/// with JSON solution bodies.
pub fn parse_solver_stream(stdout: &str) -> StreamSummary {
    let mut s = StreamSummary::default();
    let mut block = String::new();
    for line in stdout.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("% time elapsed:") {
            let num = rest.trim().trim_end_matches('s').trim();
            if let Ok(v) = num.parse::<f64>() {
                s.reported_time = Some(v);
            }
            continue;
        }
        match t {
            "----------" => {
                match parse_json_solution(&block) {
                    Ok(sol) => s.solutions.push(sol),
                    Err(e) => s.diagnostics.push(e),
                }
                block.clear();
            }
            "==========" => s.exhausted = true,
            "=====UNSATISFIABLE=====" => s.unsat = true,
            "=====UNKNOWN=====" => s.unknown = true,
            "=====ERROR=====" => s.failed = true,
            _ if t.starts_with('%') => {}
            _ => {
                block.push_str(line);
                block.push('\n');
            }
        }
    }
    s
}

fn parse_json_solution(block: &str) -> Result<BTreeMap<String, Vec<i64>>, String> {
    let v: serde_json::Value = serde_json::from_str(block.trim()).map_err(|e| format!("solution block: {e}"))?;
    let obj = v.as_object().ok_or("solution block is not an object")?;
    let mut out = BTreeMap::new();
    for (k, val) in obj {
        if k.starts_with('_') {
            continue;
        }
        let mut flat = Vec::new();
        flatten(val, &mut flat).map_err(|e| format!("{k}: {e}"))?;
        out.insert(k.clone(), flat);
    }
    Ok(out)
}

fn flatten(v: &serde_json::Value, out: &mut Vec<i64>) -> Result<(), String> {
    match v {
        serde_json::Value::Number(n) => out.push(n.as_i64().ok_or("non-integer value")?),
        serde_json::Value::Bool(b) => out.push(*b as i64),
        serde_json::Value::Array(items) => {
            for it in items {
                flatten(it, out)?;
            }
        }
        _ => return Err("unsupported value".into()),
    }
    Ok(())
}

impl SolverBackend for ExternalBackend {
    fn id(&self) -> String {
        format!("external:{}", self.solver_id)
    }

    fn solve(&self, problem: &Problem, instance: &str, extra: &[String], budget: f64, seed: u64) -> Result<SolveOutcome, CorpusError> {
        if !(budget > 0.0) {
            return Ok(SolveOutcome::error(&self.id(), seed, format!("time budget must be positive, got {budget}")));
        }
        let (mzn, dzn) = self.write_inputs(problem, instance, extra)?;
        let (sum, wall, stderr) = self.run(&mzn, &dzn, None, budget, seed)?;
        let elapsed = sum.reported_time.unwrap_or(wall);
        let (status, solution) = if sum.failed {
            (Status::Error, None)
        } else if let Some(vars) = sum.solutions.first() {
            (Status::Sat, Some(Solution { instance: instance.to_string(), index: 0, vars: vars.clone() }))
        } else if sum.unsat {
            (Status::Unsat, None)
        } else {
            (Status::Timeout, None)
        };
        let elapsed = if status == Status::Timeout { budget } else { elapsed };
        let mut diag: Vec<String> = sum.diagnostics;
        if status == Status::Error && !stderr.trim().is_empty() {
            diag.push(stderr.trim().to_string());
        }
        Ok(SolveOutcome {
            status,
            elapsed,
            solution,
            backend: self.id(),
            seed,
            diagnostics: (!diag.is_empty()).then(|| diag.join("\n")),
        })
    }

    fn enumerate(&self, problem: &Problem, instance: &str, target_n: usize, budget: f64, seed: u64) -> Result<Enumeration, CorpusError> {
        let (mzn, dzn) = self.write_inputs(problem, instance, &[])?;
        let (sum, wall, stderr) = self.run(&mzn, &dzn, Some(target_n), budget, seed)?;
        if sum.failed {
            return Err(CorpusError::Launch { exe: self.executable.display().to_string(), message: stderr });
        }
        let solutions = sum
            .solutions
            .into_iter()
            .take(target_n)
            .enumerate()
            .map(|(i, vars)| Solution { instance: instance.to_string(), index: i, vars })
            .collect();
        Ok(Enumeration { solutions, exhausted: sum.exhausted || sum.unsat, elapsed: sum.reported_time.unwrap_or(wall) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_stream() {
        let out = "{\n  \"x\" : [1, 2, 3],\n  \"y\": [[1, 0], [0, 1]], \"b\": [true, false], \"_checker\": \"\"\n}\n----------\n% time elapsed: 0.25 s\n{\"x\": [2, 1, 3], \"y\": [[0,0],[0,0]], \"b\": [false, false]}\n----------\n==========\n% time elapsed: 0.50 s\n";
        let s = parse_solver_stream(out);
        assert_eq!(s.solutions.len(), 2);
        assert_eq!(s.solutions[0]["y"], vec![1, 0, 0, 1]);
        assert_eq!(s.solutions[0]["b"], vec![1, 0]);
        assert!(!s.solutions[0].contains_key("_checker"));
        assert!(s.exhausted && !s.unsat);
        assert_eq!(s.reported_time, Some(0.5));
    }

    #[test]
    fn parses_unsat() {
        let s = parse_solver_stream("=====UNSATISFIABLE=====\n% time elapsed: 0.01 s\n");
        assert!(s.unsat);
        assert!(s.solutions.is_empty());
    }

    #[test]
    fn dzn_rendering() {
        let mut p = BTreeMap::new();
        p.insert("n".to_string(), ParamSource::Int(3));
        p.insert("w".to_string(), ParamSource::Array1(vec![1, 2]));
        p.insert("m".to_string(), ParamSource::Array2(vec![vec![1, 2], vec![3, 4]]));
        assert_eq!(render_dzn(&p), "m = [| 1, 2 | 3, 4 |];\nn = 3;\nw = [1, 2];\n");
    }
}
