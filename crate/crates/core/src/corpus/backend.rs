use crate::minicp::{self, Clock, SearchStatus, SolveMode, SolveOptions};

use super::{CorpusError, Problem, Solution, SolveOutcome, Status};

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub solutions: Vec<Solution>,
    pub exhausted: bool,
    pub elapsed: f64,
}

/// A solver that can decide and enumerate problem instances.
///
/// `Err` is reserved for failures to run at all; a constraint the backend
/// rejects comes back as an `ERROR` outcome carrying diagnostics.
pub trait SolverBackend: Send + Sync {
    fn id(&self) -> String;

    fn solve(
        &self,
        problem: &Problem,
        instance: &str,
        extra: &[String],
        budget: f64,
        seed: u64,
    ) -> Result<SolveOutcome, CorpusError>;

    fn enumerate(
        &self,
        problem: &Problem,
        instance: &str,
        target_n: usize,
        budget: f64,
        seed: u64,
    ) -> Result<Enumeration, CorpusError>;
}

/// The in-process backtracking solver.
#[derive(Debug, Clone, Default)]
pub struct BuiltinBackend {
    pub clock: Clock,
}

impl BuiltinBackend {
    pub fn new(clock: Clock) -> Self {
        BuiltinBackend { clock }
    }
}

impl SolverBackend for BuiltinBackend {
    fn id(&self) -> String {
        match self.clock {
            Clock::Wall => "builtin".into(),
            Clock::Effort { .. } => "builtin-effort".into(),
        }
    }

    fn solve(
        &self,
        problem: &Problem,
        instance: &str,
        extra: &[String],
        budget: f64,
        seed: u64,
    ) -> Result<SolveOutcome, CorpusError> {
        let model = problem.model(instance)?;
        let mut parsed = Vec::with_capacity(extra.len());
        for text in extra {
            match model.parse_constraint(text) {
                Ok(e) => parsed.push(e),
                Err(e) => return Ok(SolveOutcome::error(&self.id(), seed, format!("{text}: {e}"))),
            }
        }
        let opts = SolveOptions { mode: SolveMode::FirstSat, budget_secs: budget, seed, clock: self.clock };
        let r = match minicp::solve(&model, &parsed, &opts) {
            Ok(r) => r,
            Err(e) => return Ok(SolveOutcome::error(&self.id(), seed, e.to_string())),
        };
        let (status, elapsed) = match r.status {
            SearchStatus::Sat => (Status::Sat, r.elapsed),
            SearchStatus::Unsat => (Status::Unsat, r.elapsed),
            SearchStatus::Timeout => (Status::Timeout, budget),
        };
        let solution = r.solutions.first().map(|a| Solution::from_assignment(instance, 0, &model, a));
        Ok(SolveOutcome { status, elapsed, solution, backend: self.id(), seed, diagnostics: None })
    }

    fn enumerate(
        &self,
        problem: &Problem,
        instance: &str,
        target_n: usize,
        budget: f64,
        seed: u64,
    ) -> Result<Enumeration, CorpusError> {
        let model = problem.model(instance)?;
        let opts = SolveOptions { mode: SolveMode::EnumerateUpTo(target_n), budget_secs: budget, seed, clock: self.clock };
        let r = minicp::solve(&model, &[], &opts)?;
        let solutions = r
            .solutions
            .iter()
            .enumerate()
            .map(|(i, a)| Solution::from_assignment(instance, i, &model, a))
            .collect();
        Ok(Enumeration { solutions, exhausted: r.exhausted, elapsed: r.elapsed })
    }
}
