//! Finite-domain backtracking search.
//!
//! Top-level conjunctions and `forall`s are expanded into ground
//! constraints. Each ground constraint is checked once all the cells it
//! mentions are assigned; constraints over exactly two cells additionally
//! forward-check the remaining cell, and `alldifferent` over plain cells
//! removes an assigned value from its peers. Variables are chosen
//! smallest-domain-first and values tried in ascending order.
//!
//! Evaluation errors that depend on the assignment (an index that falls
//! outside an array, division by zero) make the constraint false for that
//! assignment, mirroring relational semantics.

use std::cell::RefCell;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ast::*;
use super::eval::{Evaluator, NoVars, VarLookup};
use super::model::{MiniModel, VarDecl};
use super::MiniCpError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    FirstSat,
    EnumerateUpTo(usize),
}

/// How solve time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Clock {
    /// Wall-clock seconds.
    #[default]
    Wall,
    /// Search nodes times a fixed cost; deterministic across machines.
    Effort { seconds_per_node: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub mode: SolveMode,
    pub budget_secs: f64,
    pub seed: u64,
    pub clock: Clock,
}

impl SolveOptions {
    pub fn first_sat(budget_secs: f64) -> Self {
        SolveOptions { mode: SolveMode::FirstSat, budget_secs, seed: 0, clock: Clock::Wall }
    }

    pub fn enumerate(n: usize, budget_secs: f64) -> Self {
        SolveOptions { mode: SolveMode::EnumerateUpTo(n), budget_secs, seed: 0, clock: Clock::Wall }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchStatus {
    Sat,
    Unsat,
    Timeout,
}

/// A complete assignment: one row-major value vector per declared variable.
pub type Assignment = Vec<Vec<i64>>;

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub solutions: Vec<Assignment>,
    pub elapsed: f64,
    pub nodes: u64,
    /// The whole search space was explored.
    pub exhausted: bool,
}

struct Ground {
    expr: Expr,
    locals: Vec<(String, i64)>,
    cells: Vec<usize>,
}

struct Search<'m> {
    ev: Evaluator<'m>,
    offsets: Vec<usize>,
    lo: Vec<i64>,
    alive: Vec<Vec<bool>>,
    size: Vec<usize>,
    assigned: Vec<Option<i64>>,
    grounds: Vec<Ground>,
    alldiffs: Vec<Vec<usize>>,
    watch: Vec<Vec<usize>>,
    alldiff_watch: Vec<Vec<usize>>,
    remaining: Vec<usize>,
    trail: Vec<(usize, usize)>,
    rank: Vec<usize>,
    solutions: Vec<Assignment>,
    limit: usize,
    nodes: u64,
    started: Instant,
    opts: SolveOptions,
    timed_out: bool,
    /// First type error met while checking; undefinedness reads as false.
    fault: RefCell<Option<MiniCpError>>,
}

struct CellView<'a> {
    offsets: &'a [usize],
    assigned: &'a [Option<i64>],
}

impl VarLookup for CellView<'_> {
    fn get(&self, var_idx: usize, _: &VarDecl, flat: usize) -> Option<i64> {
        self.assigned[self.offsets[var_idx] + flat]
    }
}

enum Flow {
    Continue,
    Stop,
}

pub fn solve(model: &MiniModel, extra: &[Expr], opts: &SolveOptions) -> Result<SearchResult, MiniCpError> {
    if !(opts.budget_secs > 0.0) {
        return Err(MiniCpError::Budget(opts.budget_secs));
    }
    if let SolveMode::EnumerateUpTo(0) = opts.mode {
        return Err(MiniCpError::Model("enumeration limit must be at least 1".into()));
    }
    let started = Instant::now();
    for e in extra {
        model.check_bound(e)?;
    }

    let mut offsets = Vec::with_capacity(model.vars.len());
    let mut total = 0;
    for v in &model.vars {
        offsets.push(total);
        total += v.len();
    }
    let mut lo = Vec::with_capacity(total);
    let mut alive = Vec::with_capacity(total);
    for v in &model.vars {
        for _ in 0..v.len() {
            lo.push(v.domain.0);
            alive.push(vec![true; (v.domain.1 - v.domain.0 + 1) as usize]);
        }
    }
    let size = alive.iter().map(|a| a.len()).collect();

    let mut rank: Vec<usize> = (0..total).collect();
    if opts.seed != 0 {
        rank.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    }

    let mut s = Search {
        ev: Evaluator::new(model),
        offsets,
        lo,
        alive,
        size,
        assigned: vec![None; total],
        grounds: Vec::new(),
        alldiffs: Vec::new(),
        watch: vec![Vec::new(); total],
        alldiff_watch: vec![Vec::new(); total],
        remaining: Vec::new(),
        trail: Vec::new(),
        rank,
        solutions: Vec::new(),
        limit: match opts.mode {
            SolveMode::FirstSat => 1,
            SolveMode::EnumerateUpTo(n) => n,
        },
        nodes: 0,
        started,
        opts: opts.clone(),
        timed_out: false,
        fault: RefCell::new(None),
    };

    let mut consistent = true;
    for c in model.constraints.iter().chain(extra) {
        if !s.decompose(c, &mut Vec::new())? {
            consistent = false;
            break;
        }
    }
    let mut exhausted = true;
    if consistent {
        s.index_constraints();
        if s.root_prune() {
            exhausted = matches!(s.dfs(), Flow::Continue) && !s.timed_out;
        }
    }
    if let Some(e) = s.fault.take() {
        return Err(e);
    }
    if s.solutions.len() >= s.limit {
        // stopped at the limit; only exhausted if nothing else exists, which
        // the search did not establish
        exhausted = false;
    }

    let elapsed = s.elapsed();
    if s.opts.mode == SolveMode::FirstSat && elapsed > s.opts.budget_secs {
        // finished, but not within the budget
        s.solutions.clear();
        s.timed_out = true;
        exhausted = false;
    }
    let status = if !s.solutions.is_empty() {
        SearchStatus::Sat
    } else if s.timed_out {
        SearchStatus::Timeout
    } else {
        SearchStatus::Unsat
    };
    Ok(SearchResult { status, solutions: s.solutions, elapsed, nodes: s.nodes, exhausted })
}

impl<'m> Search<'m> {
    fn elapsed(&self) -> f64 {
        match self.opts.clock {
            Clock::Wall => self.started.elapsed().as_secs_f64(),
            Clock::Effort { seconds_per_node } => self.nodes.max(1) as f64 * seconds_per_node,
        }
    }

    fn over_budget(&mut self) -> bool {
        let check = match self.opts.clock {
            Clock::Wall => self.nodes % 64 == 1,
            Clock::Effort { .. } => true,
        };
        if check && self.elapsed() > self.opts.budget_secs {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Split top-level conjunctions and `forall`s. Returns `Ok(false)` when a
    /// variable-free part is already false.
    fn decompose(&mut self, e: &Expr, locals: &mut Vec<(String, i64)>) -> Result<bool, MiniCpError> {
        match e {
            Expr::Bool(true) => Ok(true),
            Expr::Binary(BinOp::And, l, r) => Ok(self.decompose(l, locals)? && self.decompose(r, locals)?),
            Expr::Aggregate(Aggregate::Forall, gens, body) if !filters_mention_vars(self, gens, locals) => {
                let mut ok = true;
                let mut err = None;
                let ev = Evaluator::new(self.ev.model);
                let mut bindings = Vec::new();
                ev.for_each_binding(gens, 0, &NoVars, locals, &mut |_, l| {
                    bindings.push(l.clone());
                    Ok(true)
                })
                .map_err(var_dependent_range)?;
                for mut b in bindings {
                    match self.decompose(body, &mut b) {
                        Ok(true) => {}
                        Ok(false) => {
                            ok = false;
                            break;
                        }
                        Err(e) => {
                            err = Some(e);
                            break;
                        }
                    }
                }
                match err {
                    Some(e) => Err(e),
                    None => Ok(ok),
                }
            }
            Expr::Call(Builtin::AllDifferent, args) => {
                let CallArg::Array(arr) = &args[0] else { unreachable!() };
                if let Some(cells) = self.plain_cells(arr, locals)? {
                    let mut sorted = cells.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != cells.len() {
                        return Ok(false);
                    }
                    if cells.len() > 1 {
                        self.alldiffs.push(cells);
                    }
                    return Ok(true);
                }
                self.general(e, locals)
            }
            _ => self.general(e, locals),
        }
    }

    fn general(&mut self, e: &Expr, locals: &mut Vec<(String, i64)>) -> Result<bool, MiniCpError> {
        let mut cells = Vec::new();
        self.collect_cells(e, locals, &mut cells)?;
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            let view = CellView { offsets: &self.offsets, assigned: &self.assigned };
            return self.ev.eval_bool_in(e, &view, locals);
        }
        self.grounds.push(Ground { expr: e.clone(), locals: locals.clone(), cells });
        Ok(true)
    }

    /// Cells of an array argument when every element is a variable
    /// reference with parameter-only indices.
    fn plain_cells(
        &self,
        arr: &ArrayExpr,
        locals: &mut Vec<(String, i64)>,
    ) -> Result<Option<Vec<usize>>, MiniCpError> {
        let model = self.ev.model;
        let cell_of = |e: &Expr, locals: &mut Vec<(String, i64)>| -> Option<usize> {
            let (name, idx) = match e {
                Expr::Index(n, idx) => (n, idx.as_slice()),
                Expr::Ident(n) => (n, &[][..]),
                _ => return None,
            };
            let vi = model.var_index(name)?;
            let mut at = Vec::new();
            for i in idx {
                at.push(self.ev.eval_int_in(i, &NoVars, locals).ok()?);
            }
            model.vars[vi].flat_index(&at).map(|f| self.offsets[vi] + f)
        };
        match arr {
            ArrayExpr::Literal(items) => Ok(items.iter().map(|e| cell_of(e, locals)).collect()),
            ArrayExpr::Comprehension(body, gens) => {
                if filters_mention_vars(self, gens, locals) {
                    return Ok(None);
                }
                let mut bindings = Vec::new();
                self.ev
                    .for_each_binding(gens, 0, &NoVars, locals, &mut |_, l| {
                        bindings.push(l.clone());
                        Ok(true)
                    })
                    .map_err(var_dependent_range)?;
                Ok(bindings.iter_mut().map(|b| cell_of(body, b)).collect())
            }
            ArrayExpr::Whole(n) => Ok(model.var_index(n).map(|vi| {
                (0..model.vars[vi].len()).map(|f| self.offsets[vi] + f).collect()
            })),
        }
    }

    /// Over-approximate the cells an expression can read.
    fn collect_cells(
        &self,
        e: &Expr,
        locals: &mut Vec<(String, i64)>,
        out: &mut Vec<usize>,
    ) -> Result<(), MiniCpError> {
        let model = self.ev.model;
        match e {
            Expr::Int(_) | Expr::Bool(_) => {}
            Expr::Ident(n) => {
                if locals.iter().any(|(k, _)| k == n) {
                    return Ok(());
                }
                if let Some(vi) = model.var_index(n) {
                    out.push(self.offsets[vi]);
                }
            }
            Expr::Index(n, idx) => {
                for i in idx {
                    self.collect_cells(i, locals, out)?;
                }
                if let Some(vi) = model.var_index(n) {
                    let mut at = Vec::new();
                    let mut dynamic = false;
                    for i in idx {
                        match self.ev.eval_int_in(i, &NoVars, locals) {
                            Ok(v) => at.push(v),
                            Err(_) => dynamic = true,
                        }
                    }
                    let decl = &model.vars[vi];
                    if dynamic {
                        out.extend((0..decl.len()).map(|f| self.offsets[vi] + f));
                    } else if let Some(f) = decl.flat_index(&at) {
                        out.push(self.offsets[vi] + f);
                    }
                }
            }
            Expr::Unary(_, inner) => self.collect_cells(inner, locals, out)?,
            Expr::Binary(_, l, r) => {
                self.collect_cells(l, locals, out)?;
                self.collect_cells(r, locals, out)?;
            }
            Expr::Call(_, args) => {
                for a in args {
                    match a {
                        CallArg::Scalar(e) => self.collect_cells(e, locals, out)?,
                        CallArg::Array(ArrayExpr::Literal(items)) => {
                            for it in items {
                                self.collect_cells(it, locals, out)?;
                            }
                        }
                        CallArg::Array(ArrayExpr::Comprehension(body, gens)) => {
                            self.collect_in_generators(gens, 0, body, locals, out)?
                        }
                        CallArg::Array(ArrayExpr::Whole(n)) => {
                            if let Some(vi) = model.var_index(n) {
                                out.extend((0..model.vars[vi].len()).map(|f| self.offsets[vi] + f));
                            }
                        }
                    }
                }
            }
            Expr::Aggregate(_, gens, body) => self.collect_in_generators(gens, 0, body, locals, out)?,
        }
        Ok(())
    }

    /// Walk every binding of `gens` ignoring `where` filters (they only
    /// shrink the set), collecting cells from filters and body.
    fn collect_in_generators(
        &self,
        gens: &[Generator],
        gi: usize,
        body: &Expr,
        locals: &mut Vec<(String, i64)>,
        out: &mut Vec<usize>,
    ) -> Result<(), MiniCpError> {
        if gi == gens.len() {
            return self.collect_cells(body, locals, out);
        }
        let g = &gens[gi];
        let (lo, hi) = self.ev.set_bounds(&g.set, &NoVars, locals).map_err(var_dependent_range)?;
        let base = locals.len();
        let k = g.vars.len();
        if lo > hi {
            return Ok(());
        }
        let mut cur = vec![lo; k];
        loop {
            locals.truncate(base);
            locals.extend(g.vars.iter().cloned().zip(cur.iter().copied()));
            if let Some(w) = &g.filter {
                self.collect_cells(w, locals, out)?;
            }
            self.collect_in_generators(gens, gi + 1, body, locals, out)?;
            let mut d = k;
            loop {
                if d == 0 {
                    locals.truncate(base);
                    return Ok(());
                }
                d -= 1;
                if cur[d] < hi {
                    cur[d] += 1;
                    cur.iter_mut().skip(d + 1).for_each(|c| *c = lo);
                    break;
                }
            }
        }
    }

    fn index_constraints(&mut self) {
        for (gi, g) in self.grounds.iter().enumerate() {
            for &c in &g.cells {
                self.watch[c].push(gi);
            }
        }
        self.remaining = self.grounds.iter().map(|g| g.cells.len()).collect();
        for (ai, group) in self.alldiffs.iter().enumerate() {
            for &c in group {
                self.alldiff_watch[c].push(ai);
            }
        }
    }

    fn check(&self, gi: usize) -> bool {
        let g = &self.grounds[gi];
        let view = CellView { offsets: &self.offsets, assigned: &self.assigned };
        let mut locals = g.locals.clone();
        match self.ev.eval_bool_in(&g.expr, &view, &mut locals) {
            Ok(b) => b,
            Err(e @ MiniCpError::Type(_)) => {
                self.fault.borrow_mut().get_or_insert(e);
                false
            }
            Err(_) => false,
        }
    }

    /// Filter domains by single-cell constraints.
    fn root_prune(&mut self) -> bool {
        for gi in 0..self.grounds.len() {
            if self.grounds[gi].cells.len() != 1 {
                continue;
            }
            let c = self.grounds[gi].cells[0];
            for vi in 0..self.alive[c].len() {
                if !self.alive[c][vi] {
                    continue;
                }
                self.assigned[c] = Some(self.lo[c] + vi as i64);
                if !self.check(gi) {
                    self.alive[c][vi] = false;
                    self.size[c] -= 1;
                }
            }
            self.assigned[c] = None;
            if self.size[c] == 0 {
                return false;
            }
        }
        true
    }

    fn remove(&mut self, cell: usize, vi: usize) {
        if self.alive[cell][vi] {
            self.alive[cell][vi] = false;
            self.size[cell] -= 1;
            self.trail.push((cell, vi));
        }
    }

    fn propagate(&mut self, cell: usize, value: i64) -> bool {
        for i in 0..self.watch[cell].len() {
            let gi = self.watch[cell][i];
            self.remaining[gi] -= 1;
        }
        for i in 0..self.watch[cell].len() {
            let gi = self.watch[cell][i];
            match self.remaining[gi] {
                0 => {
                    if !self.check(gi) {
                        return false;
                    }
                }
                1 if self.grounds[gi].cells.len() == 2 => {
                    let other = self.grounds[gi]
                        .cells
                        .iter()
                        .copied()
                        .find(|&c| self.assigned[c].is_none())
                        .expect("one cell unassigned");
                    for vi in 0..self.alive[other].len() {
                        if !self.alive[other][vi] {
                            continue;
                        }
                        self.assigned[other] = Some(self.lo[other] + vi as i64);
                        let ok = self.check(gi);
                        self.assigned[other] = None;
                        if !ok {
                            self.remove(other, vi);
                        }
                    }
                    if self.size[other] == 0 {
                        return false;
                    }
                }
                _ => {}
            }
        }
        for i in 0..self.alldiff_watch[cell].len() {
            let ai = self.alldiff_watch[cell][i];
            for j in 0..self.alldiffs[ai].len() {
                let other = self.alldiffs[ai][j];
                if other == cell || self.assigned[other].is_some() {
                    continue;
                }
                let off = value - self.lo[other];
                if off >= 0 && (off as usize) < self.alive[other].len() {
                    self.remove(other, off as usize);
                    if self.size[other] == 0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn undo(&mut self, cell: usize, mark: usize) {
        for i in 0..self.watch[cell].len() {
            let gi = self.watch[cell][i];
            self.remaining[gi] += 1;
        }
        while self.trail.len() > mark {
            let (c, vi) = self.trail.pop().expect("trail entry");
            self.alive[c][vi] = true;
            self.size[c] += 1;
        }
        self.assigned[cell] = None;
    }

    fn select(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for c in 0..self.assigned.len() {
            if self.assigned[c].is_some() {
                continue;
            }
            best = match best {
                None => Some(c),
                Some(b) => {
                    let better = self.size[c] < self.size[b]
                        || (self.size[c] == self.size[b] && self.rank[c] < self.rank[b]);
                    Some(if better { c } else { b })
                }
            };
        }
        best
    }

    fn dfs(&mut self) -> Flow {
        if self.fault.borrow().is_some() {
            return Flow::Stop;
        }
        let Some(cell) = self.select() else {
            let model = self.ev.model;
            let sol = model
                .vars
                .iter()
                .enumerate()
                .map(|(vi, v)| {
                    (0..v.len())
                        .map(|f| self.assigned[self.offsets[vi] + f].expect("complete"))
                        .collect()
                })
                .collect();
            self.solutions.push(sol);
            return if self.solutions.len() >= self.limit { Flow::Stop } else { Flow::Continue };
        };
        for vi in 0..self.alive[cell].len() {
            if !self.alive[cell][vi] {
                continue;
            }
            self.nodes += 1;
            if self.over_budget() {
                return Flow::Stop;
            }
            let mark = self.trail.len();
            let value = self.lo[cell] + vi as i64;
            self.assigned[cell] = Some(value);
            if self.propagate(cell, value) {
                if let Flow::Stop = self.dfs() {
                    self.undo(cell, mark);
                    return Flow::Stop;
                }
            }
            self.undo(cell, mark);
        }
        Flow::Continue
    }
}

fn filters_mention_vars(s: &Search<'_>, gens: &[Generator], locals: &[(String, i64)]) -> bool {
    let mut scope: Vec<(String, i64)> = locals.to_vec();
    for g in gens {
        scope.extend(g.vars.iter().map(|v| (v.clone(), 0)));
        if let Some(w) = &g.filter {
            if mentions_var(s.ev.model, w, &scope) {
                return true;
            }
        }
    }
    false
}

fn mentions_var(model: &MiniModel, e: &Expr, scope: &[(String, i64)]) -> bool {
    match e {
        Expr::Int(_) | Expr::Bool(_) => false,
        Expr::Ident(n) => !scope.iter().any(|(k, _)| k == n) && model.var_index(n).is_some(),
        Expr::Index(n, idx) => {
            model.var_index(n).is_some() || idx.iter().any(|i| mentions_var(model, i, scope))
        }
        Expr::Unary(_, i) => mentions_var(model, i, scope),
        Expr::Binary(_, l, r) => mentions_var(model, l, scope) || mentions_var(model, r, scope),
        Expr::Call(_, args) => args.iter().any(|a| match a {
            CallArg::Scalar(e) => mentions_var(model, e, scope),
            CallArg::Array(ArrayExpr::Whole(n)) => model.var_index(n).is_some(),
            CallArg::Array(ArrayExpr::Literal(items)) => items.iter().any(|i| mentions_var(model, i, scope)),
            CallArg::Array(ArrayExpr::Comprehension(b, gens)) => {
                let mut inner = scope.to_vec();
                for g in gens {
                    inner.extend(g.vars.iter().map(|v| (v.clone(), 0)));
                }
                mentions_var(model, b, &inner)
                    || gens.iter().any(|g| g.filter.as_ref().is_some_and(|w| mentions_var(model, w, &inner)))
            }
        }),
        Expr::Aggregate(_, gens, body) => {
            let mut inner = scope.to_vec();
            for g in gens {
                inner.extend(g.vars.iter().map(|v| (v.clone(), 0)));
            }
            mentions_var(model, body, &inner)
                || gens.iter().any(|g| g.filter.as_ref().is_some_and(|w| mentions_var(model, w, &inner)))
        }
    }
}

fn var_dependent_range(e: MiniCpError) -> MiniCpError {
    match e {
        MiniCpError::Unassigned(what) => {
            MiniCpError::Model(format!("generator range depends on decision variable {what}"))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::super::model::ModelFile;
    use super::*;
    use std::collections::BTreeMap;

    fn model(text: &str) -> MiniModel {
        ModelFile::from_toml_str(text).unwrap().instantiate(&BTreeMap::new()).unwrap()
    }

    fn queens(n: i64) -> MiniModel {
        model(&format!(
            r#"
constraints = ['forall(i, j in 1..n where i < j)(q[i] != q[j] /\ q[i] + i != q[j] + j /\ q[i] - i != q[j] - j)']
[params]
n = {n}
[[var]]
name = "q"
shape = ["1..n"]
domain = "1..n"
"#
        ))
    }

    #[test]
    fn queens_counts() {
        for (n, expect) in [(4, 2), (5, 10), (6, 4)] {
            let r = solve(&queens(n), &[], &SolveOptions::enumerate(1000, 30.0)).unwrap();
            assert_eq!(r.solutions.len(), expect, "n={n}");
            assert!(r.exhausted);
        }
    }

    #[test]
    fn type_errors_surface_instead_of_pruning() {
        let m = model("constraints = ['not b[1]']\n[[var]]\nname = \"b\"\nshape = [\"1..2\"]\ndomain = \"0..1\"");
        assert!(matches!(solve(&m, &[], &SolveOptions::first_sat(5.0)), Err(MiniCpError::Type(_))));
        let m = model("constraints = ['not b[1]']\n[[var]]\nname = \"b\"\nshape = [\"1..2\"]\ndomain = \"bool\"");
        assert_eq!(solve(&m, &[], &SolveOptions::enumerate(10, 5.0)).unwrap().solutions.len(), 2);
    }

    #[test]
    fn contradiction_is_unsat() {
        let m = queens(4);
        let extra = vec![m.parse_constraint("1 = 2").unwrap()];
        let r = solve(&m, &extra, &SolveOptions::first_sat(5.0)).unwrap();
        assert_eq!(r.status, SearchStatus::Unsat);
        assert!(r.exhausted);
    }

    #[test]
    fn first_sat_is_lexicographically_smallest_for_queens() {
        let r = solve(&queens(4), &[], &SolveOptions::first_sat(5.0)).unwrap();
        assert_eq!(r.status, SearchStatus::Sat);
        assert_eq!(r.solutions[0], vec![vec![2, 4, 1, 3]]);
    }

    #[test]
    fn bad_budget() {
        assert!(matches!(
            solve(&queens(4), &[], &SolveOptions::first_sat(0.0)),
            Err(MiniCpError::Budget(_))
        ));
    }

    #[test]
    fn effort_clock_times_out_deterministically() {
        let opts = SolveOptions {
            mode: SolveMode::EnumerateUpTo(1000),
            budget_secs: 0.005,
            seed: 0,
            clock: Clock::Effort { seconds_per_node: 0.001 },
        };
        let a = solve(&queens(6), &[], &opts).unwrap();
        let b = solve(&queens(6), &[], &opts).unwrap();
        assert_eq!(a.status, SearchStatus::Timeout);
        assert!(!a.exhausted);
        assert_eq!(a.nodes, b.nodes);
    }

    #[test]
    fn seeded_order_changes_nothing_but_order() {
        let m = queens(6);
        let mut opts = SolveOptions::enumerate(100, 30.0);
        opts.seed = 7;
        let mut a = solve(&m, &[], &opts).unwrap().solutions;
        let mut b = solve(&m, &[], &SolveOptions::enumerate(100, 30.0)).unwrap().solutions;
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
