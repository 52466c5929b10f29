//! Puzzles as clausal CSPs: Boolean variables with puzzle coordinates,
//! clauses grouped into named constraint groups, and facts over decision
//! variables.

mod logic_grid;
mod sudoku;

pub use logic_grid::{load_logic_grid, parse_logic_grid};
pub use sudoku::{load_sudoku, parse_sudoku_grid, sudoku_csp};

use crate::sat::{Clause, Lit, SatResult, Solver};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("puzzle has no solution")]
    Unsatisfiable,
    #[error("puzzle has more than one solution")]
    MultipleSolutions,
    #[error("given facts are inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuzzleKind {
    Sudoku { n: usize },
    LogicGrid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarMeta {
    /// `cell[row, col] = value`, all 1-based.
    Cell { row: usize, col: usize, value: usize },
    /// Entities `left` and `right` (of different types) are associated.
    Assoc { left: String, right: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolVar {
    pub id: usize,
    pub meta: VarMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Row,
    Col,
    Block,
    Bijectivity,
    Transitivity,
    Clue,
}

impl Category {
    pub fn parse(tag: &str) -> Option<Category> {
        Some(match tag.to_ascii_lowercase().as_str() {
            "row" => Category::Row,
            "col" | "column" => Category::Col,
            "block" => Category::Block,
            "bijectivity" => Category::Bijectivity,
            "transitivity" => Category::Transitivity,
            "clue" => Category::Clue,
            _ => return None,
        })
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Row => "row",
            Category::Col => "col",
            Category::Block => "block",
            Category::Bijectivity => "bijectivity",
            Category::Transitivity => "transitivity",
            Category::Clue => "clue",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintGroup {
    pub id: usize,
    pub name: String,
    pub category: Category,
    /// Boolean variables mentioned by the clauses, sorted.
    pub scope: Vec<usize>,
    /// Decision variables owning those Boolean variables, sorted.
    pub decision_scope: Vec<usize>,
    pub clauses: Vec<Clause>,
}

/// A puzzle-level variable: a Sudoku cell or a logic-grid association.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVar {
    pub name: String,
    /// `(value, literal asserting var = value)` for each domain value.
    pub domain: Vec<(i64, Lit)>,
}

/// `x = v` for a decision variable `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub var: usize,
    pub value: i64,
    pub lit: Lit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClausalCsp {
    pub kind: PuzzleKind,
    pub vars: Vec<BoolVar>,
    /// Decision variable owning each Boolean variable.
    pub var_owner: Vec<usize>,
    pub decision_vars: Vec<DecisionVar>,
    /// Clauses that are always active and never part of an explanation
    /// (the per-cell exactly-one constraints of Sudoku).
    pub base: Vec<Clause>,
    pub groups: Vec<ConstraintGroup>,
}

impl ClausalCsp {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn fact(&self, var: usize, value: i64) -> Option<Fact> {
        self.decision_vars
            .get(var)?
            .domain
            .iter()
            .find(|(v, _)| *v == value)
            .map(|&(value, lit)| Fact { var, value, lit })
    }

    /// Value of decision variable `var` under a total Boolean assignment.
    pub fn value_in(&self, var: usize, model: &[bool]) -> Option<i64> {
        self.decision_vars[var]
            .domain
            .iter()
            .find(|(_, lit)| lit.holds(model))
            .map(|(v, _)| *v)
    }

    pub fn fact_in(&self, var: usize, model: &[bool]) -> Option<Fact> {
        self.value_in(var, model).and_then(|v| self.fact(var, v))
    }

    pub fn num_group_clauses(&self) -> usize {
        self.groups.iter().map(|g| g.clauses.len()).sum()
    }

    pub fn describe_fact(&self, fact: &Fact) -> String {
        match (&self.kind, &self.vars[fact.lit.var()].meta) {
            (PuzzleKind::Sudoku { .. }, VarMeta::Cell { row, col, .. }) => {
                format!("cell[{row},{col}] = {}", fact.value)
            }
            (_, VarMeta::Assoc { left, right }) => {
                let sign = if fact.value == 1 { "" } else { "-" };
                format!("{sign}assoc({left},{right})")
            }
            _ => format!("x{} = {}", fact.var, fact.value),
        }
    }

    /// Decision variables sharing at least one constraint group with `var`.
    pub fn neighbours(&self, var: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .groups
            .iter()
            .filter(|g| g.decision_scope.binary_search(&var).is_ok())
            .flat_map(|g| g.decision_scope.iter().copied())
            .filter(|&d| d != var)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn finish_group(&self, id: usize, name: String, category: Category, clauses: Vec<Clause>) -> ConstraintGroup {
        let mut scope: Vec<usize> = clauses.iter().flat_map(|c| c.lits().iter().map(|l| l.var())).collect();
        scope.sort_unstable();
        scope.dedup();
        let mut decision_scope: Vec<usize> = scope.iter().map(|&v| self.var_owner[v]).collect();
        decision_scope.sort_unstable();
        decision_scope.dedup();
        ConstraintGroup {
            id,
            name,
            category,
            scope,
            decision_scope,
            clauses,
        }
    }
}

/// A solver over a CSP where each constraint group can be switched on or off
/// per call through a selector variable.
#[derive(Clone, Debug)]
pub struct GroupSolver {
    solver: Solver,
    num_vars: usize,
    num_groups: usize,
}

impl GroupSolver {
    pub fn new(csp: &ClausalCsp) -> Self {
        let num_vars = csp.num_vars();
        let mut solver = Solver::new(num_vars + csp.groups.len());
        for c in &csp.base {
            solver.add_clause(c.clone());
        }
        for g in &csp.groups {
            let sel = Lit::pos(num_vars + g.id);
            for c in &g.clauses {
                let mut lits = c.lits().to_vec();
                lits.push(!sel);
                solver.add_clause(Clause::new(lits).expect("selector variable is fresh"));
            }
        }
        GroupSolver {
            solver,
            num_vars,
            num_groups: csp.groups.len(),
        }
    }

    /// Decides base ∧ active groups ∧ assumptions. The returned model is
    /// restricted to the CSP's own variables.
    pub fn check(&mut self, assumptions: &[Lit], active: impl Fn(usize) -> bool) -> SatResult {
        let mut lits: Vec<Lit> = (0..self.num_groups)
            .map(|g| Lit::new(self.num_vars + g, active(g)))
            .collect();
        lits.extend_from_slice(assumptions);
        let mut r = self.solver.solve(&lits);
        r.model.truncate(self.num_vars);
        r
    }

    pub fn check_all(&mut self, assumptions: &[Lit]) -> SatResult {
        self.check(assumptions, |_| true)
    }
}

/// A puzzle state: a CSP, the facts already known and the facts still to
/// explain.
#[derive(Clone, Debug)]
pub struct Instance {
    pub csp: Arc<ClausalCsp>,
    pub given: Vec<Fact>,
    pub targets: Vec<Fact>,
}

impl Instance {
    /// Moves `fact` from the targets to the given facts.
    pub fn reveal(&mut self, fact: Fact) {
        self.targets.retain(|f| *f != fact);
        if let Err(pos) = self.given.binary_search(&fact) {
            self.given.insert(pos, fact);
        }
    }

    pub fn revealed(&self, fact: Fact) -> Instance {
        let mut next = self.clone();
        next.reveal(fact);
        next
    }
}

fn check_given(csp: &ClausalCsp, given: &[Fact]) -> Result<(), ModelError> {
    for pair in given.windows(2) {
        if pair[0].var == pair[1].var {
            return Err(ModelError::Inconsistent(format!(
                "{} and {}",
                csp.describe_fact(&pair[0]),
                csp.describe_fact(&pair[1])
            )));
        }
    }
    Ok(())
}

/// Every fact outside `given` that holds in all solutions extending `given`.
///
/// One model is computed first; only its values can be implied, and each is
/// confirmed by refuting its negation.
pub fn explainable_facts(csp: &ClausalCsp, given: &[Fact]) -> Result<Vec<Fact>, ModelError> {
    let mut given = given.to_vec();
    given.sort_unstable();
    check_given(csp, &given)?;
    let mut solver = GroupSolver::new(csp);
    let assumptions: Vec<Lit> = given.iter().map(|f| f.lit).collect();
    let first = solver.check_all(&assumptions);
    if !first.is_sat() {
        return Err(ModelError::Unsatisfiable);
    }
    let mut out = Vec::new();
    for var in 0..csp.decision_vars.len() {
        if given.iter().any(|f| f.var == var) {
            continue;
        }
        let Some(fact) = csp.fact_in(var, &first.model) else {
            continue;
        };
        let mut a = assumptions.clone();
        a.push(!fact.lit);
        if !solver.check_all(&a).is_sat() {
            out.push(fact);
        }
    }
    Ok(out)
}

/// Builds the instance for `given`, insisting on a unique solution.
pub fn unique_instance(csp: Arc<ClausalCsp>, given: Vec<Fact>) -> Result<Instance, ModelError> {
    let mut given = given;
    given.sort_unstable();
    check_given(&csp, &given)?;
    let mut solver = GroupSolver::new(&csp);
    let assumptions: Vec<Lit> = given.iter().map(|f| f.lit).collect();
    let first = solver.check_all(&assumptions);
    if !first.is_sat() {
        return Err(ModelError::Unsatisfiable);
    }
    let solution: Vec<Fact> = (0..csp.decision_vars.len())
        .map(|v| csp.fact_in(v, &first.model).expect("model assigns every decision variable"))
        .collect();
    // a second solution must differ on some decision variable
    let blocking = Clause::new(solution.iter().map(|f| !f.lit).collect())
        .expect("one literal per decision variable");
    let mut check = Solver::new(csp.num_vars());
    for c in csp.base.iter().chain(csp.groups.iter().flat_map(|g| g.clauses.iter())) {
        check.add_clause(c.clone());
    }
    check.add_clause(blocking);
    if check.solve(&assumptions).is_sat() {
        return Err(ModelError::MultipleSolutions);
    }
    let targets = solution
        .into_iter()
        .filter(|f| given.binary_search(f).is_err())
        .collect();
    Ok(Instance { csp, given, targets })
}
