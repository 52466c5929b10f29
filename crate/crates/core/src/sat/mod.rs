//! Propositional satisfiability: literals, clauses, a DPLL decision procedure
//! and greedy growing of satisfiable subsets.

mod dimacs;
mod dpll;

pub use dimacs::{parse_dimacs, write_dimacs, DimacsError};
pub use dpll::Solver;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Not;
use thiserror::Error;

/// A Boolean literal, packed as `var << 1 | negated`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: usize, positive: bool) -> Self {
        Lit(((var as u32) << 1) | (!positive) as u32)
    }

    pub fn pos(var: usize) -> Self {
        Self::new(var, true)
    }

    pub fn neg(var: usize) -> Self {
        Self::new(var, false)
    }

    pub fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    /// Dense index usable for per-literal tables.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var() as i64 + 1;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(code: i64) -> Option<Self> {
        if code == 0 {
            return None;
        }
        Some(Lit::new(code.unsigned_abs() as usize - 1, code > 0))
    }

    /// Truth value of this literal under a total assignment.
    pub fn holds(self, model: &[bool]) -> bool {
        model[self.var()] == self.is_positive()
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_positive() {
            write!(f, "x{}", self.var())
        } else {
            write!(f, "-x{}", self.var())
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClauseError {
    #[error("clause is empty")]
    Empty,
    #[error("literal {0:?} occurs twice")]
    Duplicate(Lit),
    #[error("clause contains both polarities of variable {0}")]
    Tautology(usize),
}

/// A disjunction of literals. Always non-empty, without repeated or
/// complementary literals.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Lit>", into = "Vec<Lit>")]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    pub fn new(lits: Vec<Lit>) -> Result<Self, ClauseError> {
        if lits.is_empty() {
            return Err(ClauseError::Empty);
        }
        let mut sorted = lits.clone();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(ClauseError::Duplicate(pair[0]));
            }
            if pair[0].var() == pair[1].var() {
                return Err(ClauseError::Tautology(pair[0].var()));
            }
        }
        Ok(Clause { lits })
    }

    pub fn unit(lit: Lit) -> Self {
        Clause { lits: vec![lit] }
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn satisfied_by(&self, model: &[bool]) -> bool {
        self.lits.iter().any(|l| l.holds(model))
    }

    pub fn max_var(&self) -> usize {
        self.lits.iter().map(|l| l.var()).max().unwrap_or(0)
    }
}

impl TryFrom<Vec<Lit>> for Clause {
    type Error = ClauseError;
    fn try_from(lits: Vec<Lit>) -> Result<Self, Self::Error> {
        Clause::new(lits)
    }
}

impl From<Clause> for Vec<Lit> {
    fn from(c: Clause) -> Self {
        c.lits
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Sat,
    Unsat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SatResult {
    pub status: Status,
    /// Total assignment indexed by variable; empty when unsatisfiable.
    pub model: Vec<bool>,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        self.status == Status::Sat
    }
}

/// Decides `clauses ∧ assumptions` with a fresh solver.
pub fn solve(clauses: &[Clause], assumptions: &[Lit]) -> SatResult {
    let num_vars = clauses
        .iter()
        .map(|c| c.max_var() + 1)
        .chain(assumptions.iter().map(|l| l.var() + 1))
        .max()
        .unwrap_or(0);
    let mut solver = Solver::new(num_vars);
    for c in clauses {
        solver.add_clause(c.clone());
    }
    solver.solve(assumptions)
}

/// Satisfiability queries over subsets of a fixed item universe.
pub trait SubsetOracle {
    /// Decides whether the conjunction of the given items (plus any
    /// background theory) is satisfiable.
    fn check(&mut self, items: &[usize]) -> SatResult;

    /// Whether `item` is satisfied by a total assignment of the background
    /// variables.
    fn holds_in(&self, item: usize, model: &[bool]) -> bool;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrowError {
    #[error("the seed subset is unsatisfiable")]
    UnsatSeed,
    #[error("item {0} is not part of the universe")]
    NotInUniverse(usize),
}

/// Extends `selected` to a maximal satisfiable subset of `universe`.
///
/// Items are tried in ascending id order and kept whenever the enlarged set
/// stays satisfiable. Items already satisfied by the running model are
/// accepted without another solver call; the outcome is the same as calling
/// the solver.
pub fn grow<O: SubsetOracle + ?Sized>(
    oracle: &mut O,
    selected: &[usize],
    universe: &[usize],
) -> Result<Vec<usize>, GrowError> {
    let mut current: Vec<usize> = selected.to_vec();
    current.sort_unstable();
    current.dedup();
    for item in &current {
        if !universe.contains(item) {
            return Err(GrowError::NotInUniverse(*item));
        }
    }
    let first = oracle.check(&current);
    if !first.is_sat() {
        return Err(GrowError::UnsatSeed);
    }
    let mut model = first.model;
    let mut order: Vec<usize> = universe.to_vec();
    order.sort_unstable();
    order.dedup();
    for item in order {
        if current.binary_search(&item).is_ok() {
            continue;
        }
        if oracle.holds_in(item, &model) {
            insert_sorted(&mut current, item);
            continue;
        }
        insert_sorted(&mut current, item);
        let res = oracle.check(&current);
        if res.is_sat() {
            model = res.model;
        } else {
            let pos = current.binary_search(&item).expect("just inserted");
            current.remove(pos);
        }
    }
    Ok(current)
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

/// Items given as plain clause sets over a shared background theory.
pub struct ClauseItems {
    solver: Solver,
    items: Vec<Vec<Clause>>,
    selectors: usize,
}

impl ClauseItems {
    pub fn new(base: &[Clause], items: Vec<Vec<Clause>>) -> Self {
        let num_vars = base
            .iter()
            .chain(items.iter().flatten())
            .map(|c| c.max_var() + 1)
            .max()
            .unwrap_or(0);
        let mut solver = Solver::new(num_vars + items.len());
        for c in base {
            solver.add_clause(c.clone());
        }
        for (i, clauses) in items.iter().enumerate() {
            let sel = Lit::pos(num_vars + i);
            for c in clauses {
                let mut lits = c.lits().to_vec();
                lits.push(!sel);
                solver.add_clause(Clause::new(lits).expect("selector is fresh"));
            }
        }
        ClauseItems {
            solver,
            items,
            selectors: num_vars,
        }
    }
}

impl SubsetOracle for ClauseItems {
    fn check(&mut self, items: &[usize]) -> SatResult {
        let assumptions: Vec<Lit> = (0..self.items.len())
            .map(|i| Lit::new(self.selectors + i, items.contains(&i)))
            .collect();
        self.solver.solve(&assumptions)
    }

    fn holds_in(&self, item: usize, model: &[bool]) -> bool {
        self.items[item].iter().all(|c| c.satisfied_by(model))
    }
}
