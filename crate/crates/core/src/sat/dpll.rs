use super::{Clause, Lit, SatResult, Status};

const UNASSIGNED: i8 = 0;
const TRUE: i8 = 1;
const FALSE: i8 = -1;

#[derive(Clone, Copy, Debug)]
struct Decision {
    trail_len: usize,
    var: usize,
    flipped: bool,
}

/// Chronological-backtracking DPLL with two watched literals per clause.
///
/// Variables are branched on in ascending order, positive phase first, so a
/// given clause database and assumption list always yields the same model.
/// The clause database persists across calls to [`Solver::solve`]; search
/// state is reset on every call.
#[derive(Clone, Debug)]
pub struct Solver {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    units: Vec<Lit>,
    /// watches[lit] lists clauses currently watching `lit`.
    watches: Vec<Vec<usize>>,
    values: Vec<i8>,
    trail: Vec<Lit>,
    qhead: usize,
}

impl Solver {
    pub fn new(num_vars: usize) -> Self {
        Solver {
            num_vars,
            clauses: Vec::new(),
            units: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            values: vec![UNASSIGNED; num_vars],
            trail: Vec::with_capacity(num_vars),
            qhead: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len() + self.units.len()
    }

    fn ensure_vars(&mut self, n: usize) {
        if n > self.num_vars {
            self.num_vars = n;
            self.watches.resize(2 * n, Vec::new());
            self.values.resize(n, UNASSIGNED);
        }
    }

    pub fn add_clause(&mut self, clause: Clause) {
        self.ensure_vars(clause.max_var() + 1);
        let lits: Vec<Lit> = clause.into();
        if lits.len() == 1 {
            self.units.push(lits[0]);
            return;
        }
        let id = self.clauses.len();
        self.watches[lits[0].index()].push(id);
        self.watches[lits[1].index()].push(id);
        self.clauses.push(lits);
    }

    #[inline]
    fn value(&self, lit: Lit) -> i8 {
        let v = self.values[lit.var()];
        if lit.is_positive() {
            v
        } else {
            -v
        }
    }

    #[inline]
    fn assign(&mut self, lit: Lit) {
        self.values[lit.var()] = if lit.is_positive() { TRUE } else { FALSE };
        self.trail.push(lit);
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let lit = self.trail.pop().expect("trail longer than len");
            self.values[lit.var()] = UNASSIGNED;
        }
        self.qhead = self.qhead.min(len);
    }

    /// Assigns `lit` unless already true. Returns false on a direct conflict.
    fn enqueue(&mut self, lit: Lit) -> bool {
        match self.value(lit) {
            TRUE => true,
            FALSE => false,
            _ => {
                self.assign(lit);
                true
            }
        }
    }

    /// Unit propagation. Returns false on conflict.
    fn propagate(&mut self) -> bool {
        while self.qhead < self.trail.len() {
            let falsified = !self.trail[self.qhead];
            self.qhead += 1;
            let mut watchers = std::mem::take(&mut self.watches[falsified.index()]);
            let mut i = 0;
            let mut conflict = false;
            while i < watchers.len() {
                let cid = watchers[i];
                let clause = &mut self.clauses[cid];
                if clause[0] == falsified {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                let first_val = {
                    let v = self.values[first.var()];
                    if first.is_positive() {
                        v
                    } else {
                        -v
                    }
                };
                if first_val == TRUE {
                    i += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    let cand = clause[k];
                    let v = self.values[cand.var()];
                    let cv = if cand.is_positive() { v } else { -v };
                    if cv != FALSE {
                        clause.swap(1, k);
                        self.watches[cand.index()].push(cid);
                        watchers.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                if first_val == FALSE {
                    conflict = true;
                    break;
                }
                self.assign(first);
                i += 1;
            }
            self.watches[falsified.index()] = watchers;
            if conflict {
                return false;
            }
        }
        true
    }

    fn reset(&mut self) {
        for v in self.values.iter_mut() {
            *v = UNASSIGNED;
        }
        self.trail.clear();
        self.qhead = 0;
    }

    /// Decides the clause database under `assumptions`.
    pub fn solve(&mut self, assumptions: &[Lit]) -> SatResult {
        if let Some(max) = assumptions.iter().map(|l| l.var() + 1).max() {
            self.ensure_vars(max);
        }
        self.reset();
        let unsat = SatResult {
            status: Status::Unsat,
            model: Vec::new(),
        };
        for i in 0..self.units.len() {
            let u = self.units[i];
            if !self.enqueue(u) {
                return unsat;
            }
        }
        for &a in assumptions {
            if !self.enqueue(a) {
                return unsat;
            }
        }
        if !self.propagate() {
            return unsat;
        }

        let mut decisions: Vec<Decision> = Vec::new();
        let mut next_var = 0usize;
        loop {
            while next_var < self.num_vars && self.values[next_var] != UNASSIGNED {
                next_var += 1;
            }
            if next_var == self.num_vars {
                let model = self.values.iter().map(|&v| v == TRUE).collect();
                return SatResult {
                    status: Status::Sat,
                    model,
                };
            }
            decisions.push(Decision {
                trail_len: self.trail.len(),
                var: next_var,
                flipped: false,
            });
            self.assign(Lit::pos(next_var));
            let mut ok = self.propagate();
            while !ok {
                let Some(mut d) = decisions.pop() else {
                    return unsat;
                };
                self.undo_to(d.trail_len);
                next_var = next_var.min(d.var);
                if d.flipped {
                    continue;
                }
                d.flipped = true;
                decisions.push(d);
                self.assign(Lit::neg(d.var));
                ok = self.propagate();
            }
        }
    }
}
