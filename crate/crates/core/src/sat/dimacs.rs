use super::{Clause, ClauseError, Lit};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DimacsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Clause { line: usize, source: ClauseError },
}

/// Parses DIMACS CNF. Returns the declared variable count and the clauses.
pub fn parse_dimacs(text: &str) -> Result<(usize, Vec<Clause>), DimacsError> {
    let mut num_vars = 0;
    let mut clauses = Vec::new();
    let mut pending: Vec<Lit> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(DimacsError::Syntax {
                    line: idx + 1,
                    msg: "expected `p cnf <vars> <clauses>`".into(),
                });
            }
            num_vars = parts[2].parse().map_err(|_| DimacsError::Syntax {
                line: idx + 1,
                msg: format!("bad variable count {:?}", parts[2]),
            })?;
            continue;
        }
        for tok in line.split_whitespace() {
            let code: i64 = tok.parse().map_err(|_| DimacsError::Syntax {
                line: idx + 1,
                msg: format!("bad literal {tok:?}"),
            })?;
            match Lit::from_dimacs(code) {
                Some(l) => pending.push(l),
                None => {
                    let lits = std::mem::take(&mut pending);
                    let clause = Clause::new(lits).map_err(|source| DimacsError::Clause {
                        line: idx + 1,
                        source,
                    })?;
                    num_vars = num_vars.max(clause.max_var() + 1);
                    clauses.push(clause);
                }
            }
        }
    }
    if !pending.is_empty() {
        return Err(DimacsError::Syntax {
            line: text.lines().count(),
            msg: "unterminated clause".into(),
        });
    }
    Ok((num_vars, clauses))
}

pub fn write_dimacs(num_vars: usize, clauses: &[Clause]) -> String {
    let mut out = format!("p cnf {} {}\n", num_vars, clauses.len());
    for c in clauses {
        for l in c.lits() {
            let _ = write!(out, "{} ", l.to_dimacs());
        }
        out.push_str("0\n");
    }
    out
}
