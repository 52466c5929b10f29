use super::{unique_instance, BoolVar, Category, ClausalCsp, DecisionVar, Instance, ModelError, PuzzleKind, VarMeta};
use crate::sat::{Clause, Lit};
use std::sync::Arc;

/// Boolean variable for `cell[row, col] = value` (0-based row/col, 1-based value).
pub(crate) fn cell_var(n: usize, row: usize, col: usize, value: usize) -> usize {
    (row * n + col) * n + (value - 1)
}

fn exactly_one(lits: &[Lit], at_least: bool) -> Vec<Clause> {
    let mut out = Vec::new();
    if at_least {
        out.push(Clause::new(lits.to_vec()).expect("distinct variables"));
    }
    for i in 0..lits.len() {
        for j in (i + 1)..lits.len() {
            out.push(Clause::new(vec![!lits[i], !lits[j]]).expect("distinct variables"));
        }
    }
    out
}

/// The empty `n × n` Sudoku: exactly-one per cell as base clauses and one
/// alldifferent group per row, column and block.
///
/// Group ids: rows `0..n`, columns `n..2n`, blocks `2n..3n`, blocks numbered
/// row-major.
pub fn sudoku_csp(n: usize) -> ClausalCsp {
    let b = (n as f64).sqrt().round() as usize;
    assert_eq!(b * b, n, "grid size must be a square");
    let mut vars = Vec::with_capacity(n * n * n);
    let mut var_owner = Vec::with_capacity(n * n * n);
    let mut decision_vars = Vec::with_capacity(n * n);
    let mut base = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let mut domain = Vec::with_capacity(n);
            for v in 1..=n {
                let id = cell_var(n, r, c, v);
                vars.push(BoolVar {
                    id,
                    meta: VarMeta::Cell {
                        row: r + 1,
                        col: c + 1,
                        value: v,
                    },
                });
                var_owner.push(r * n + c);
                domain.push((v as i64, Lit::pos(id)));
            }
            let lits: Vec<Lit> = domain.iter().map(|&(_, l)| l).collect();
            base.extend(exactly_one(&lits, true));
            decision_vars.push(DecisionVar {
                name: format!("cell[{},{}]", r + 1, c + 1),
                domain,
            });
        }
    }
    let mut csp = ClausalCsp {
        kind: PuzzleKind::Sudoku { n },
        vars,
        var_owner,
        decision_vars,
        base,
        groups: Vec::new(),
    };
    let mut units: Vec<(String, Category, Vec<(usize, usize)>)> = Vec::new();
    for r in 0..n {
        units.push((format!("row {}", r + 1), Category::Row, (0..n).map(|c| (r, c)).collect()));
    }
    for c in 0..n {
        units.push((format!("col {}", c + 1), Category::Col, (0..n).map(|r| (r, c)).collect()));
    }
    for k in 0..n {
        let (br, bc) = (k / b * b, k % b * b);
        let cells = (0..n).map(|i| (br + i / b, bc + i % b)).collect();
        units.push((format!("block {}", k + 1), Category::Block, cells));
    }
    for (id, (name, category, cells)) in units.into_iter().enumerate() {
        let mut clauses = Vec::new();
        for v in 1..=n {
            let lits: Vec<Lit> = cells.iter().map(|&(r, c)| Lit::pos(cell_var(n, r, c, v))).collect();
            clauses.extend(exactly_one(&lits, true));
        }
        let g = csp.finish_group(id, name, category, clauses);
        csp.groups.push(g);
    }
    csp
}

/// Parses a row-major grid string. `|` and whitespace are ignored; `.` marks
/// a blank. Returns the grid size and the cell values.
pub fn parse_sudoku_grid(text: &str) -> Result<(usize, Vec<Option<usize>>), ModelError> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace() && *c != '|').collect();
    let n = match chars.len() {
        16 => 4,
        81 => 9,
        len => {
            return Err(ModelError::Parse(format!(
                "expected 16 or 81 cells, found {len}"
            )))
        }
    };
    let cells = chars
        .iter()
        .map(|&ch| match ch {
            '.' => Ok(None),
            d => match d.to_digit(10) {
                Some(v) if v >= 1 && v as usize <= n => Ok(Some(v as usize)),
                _ => Err(ModelError::Parse(format!("unexpected character {d:?}"))),
            },
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((n, cells))
}

/// Loads a Sudoku grid. The puzzle must have exactly one solution; the
/// targets are the solution values of the blank cells.
pub fn load_sudoku(text: &str) -> Result<Instance, ModelError> {
    let (n, cells) = parse_sudoku_grid(text)?;
    let csp = Arc::new(sudoku_csp(n));
    let given = cells
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| csp.fact(i, v as i64).expect("value within domain")))
        .collect();
    unique_instance(csp, given)
}
