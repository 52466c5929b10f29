//! Line-oriented logic-grid puzzle files.
//!
//! ```text
//! # comment
//! types: person color
//! entities:
//!   person: ann bob
//!   color: red green
//! group c1 clue:
//!   assoc(ann,red) -assoc(bob,green)
//! given:
//!   -assoc(ann,green)
//! ```
//!
//! Each line under a `group <name> <category>:` header is one clause, a
//! disjunction of whitespace-separated literals `assoc(a,b)` or
//! `-assoc(a,b)`. Categories are `bijectivity`, `transitivity` and `clue`.
//! Entity order inside `assoc(..)` does not matter. Lines under `given:` list
//! known facts, any number per line.

use super::{
    explainable_facts, BoolVar, Category, ClausalCsp, DecisionVar, Fact, Instance, ModelError, PuzzleKind,
    VarMeta,
};
use crate::sat::{Clause, Lit};
use std::collections::HashMap;
use std::sync::Arc;

enum Section {
    None,
    Entities,
    Group(usize),
    Given,
}

struct RawGroup {
    name: String,
    category: Category,
    clauses: Vec<(usize, Vec<(bool, String, String)>)>,
}

fn syntax(line: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_literal(tok: &str, line: usize) -> Result<(bool, String, String), ModelError> {
    let (positive, body) = match tok.strip_prefix('-') {
        Some(rest) => (false, rest),
        None => (true, tok),
    };
    let inner = body
        .strip_prefix("assoc(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| syntax(line, format!("undeclared variable {body:?}")))?;
    let mut parts = inner.split(',').map(str::trim);
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((positive, a.to_string(), b.to_string())),
        _ => Err(syntax(line, format!("malformed literal {tok:?}"))),
    }
}

/// Parses a logic-grid file into its CSP and the listed given facts.
pub fn parse_logic_grid(text: &str) -> Result<(ClausalCsp, Vec<Fact>), ModelError> {
    let mut types: Vec<String> = Vec::new();
    let mut entities: Vec<Vec<String>> = Vec::new();
    let mut groups: Vec<RawGroup> = Vec::new();
    let mut given_raw: Vec<(usize, (bool, String, String))> = Vec::new();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let indented = raw.starts_with(' ') || raw.starts_with('\t');
        if !indented {
            if let Some(rest) = line.strip_prefix("types:") {
                types = rest.split_whitespace().map(String::from).collect();
                entities = vec![Vec::new(); types.len()];
                section = Section::None;
                continue;
            }
            if line == "entities:" {
                section = Section::Entities;
                continue;
            }
            if line == "given:" {
                section = Section::Given;
                continue;
            }
            if let Some(rest) = line.strip_prefix("group ") {
                let header = rest
                    .strip_suffix(':')
                    .ok_or_else(|| syntax(ln, "group header must end with ':'"))?;
                let parts: Vec<&str> = header.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(syntax(ln, "expected `group <name> <category>:`"));
                }
                let category = match Category::parse(parts[1]) {
                    Some(c @ (Category::Bijectivity | Category::Transitivity | Category::Clue)) => c,
                    _ => return Err(syntax(ln, format!("unknown category {:?}", parts[1]))),
                };
                if groups.iter().any(|g| g.name == parts[0]) {
                    return Err(syntax(ln, format!("duplicate group {:?}", parts[0])));
                }
                groups.push(RawGroup {
                    name: parts[0].to_string(),
                    category,
                    clauses: Vec::new(),
                });
                section = Section::Group(groups.len() - 1);
                continue;
            }
        }
        match section {
            Section::None => return Err(syntax(ln, format!("unexpected line {line:?}"))),
            Section::Entities => {
                let (t, names) = line
                    .split_once(':')
                    .ok_or_else(|| syntax(ln, "expected `<type>: <entities>`"))?;
                let ti = types
                    .iter()
                    .position(|x| x == t.trim())
                    .ok_or_else(|| syntax(ln, format!("undeclared type {:?}", t.trim())))?;
                entities[ti].extend(names.split_whitespace().map(String::from));
            }
            Section::Group(g) => {
                let lits = line
                    .split_whitespace()
                    .map(|tok| parse_literal(tok, ln))
                    .collect::<Result<Vec<_>, _>>()?;
                groups[g].clauses.push((ln, lits));
            }
            Section::Given => {
                for tok in line.split_whitespace() {
                    given_raw.push((ln, parse_literal(tok, ln)?));
                }
            }
        }
    }

    if types.len() < 2 {
        return Err(ModelError::Parse("at least two entity types are required".into()));
    }
    let mut entity_type: HashMap<&str, (usize, usize)> = HashMap::new();
    for (ti, es) in entities.iter().enumerate() {
        if es.is_empty() {
            return Err(ModelError::Parse(format!("type {:?} has no entities", types[ti])));
        }
        for (k, e) in es.iter().enumerate() {
            if entity_type.insert(e, (ti, k)).is_some() {
                return Err(ModelError::Parse(format!("entity {e:?} declared twice")));
            }
        }
    }

    let mut vars = Vec::new();
    let mut decision_vars = Vec::new();
    let mut pair_index: HashMap<(usize, usize, usize, usize), usize> = HashMap::new();
    for ti in 0..types.len() {
        for tj in (ti + 1)..types.len() {
            for (a, ea) in entities[ti].iter().enumerate() {
                for (b, eb) in entities[tj].iter().enumerate() {
                    let id = vars.len();
                    pair_index.insert((ti, a, tj, b), id);
                    vars.push(BoolVar {
                        id,
                        meta: VarMeta::Assoc {
                            left: ea.clone(),
                            right: eb.clone(),
                        },
                    });
                    decision_vars.push(DecisionVar {
                        name: format!("assoc({ea},{eb})"),
                        domain: vec![(1, Lit::pos(id)), (0, Lit::neg(id))],
                    });
                }
            }
        }
    }
    let resolve = |ln: usize, (positive, a, b): &(bool, String, String)| -> Result<Lit, ModelError> {
        let undeclared = || syntax(ln, format!("undeclared variable assoc({a},{b})"));
        let &(ta, ia) = entity_type.get(a.as_str()).ok_or_else(undeclared)?;
        let &(tb, ib) = entity_type.get(b.as_str()).ok_or_else(undeclared)?;
        let key = if ta < tb { (ta, ia, tb, ib) } else { (tb, ib, ta, ia) };
        let id = *pair_index.get(&key).ok_or_else(undeclared)?;
        Ok(Lit::new(id, *positive))
    };

    let num = vars.len();
    let mut csp = ClausalCsp {
        kind: PuzzleKind::LogicGrid,
        vars,
        var_owner: (0..num).collect(),
        decision_vars,
        base: Vec::new(),
        groups: Vec::new(),
    };
    for (id, g) in groups.into_iter().enumerate() {
        if g.clauses.is_empty() {
            return Err(ModelError::Parse(format!("group {:?} has no clauses", g.name)));
        }
        let mut clauses = Vec::with_capacity(g.clauses.len());
        for (ln, lits) in &g.clauses {
            let lits = lits.iter().map(|l| resolve(*ln, l)).collect::<Result<Vec<_>, _>>()?;
            clauses.push(Clause::new(lits).map_err(|e| syntax(*ln, e.to_string()))?);
        }
        let group = csp.finish_group(id, g.name, g.category, clauses);
        csp.groups.push(group);
    }
    let mut given = Vec::new();
    for (ln, lit) in &given_raw {
        let l = resolve(*ln, lit)?;
        given.push(Fact {
            var: l.var(),
            value: l.is_positive() as i64,
            lit: l,
        });
    }
    given.sort_unstable();
    given.dedup();
    Ok((csp, given))
}

/// Loads a logic-grid puzzle. The targets are all facts implied by the
/// givens and constraints; puzzles with several solutions are accepted and
/// simply have fewer targets.
pub fn load_logic_grid(text: &str) -> Result<Instance, ModelError> {
    let (csp, given) = parse_logic_grid(text)?;
    let targets = explainable_facts(&csp, &given)?;
    Ok(Instance {
        csp: Arc::new(csp),
        given,
        targets,
    })
}
