//! JSON views of explanation steps for the labeling client.

use serde::Serialize;
use stepwise_core::explain::{ExplanationStep, FactRef};
use stepwise_core::model::{Category, ClausalCsp, Instance, PuzzleKind, VarMeta};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderedFact {
    pub var: usize,
    pub value: i64,
    pub label: String,
    /// 1-based grid position for Sudoku cells.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderedConstraint {
    pub id: usize,
    pub name: String,
    pub category: Category,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenderedStep {
    /// Known cell values before the step, row-major; Sudoku only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<Option<i64>>>>,
    pub used_facts: Vec<RenderedFact>,
    pub used_constraints: Vec<RenderedConstraint>,
    pub derived: RenderedFact,
    pub features: Vec<i64>,
}

fn fact(csp: &ClausalCsp, f: FactRef) -> RenderedFact {
    let full = csp.fact(f.var, f.val).expect("step refers to a valid fact");
    let (row, col) = match &csp.vars[full.lit.var()].meta {
        VarMeta::Cell { row, col, .. } => (Some(*row), Some(*col)),
        VarMeta::Assoc { .. } => (None, None),
    };
    RenderedFact {
        var: f.var,
        value: f.val,
        label: csp.describe_fact(&full),
        row,
        col,
    }
}

/// Sudoku cell values known in `state`, or `None` for other families.
pub fn grid(state: &Instance) -> Option<Vec<Vec<Option<i64>>>> {
    let PuzzleKind::Sudoku { n } = state.csp.kind else {
        return None;
    };
    let mut g = vec![vec![None; n]; n];
    for f in &state.given {
        g[f.var / n][f.var % n] = Some(f.value);
    }
    Some(g)
}

pub fn render_step(state: &Instance, step: &ExplanationStep) -> RenderedStep {
    let csp = &state.csp;
    RenderedStep {
        grid: grid(state),
        used_facts: step.facts.iter().map(|&f| fact(csp, f)).collect(),
        used_constraints: step
            .groups
            .iter()
            .map(|g| RenderedConstraint {
                id: g.id,
                name: csp.groups[g.id].name.clone(),
                category: g.category,
            })
            .collect(),
        derived: fact(csp, step.target),
        features: step.features.clone(),
    }
}
