//! Per-item feature maps. A step's feature vector is the sum of its items'
//! indicator vectors, so linear objectives over features are linear in items.

use crate::model::{Category, ClausalCsp, Fact, PuzzleKind};

pub const NUM_FEATURES: usize = 12;

pub const SUDOKU_FEATURES: [&str; NUM_FEATURES] = [
    "adj_facts_other_value",
    "other_facts_same_value",
    "other_facts_other_value",
    "adj_block",
    "adj_row",
    "adj_col",
    "other_block",
    "other_row",
    "other_col",
    "adj_facts_from_block",
    "adj_facts_from_row",
    "adj_facts_from_col",
];

pub const LOGIC_GRID_FEATURES: [&str; NUM_FEATURES] = [
    "adj_negative_facts",
    "other_positive_facts",
    "other_negative_facts",
    "adj_bijectivity",
    "adj_transitivity",
    "adj_clue",
    "other_bijectivity",
    "other_transitivity",
    "other_clue",
    "adj_facts_from_bijectivity",
    "adj_facts_from_transitivity",
    "adj_facts_from_clue",
];

pub fn feature_names(csp: &ClausalCsp) -> &'static [&'static str; NUM_FEATURES] {
    match csp.kind {
        PuzzleKind::Sudoku { .. } => &SUDOKU_FEATURES,
        PuzzleKind::LogicGrid => &LOGIC_GRID_FEATURES,
    }
}

/// Offset of a constraint category inside its family's triple of features.
fn category_slot(c: Category) -> usize {
    match c {
        Category::Block | Category::Bijectivity => 0,
        Category::Row | Category::Transitivity => 1,
        Category::Col | Category::Clue => 2,
    }
}

/// Categories of the groups containing both decision variables `a` and `b`.
fn shared_categories(csp: &ClausalCsp, a: usize, b: usize) -> Vec<Category> {
    let mut out: Vec<Category> = csp
        .groups
        .iter()
        .filter(|g| g.decision_scope.binary_search(&a).is_ok() && g.decision_scope.binary_search(&b).is_ok())
        .map(|g| g.category)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Features incremented by using `fact` in an explanation of `target`.
pub fn fact_features(csp: &ClausalCsp, target: &Fact, fact: &Fact) -> Vec<usize> {
    let shared = shared_categories(csp, target.var, fact.var);
    let adjacent = !shared.is_empty();
    let mut out = Vec::new();
    match csp.kind {
        PuzzleKind::Sudoku { .. } => {
            if adjacent {
                // an adjacent fact with the target's value contradicts it, so
                // it never appears in a consistent state
                if fact.value != target.value {
                    out.push(0);
                }
            } else if fact.value == target.value {
                out.push(1);
            } else {
                out.push(2);
            }
        }
        PuzzleKind::LogicGrid => {
            let positive = fact.value == 1;
            match (adjacent, positive) {
                (true, false) => out.push(0),
                (true, true) => {}
                (false, true) => out.push(1),
                (false, false) => out.push(2),
            }
        }
    }
    if adjacent {
        out.extend(shared.iter().map(|&c| 9 + category_slot(c)));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Features incremented by using constraint group `group` to explain `target`.
pub fn group_features(csp: &ClausalCsp, target: &Fact, group: usize) -> Vec<usize> {
    let g = &csp.groups[group];
    let adjacent = g.decision_scope.binary_search(&target.var).is_ok();
    vec![if adjacent { 3 } else { 6 } + category_slot(g.category)]
}

/// Feature vector of the step `facts ∧ groups ⇒ target`.
pub fn step_features(csp: &ClausalCsp, target: &Fact, facts: &[Fact], groups: &[usize]) -> Vec<i64> {
    let mut phi = vec![0i64; NUM_FEATURES];
    for f in facts {
        for i in fact_features(csp, target, f) {
            phi[i] += 1;
        }
    }
    for &g in groups {
        for i in group_features(csp, target, g) {
            phi[i] += 1;
        }
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sudoku_csp;

    #[test]
    fn block_facts_of_a_corner_cell() {
        // target cell[1,1]=1 in a 4x4 grid; cell[1,2]=2 shares row and block
        let csp = sudoku_csp(4);
        let t = csp.fact(0, 1).unwrap();
        assert_eq!(fact_features(&csp, &t, &csp.fact(1, 2).unwrap()), vec![0, 9, 10]);
        assert_eq!(fact_features(&csp, &t, &csp.fact(5, 3).unwrap()), vec![0, 9]);
        assert_eq!(fact_features(&csp, &t, &csp.fact(15, 1).unwrap()), vec![1]);
        assert_eq!(fact_features(&csp, &t, &csp.fact(10, 3).unwrap()), vec![2]);
        // groups: row 1 (id 0), col 2 (id 5), block 4 (id 11)
        assert_eq!(group_features(&csp, &t, 0), vec![4]);
        assert_eq!(group_features(&csp, &t, 5), vec![8]);
        assert_eq!(group_features(&csp, &t, 11), vec![6]);
        assert_eq!(group_features(&csp, &t, 8), vec![3]);
    }
}
