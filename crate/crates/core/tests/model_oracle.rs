use proptest::prelude::*;
use stepwise_core::model::{
    explainable_facts, load_logic_grid, load_sudoku, parse_logic_grid, sudoku_csp, ClausalCsp, Fact, GroupSolver,
};
use stepwise_core::sat::{Clause, Lit, Solver};
use std::collections::BTreeSet;

const POOL4: &str = include_str!("../../../data/sudoku/pool4.txt");
const POOL9: &str = include_str!("../../../data/sudoku/pool9.txt");
const TOY: &str = include_str!("../../../data/logic_grid/toy.lgp");
const NO_CLUES: &str = include_str!("../../../data/logic_grid/no_clues.lgp");

/// Every 4x4 Sudoku solution, by plain backtracking over cells.
fn all_4x4_solutions() -> Vec<[u8; 16]> {
    fn ok(g: &[u8; 16], i: usize, v: u8) -> bool {
        let (r, c) = (i / 4, i % 4);
        (0..4).all(|k| g[r * 4 + k] != v && g[k * 4 + c] != v)
            && (0..4).all(|k| g[(r / 2 * 2 + k / 2) * 4 + c / 2 * 2 + k % 2] != v)
    }
    fn rec(g: &mut [u8; 16], i: usize, out: &mut Vec<[u8; 16]>) {
        if i == 16 {
            out.push(*g);
            return;
        }
        for v in 1..=4 {
            if ok(g, i, v) {
                g[i] = v;
                rec(g, i + 1, out);
                g[i] = 0;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut [0; 16], 0, &mut out);
    out
}

fn grid_model(csp: &ClausalCsp, grid: &[u8]) -> Vec<bool> {
    let mut m = vec![false; csp.num_vars()];
    for (cell, &v) in grid.iter().enumerate() {
        m[csp.fact(cell, v as i64).unwrap().lit.var()] = true;
    }
    m
}

fn all_clauses(csp: &ClausalCsp) -> Vec<&Clause> {
    csp.base.iter().chain(csp.groups.iter().flat_map(|g| &g.clauses)).collect()
}

/// Solutions of the encoding by repeated solving with blocking clauses.
fn sat_solutions(csp: &ClausalCsp, assumptions: &[Lit], limit: usize) -> Vec<Vec<i64>> {
    let mut s = Solver::new(csp.num_vars());
    for c in all_clauses(csp) {
        s.add_clause(c.clone());
    }
    let mut out = Vec::new();
    while out.len() < limit {
        let r = s.solve(assumptions);
        if !r.is_sat() {
            break;
        }
        let values: Vec<i64> = (0..csp.decision_vars.len()).map(|d| csp.value_in(d, &r.model).unwrap()).collect();
        let block: Vec<Lit> = (0..values.len()).map(|d| !csp.fact(d, values[d]).unwrap().lit).collect();
        s.add_clause(Clause::new(block).unwrap());
        out.push(values);
    }
    out
}

#[test]
fn sudoku_encoding_matches_direct_checker() {
    let csp = sudoku_csp(4);
    let brute = all_4x4_solutions();
    assert_eq!(brute.len(), 288);
    for g in &brute {
        let m = grid_model(&csp, g);
        assert!(all_clauses(&csp).iter().all(|c| c.satisfied_by(&m)));
    }
    let mut via_sat: Vec<Vec<i64>> = sat_solutions(&csp, &[], 1000);
    via_sat.sort();
    let mut expected: Vec<Vec<i64>> = brute.iter().map(|g| g.iter().map(|&v| v as i64).collect()).collect();
    expected.sort();
    assert_eq!(via_sat, expected);
}

#[test]
fn sudoku_group_partition() {
    let csp = sudoku_csp(9);
    let mut seen = BTreeSet::new();
    for g in &csp.groups {
        for c in &g.clauses {
            assert!(seen.insert(format!("{}:{:?}", g.id, c.lits())));
        }
        let from_clauses: BTreeSet<usize> = g.clauses.iter().flat_map(|c| c.lits().iter().map(|l| l.var())).collect();
        assert_eq!(from_clauses.into_iter().collect::<Vec<_>>(), g.scope);
    }
    assert_eq!(seen.len(), csp.num_group_clauses());
    assert_eq!(csp.groups.len(), 27);
    assert_eq!(csp.num_vars(), 729);
}

fn brute_implied(brute: &[[u8; 16]], given: &[Fact]) -> Vec<Fact> {
    let csp = sudoku_csp(4);
    let matching: Vec<&[u8; 16]> = brute
        .iter()
        .filter(|g| given.iter().all(|f| g[f.var] as i64 == f.value))
        .collect();
    let mut out = Vec::new();
    if matching.is_empty() {
        return out;
    }
    for cell in 0..16 {
        if given.iter().any(|f| f.var == cell) {
            continue;
        }
        let v = matching[0][cell];
        if matching.iter().all(|g| g[cell] == v) {
            out.push(csp.fact(cell, v as i64).unwrap());
        }
    }
    out
}

#[test]
fn explainable_facts_of_bundled_4x4_puzzles() {
    let brute = all_4x4_solutions();
    for line in POOL4.lines().filter(|l| !l.trim().is_empty()) {
        let inst = load_sudoku(line).unwrap();
        let got = explainable_facts(&inst.csp, &inst.given).unwrap();
        assert_eq!(got, brute_implied(&brute, &inst.given), "{line}");
        assert_eq!(got, inst.targets);
    }
}

#[test]
fn empty_grid_implies_nothing() {
    let csp = sudoku_csp(4);
    assert!(explainable_facts(&csp, &[]).unwrap().is_empty());
}

#[test]
fn solved_minus_one_cell() {
    let inst = load_sudoku("1234|3412|2143|432.").unwrap();
    let got = explainable_facts(&inst.csp, &inst.given).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!((got[0].var, got[0].value), (15, 1));
}

#[test]
fn bundled_9x9_puzzles_are_unique_and_fully_implied() {
    for line in POOL9.lines().filter(|l| !l.trim().is_empty()) {
        let inst = load_sudoku(line).unwrap();
        let assumptions: Vec<Lit> = inst.given.iter().map(|f| f.lit).collect();
        let sols = sat_solutions(&inst.csp, &assumptions, 2);
        assert_eq!(sols.len(), 1);
        let intersection: Vec<Fact> = (0..81)
            .filter(|c| !inst.given.iter().any(|f| f.var == *c))
            .map(|c| inst.csp.fact(c, sols[0][c]).unwrap())
            .collect();
        assert_eq!(explainable_facts(&inst.csp, &inst.given).unwrap(), intersection);
        assert_eq!(inst.targets, intersection);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    /// Every implied fact holds in every solution extending the givens, and
    /// nothing else is implied.
    #[test]
    fn implied_facts_match_solution_intersection(sol in 0usize..288, mask in any::<u16>()) {
        let brute = all_4x4_solutions();
        let csp = sudoku_csp(4);
        let given: Vec<Fact> = (0..16)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| csp.fact(i, brute[sol][i] as i64).unwrap())
            .collect();
        prop_assert_eq!(explainable_facts(&csp, &given).unwrap(), brute_implied(&brute, &given));
    }
}

/// Logic-grid oracle: solutions are pairs of bijections person->color and
/// person->pet.
fn lgp_solutions(check: impl Fn(&dyn Fn(&str, &str) -> bool) -> bool) -> Vec<(Vec<usize>, Vec<usize>)> {
    let people = ["ann", "bob", "cat"];
    let colors = ["red", "green", "blue"];
    let pets = ["dog", "fish", "owl"];
    let perms: Vec<Vec<usize>> = vec![
        vec![0, 1, 2],
        vec![0, 2, 1],
        vec![1, 0, 2],
        vec![1, 2, 0],
        vec![2, 0, 1],
        vec![2, 1, 0],
    ];
    let mut out = Vec::new();
    for s in &perms {
        for t in &perms {
            let assoc = |a: &str, b: &str| -> bool {
                let p = |x: &str| people.iter().position(|y| *y == x);
                let c = |x: &str| colors.iter().position(|y| *y == x);
                let q = |x: &str| pets.iter().position(|y| *y == x);
                if let (Some(i), Some(j)) = (p(a), c(b)) {
                    return s[i] == j;
                }
                if let (Some(i), Some(j)) = (p(a), q(b)) {
                    return t[i] == j;
                }
                if let (Some(i), Some(j)) = (c(a), q(b)) {
                    let person = s.iter().position(|&x| x == i).unwrap();
                    return t[person] == j;
                }
                panic!("bad pair {a} {b}")
            };
            if check(&assoc) {
                out.push((s.clone(), t.clone()));
            }
        }
    }
    out
}

#[test]
fn toy_logic_grid_against_permutation_oracle() {
    let sols = lgp_solutions(|a| a("ann", "dog") && !a("cat", "fish") && a("red", "dog") && !a("cat", "green"));
    assert_eq!(sols.len(), 1);
    let inst = load_logic_grid(TOY).unwrap();
    assert_eq!(inst.csp.num_vars(), 27);
    assert_eq!(inst.csp.groups.len(), 18 + 27 + 4);
    assert_eq!(inst.targets.len(), 27);
    assert_eq!(sat_solutions(&inst.csp, &[], 10).len(), 1);
    // ann-red-dog, bob-green-fish, cat-blue-owl
    let positives: BTreeSet<String> = inst
        .targets
        .iter()
        .filter(|f| f.value == 1)
        .map(|f| inst.csp.describe_fact(f))
        .collect();
    let expected: BTreeSet<String> = [
        "assoc(ann,red)",
        "assoc(ann,dog)",
        "assoc(bob,green)",
        "assoc(bob,fish)",
        "assoc(cat,blue)",
        "assoc(cat,owl)",
        "assoc(red,dog)",
        "assoc(green,fish)",
        "assoc(blue,owl)",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    assert_eq!(positives, expected);
}

#[test]
fn clue_free_logic_grid_has_all_bijection_pairs() {
    let oracle = lgp_solutions(|_| true);
    assert_eq!(oracle.len(), 36);
    let (csp, given) = parse_logic_grid(NO_CLUES).unwrap();
    assert!(given.is_empty());
    assert_eq!(sat_solutions(&csp, &[], 100).len(), 36);
    let inst = load_logic_grid(NO_CLUES).unwrap();
    assert!(inst.targets.is_empty());
    let mut solver = GroupSolver::new(&csp);
    assert!(solver.check_all(&[]).is_sat());
}
