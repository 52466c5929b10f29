//! Exact 0-1 optimization over weighted hitting sets with side constraints.
//!
//! A selection is a subset of the item universe `0..n`. It must contain the
//! forced items, hit every cover set, and satisfy the optional side
//! constraints. Each item increments a fixed set of integer features, so the
//! feature vector of a selection is a vector of counts.
//!
//! The objective is lexicographic. The primary tier holds
//! `-Σ |φ_i - c_i|` over the features whose deviation weight is infinite; the
//! secondary tier holds the item costs minus `γ Σ u_i |φ_i - c_i|` over the
//! finite weights. Without a deviation term the primary tier is always zero.

mod bnb;

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Relative tolerance used when comparing objective values.
pub const TIE_EPS: f64 = 1e-9;

pub fn approx_cmp(a: f64, b: f64) -> Ordering {
    let tol = TIE_EPS * 1f64.max(a.abs()).max(b.abs());
    if a < b - tol {
        Ordering::Less
    } else if a > b + tol {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub primary: f64,
    pub secondary: f64,
}

impl Score {
    pub fn linear(value: f64) -> Self {
        Score {
            primary: 0.0,
            secondary: value,
        }
    }

    /// Lexicographic comparison with tolerance on each tier.
    pub fn compare(&self, other: &Score) -> Ordering {
        approx_cmp(self.primary, other.primary).then(approx_cmp(self.secondary, other.secondary))
    }
}

/// Total order on candidates: objective first, then the sorted item ids.
pub fn candidate_cmp(a: (&Score, &[usize]), b: (&Score, &[usize])) -> Ordering {
    a.0.compare(b.0).then_with(|| a.1.cmp(b.1))
}

/// Weighted L1 deviation from a reference feature vector, subtracted from
/// the objective. A weight of `f64::INFINITY` moves that feature to the
/// primary tier with unit weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub reference: Vec<i64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SideConstraints {
    /// Some feature must be strictly below this reference.
    pub nondomination: Option<Vec<i64>>,
    /// The feature vector must differ from this reference.
    pub inequality: Option<Vec<i64>>,
    pub deviation: Option<Deviation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HitProblem {
    pub costs: Vec<f64>,
    pub covers: Vec<Vec<usize>>,
    pub forced: Vec<usize>,
    /// Feature indices incremented by each item.
    pub features: Vec<Vec<usize>>,
    pub num_features: usize,
    pub side: SideConstraints,
    /// Superset exclusions: a selection containing every item of an entry
    /// must equal that entry.
    pub exclusions: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub items: Vec<usize>,
    pub score: Score,
    pub features: Vec<i64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("no selection satisfies the constraints")]
    Infeasible,
    #[error("malformed problem: {0}")]
    Invalid(String),
}

impl HitProblem {
    pub fn new(costs: Vec<f64>, features: Vec<Vec<usize>>, num_features: usize) -> Self {
        HitProblem {
            costs,
            covers: Vec::new(),
            forced: Vec::new(),
            features,
            num_features,
            side: SideConstraints::default(),
            exclusions: Vec::new(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.costs.len()
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let n = self.num_items();
        let bad = |m: String| Err(OptError::Invalid(m));
        if self.features.len() != n {
            return bad(format!("{} feature lists for {} items", self.features.len(), n));
        }
        if let Some(c) = self.costs.iter().find(|c| !c.is_finite()) {
            return bad(format!("non-finite cost {c}"));
        }
        for f in self.features.iter().flatten() {
            if *f >= self.num_features {
                return bad(format!("feature index {f} out of range"));
            }
        }
        for set in self.covers.iter().chain(self.exclusions.iter()) {
            if set.is_empty() {
                return bad("empty cover or exclusion set".into());
            }
        }
        for j in self.covers.iter().flatten().chain(&self.forced).chain(self.exclusions.iter().flatten()) {
            if *j >= n {
                return bad(format!("item {j} outside universe of {n}"));
            }
        }
        let p = self.num_features;
        let side = &self.side;
        for v in [&side.nondomination, &side.inequality].into_iter().flatten() {
            if v.len() != p {
                return bad("reference vector has wrong length".into());
            }
        }
        if let Some(d) = &side.deviation {
            if d.reference.len() != p || d.weights.len() != p {
                return bad("deviation vectors have wrong length".into());
            }
            if d.weights.iter().any(|u| u.is_nan() || *u < 0.0) {
                return bad("deviation weights must be non-negative".into());
            }
            if !(0.0..=1.0).contains(&d.gamma) {
                return bad(format!("gamma {} outside [0, 1]", d.gamma));
            }
        }
        Ok(())
    }

    pub fn feature_counts(&self, selection: &[usize]) -> Vec<i64> {
        let mut phi = vec![0i64; self.num_features];
        for &j in selection {
            for &f in &self.features[j] {
                phi[f] += 1;
            }
        }
        phi
    }

    pub fn score(&self, selection: &[usize]) -> Score {
        let phi = self.feature_counts(selection);
        let mut score = Score::linear(selection.iter().map(|&j| self.costs[j]).sum());
        if let Some(d) = &self.side.deviation {
            for i in 0..self.num_features {
                let dev = (phi[i] - d.reference[i]).abs() as f64;
                let u = d.weights[i];
                if u.is_infinite() {
                    score.primary -= dev;
                } else if u > 0.0 {
                    score.secondary -= d.gamma * u * dev;
                }
            }
        }
        score
    }

    /// Whether `selection` (sorted, deduplicated) meets every constraint.
    pub fn is_feasible(&self, selection: &[usize]) -> bool {
        let has = |j: &usize| selection.binary_search(j).is_ok();
        if !self.forced.iter().all(has) {
            return false;
        }
        if !self.covers.iter().all(|c| c.iter().any(has)) {
            return false;
        }
        for m in &self.exclusions {
            if m.iter().all(has) && selection.len() != m.len() {
                return false;
            }
        }
        let phi = self.feature_counts(selection);
        if let Some(r) = &self.side.nondomination {
            if !phi.iter().zip(r).any(|(a, b)| a < b) {
                return false;
            }
        }
        if let Some(r) = &self.side.inequality {
            if &phi == r {
                return false;
            }
        }
        true
    }
}

/// Minimizes the objective exactly. Ties are broken by the lexicographically
/// smallest sorted item sequence.
pub fn solve_min(problem: &HitProblem) -> Result<Selection, OptError> {
    solve_below(problem, None)?.ok_or(OptError::Infeasible)
}

/// Like [`solve_min`], but only reports a selection that strictly beats
/// `cutoff` in (objective, item sequence) order. `Ok(None)` means no feasible
/// selection does.
pub fn solve_below(
    problem: &HitProblem,
    cutoff: Option<(Score, &[usize])>,
) -> Result<Option<Selection>, OptError> {
    problem.validate()?;
    Ok(bnb::Search::new(problem, cutoff).run())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(costs: Vec<f64>) -> HitProblem {
        let n = costs.len();
        HitProblem::new(costs, vec![vec![]; n], 0)
    }

    #[test]
    fn cheaper_singleton_hits() {
        let mut p = plain(vec![1.0, 3.0]);
        p.covers = vec![vec![0, 1]];
        let s = solve_min(&p).unwrap();
        assert_eq!(s.items, vec![0]);
        assert_eq!(s.score, Score::linear(1.0));
    }

    #[test]
    fn singleton_covers_force_items() {
        // items: z=0, a=1, b=2
        let mut p = plain(vec![1.0, 1.0, 1.0]);
        p.forced = vec![0];
        p.covers = vec![vec![1], vec![2]];
        assert_eq!(solve_min(&p).unwrap().items, vec![0, 1, 2]);
    }

    #[test]
    fn empty_problem_selects_nothing() {
        let p = plain(vec![2.0, 5.0]);
        assert!(solve_min(&p).unwrap().items.is_empty());
    }

    #[test]
    fn ties_prefer_smallest_sequence() {
        let mut p = plain(vec![1.0, 1.0, 1.0]);
        p.covers = vec![vec![2, 1]];
        assert_eq!(solve_min(&p).unwrap().items, vec![1]);
    }

    #[test]
    fn infeasible_nondomination() {
        // a single item raising feature 0; reference 0 cannot be undercut
        let mut p = HitProblem::new(vec![1.0], vec![vec![0]], 1);
        p.side.nondomination = Some(vec![0]);
        assert_eq!(solve_min(&p), Err(OptError::Infeasible));
    }

    #[test]
    fn inequality_excludes_reference() {
        let mut p = HitProblem::new(vec![1.0, 2.0], vec![vec![0], vec![1]], 2);
        p.covers = vec![vec![0, 1]];
        p.side.inequality = Some(vec![1, 0]);
        assert_eq!(solve_min(&p).unwrap().items, vec![1]);
    }

    #[test]
    fn exclusion_forbids_strict_supersets() {
        let mut p = plain(vec![0.0, -1.0, -1.0]);
        p.forced = vec![0];
        p.exclusions = vec![vec![0]];
        // negative costs pull in items 1 and 2 unless supersets of {0} are cut
        assert_eq!(solve_min(&p).unwrap().items, vec![0]);
        p.exclusions.clear();
        assert_eq!(solve_min(&p).unwrap().items, vec![0, 1, 2]);
    }

    #[test]
    fn deviation_rewards_distance() {
        // item 0 -> f0, item 1 -> f1, item 2 -> f0,f1
        let mut p = HitProblem::new(vec![0.5, 0.5, 0.5], vec![vec![0], vec![1], vec![0, 1]], 2);
        p.covers = vec![vec![0, 1, 2]];
        p.side.deviation = Some(Deviation {
            reference: vec![1, 0],
            weights: vec![1.0, 1.0],
            gamma: 1.0,
        });
        // {1} scores 0.5 - 2 and {0,1,2} scores 1.5 - 3; the tie goes to the
        // smaller sequence [0, 1, 2]
        let s = solve_min(&p).unwrap();
        assert_eq!(s.items, vec![0, 1, 2]);
        assert_eq!(s.features, vec![2, 2]);
    }

    #[test]
    fn infinite_weights_dominate() {
        let mut p = HitProblem::new(vec![10.0, 0.0], vec![vec![0], vec![1]], 2);
        p.covers = vec![vec![0, 1]];
        p.side.deviation = Some(Deviation {
            reference: vec![0, 0],
            weights: vec![f64::INFINITY, 100.0],
            gamma: 0.5,
        });
        let s = solve_min(&p).unwrap();
        assert_eq!(s.items, vec![0, 1]);
        assert_eq!(s.score.primary, -1.0);
    }

    #[test]
    fn cutoff_filters_worse_solutions() {
        let mut p = plain(vec![1.0, 3.0]);
        p.covers = vec![vec![0, 1]];
        let res = solve_below(&p, Some((Score::linear(1.0), &[]))).unwrap();
        assert!(res.is_none());
        let res = solve_below(&p, Some((Score::linear(1.0), &[1]))).unwrap();
        assert_eq!(res.unwrap().items, vec![0]);
    }

    #[test]
    fn validation_catches_bad_input() {
        let mut p = plain(vec![1.0]);
        p.covers = vec![vec![]];
        assert!(matches!(solve_min(&p), Err(OptError::Invalid(_))));
        let mut p = plain(vec![f64::NAN]);
        p.covers = vec![vec![0]];
        assert!(matches!(solve_min(&p), Err(OptError::Invalid(_))));
    }
}
