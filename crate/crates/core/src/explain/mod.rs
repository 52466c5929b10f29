//! Explanation steps: feature vectors, optimal constrained unsatisfiable
//! subsets (OCUS), smallest steps and explanation sequences.

mod features;

pub use features::{
    fact_features, feature_names, group_features, step_features, LOGIC_GRID_FEATURES, NUM_FEATURES,
    SUDOKU_FEATURES,
};

use crate::model::{Category, ClausalCsp, Fact, GroupSolver, Instance};
use crate::opt::{candidate_cmp, solve_below, HitProblem, OptError, Score, SideConstraints};
use crate::sat::{grow, Lit, SatResult, SubsetOracle};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("{0} does not follow from the given facts")]
    NotExplainable(String),
    #[error("the instance has no targets left")]
    NoTargets,
    #[error("no explanation satisfies the side constraints")]
    Infeasible,
    #[error(transparent)]
    Opt(#[from] OptError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactRef {
    pub var: usize,
    pub val: i64,
}

impl From<Fact> for FactRef {
    fn from(f: Fact) -> Self {
        FactRef {
            var: f.var,
            val: f.value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRef {
    pub id: usize,
    pub category: Category,
}

/// `facts ∧ groups ⇒ target`, a minimal unsatisfiable subset together with
/// the negated target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationStep {
    pub target: FactRef,
    pub facts: Vec<FactRef>,
    pub groups: Vec<GroupRef>,
    pub features: Vec<i64>,
}

impl ExplanationStep {
    pub fn target_fact(&self, csp: &ClausalCsp) -> Fact {
        csp.fact(self.target.var, self.target.val).expect("step refers to a valid fact")
    }

    pub fn size(&self) -> usize {
        self.facts.len() + self.groups.len()
    }
}

/// One selectable element of an explanation universe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Item {
    Fact(Fact),
    Group(usize),
    /// The negated target, always selected.
    NotTarget(Fact),
}

/// The universe of one (given facts, target) pair: given facts sorted, then
/// constraint groups by id, then the negated target.
#[derive(Clone, Debug)]
pub struct ExplContext {
    pub csp: Arc<ClausalCsp>,
    pub given: Vec<Fact>,
    pub target: Fact,
    pub items: Vec<Item>,
    pub item_features: Vec<Vec<usize>>,
}

impl ExplContext {
    pub fn new(csp: Arc<ClausalCsp>, given: &[Fact], target: Fact) -> Self {
        let mut given = given.to_vec();
        given.sort_unstable();
        let mut items: Vec<Item> = given.iter().map(|&f| Item::Fact(f)).collect();
        items.extend((0..csp.groups.len()).map(Item::Group));
        items.push(Item::NotTarget(target));
        let item_features = items
            .iter()
            .map(|it| match it {
                Item::Fact(f) => fact_features(&csp, &target, f),
                Item::Group(g) => group_features(&csp, &target, *g),
                Item::NotTarget(_) => Vec::new(),
            })
            .collect();
        ExplContext {
            csp,
            given,
            target,
            items,
            item_features,
        }
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn not_target(&self) -> usize {
        self.items.len() - 1
    }

    pub fn features_of(&self, items: &[usize]) -> Vec<i64> {
        let mut phi = vec![0i64; NUM_FEATURES];
        for &j in items {
            for &i in &self.item_features[j] {
                phi[i] += 1;
            }
        }
        phi
    }

    /// Item costs for the given cost model. The negated target costs nothing.
    pub fn item_costs(&self, costs: &CostModel) -> Vec<f64> {
        self.items
            .iter()
            .zip(&self.item_features)
            .map(|(it, fs)| match (it, costs) {
                (Item::NotTarget(_), _) => 0.0,
                (_, CostModel::Unit) => 1.0,
                (_, CostModel::Features(w)) => fs.iter().map(|&i| w[i]).sum(),
            })
            .collect()
    }

    pub fn step(&self, items: &[usize]) -> ExplanationStep {
        let mut facts = Vec::new();
        let mut groups = Vec::new();
        for &j in items {
            match self.items[j] {
                Item::Fact(f) => facts.push(FactRef::from(f)),
                Item::Group(g) => groups.push(GroupRef {
                    id: g,
                    category: self.csp.groups[g].category,
                }),
                Item::NotTarget(_) => {}
            }
        }
        ExplanationStep {
            target: self.target.into(),
            facts,
            groups,
            features: self.features_of(items),
        }
    }

    /// Universe indices of a step's facts and groups plus the negated target.
    pub fn items_of(&self, step: &ExplanationStep) -> Option<Vec<usize>> {
        let nf = self.given.len();
        let mut out = Vec::with_capacity(step.size() + 1);
        for f in &step.facts {
            out.push(self.given.iter().position(|g| g.var == f.var && g.value == f.val)?);
        }
        for g in &step.groups {
            if g.id >= self.csp.groups.len() {
                return None;
            }
            out.push(nf + g.id);
        }
        out.push(self.not_target());
        out.sort_unstable();
        Some(out)
    }
}

/// How item costs are derived.
#[derive(Clone, Debug, PartialEq)]
pub enum CostModel {
    /// One per fact and per group: smallest explanation steps.
    Unit,
    /// Per-feature weights; an item costs the sum over the features it
    /// increments.
    Features(Vec<f64>),
}

struct Oracle<'a> {
    solver: &'a mut GroupSolver,
    ctx: &'a ExplContext,
    sat_calls: &'a mut u64,
}

impl SubsetOracle for Oracle<'_> {
    fn check(&mut self, items: &[usize]) -> SatResult {
        *self.sat_calls += 1;
        let nf = self.ctx.given.len();
        let ng = self.ctx.csp.groups.len();
        let mut active = vec![false; ng];
        let mut assumptions: Vec<Lit> = Vec::with_capacity(items.len());
        for &j in items {
            match self.ctx.items[j] {
                Item::Fact(f) => assumptions.push(f.lit),
                Item::Group(g) => active[g] = true,
                Item::NotTarget(t) => assumptions.push(!t.lit),
            }
        }
        debug_assert!(items.iter().all(|&j| j < nf + ng + 1));
        self.solver.check(&assumptions, |g| active[g])
    }

    fn holds_in(&self, item: usize, model: &[bool]) -> bool {
        match self.ctx.items[item] {
            Item::Fact(f) => f.lit.holds(model),
            Item::Group(g) => self.ctx.csp.groups[g].clauses.iter().all(|c| c.satisfied_by(model)),
            Item::NotTarget(t) => !t.lit.holds(model),
        }
    }
}

/// Correction sets and known MUSes of one context. Both are independent of
/// costs and side constraints, so they are reused across calls.
struct CtxCache {
    ctx: Arc<ExplContext>,
    covers: Vec<Vec<usize>>,
    muses: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainStats {
    pub sat_calls: u64,
    pub hitting_sets: u64,
}

/// Computes explanation steps for one CSP, caching per-context knowledge.
pub struct Explainer {
    csp: Arc<ClausalCsp>,
    solver: GroupSolver,
    cache: HashMap<(Vec<Fact>, Fact), CtxCache>,
    pub stats: ExplainStats,
}

const CACHE_LIMIT: usize = 4096;

impl Explainer {
    pub fn new(csp: Arc<ClausalCsp>) -> Self {
        let solver = GroupSolver::new(&csp);
        Explainer {
            csp,
            solver,
            cache: HashMap::new(),
            stats: ExplainStats::default(),
        }
    }

    pub fn csp(&self) -> &Arc<ClausalCsp> {
        &self.csp
    }

    fn entry(&mut self, given: &[Fact], target: Fact) -> Result<&mut CtxCache, ExplainError> {
        let mut key_given = given.to_vec();
        key_given.sort_unstable();
        let key = (key_given, target);
        if !self.cache.contains_key(&key) {
            if self.cache.len() >= CACHE_LIMIT {
                self.cache.clear();
            }
            let ctx = Arc::new(ExplContext::new(self.csp.clone(), &key.0, target));
            let all: Vec<usize> = (0..ctx.num_items()).collect();
            let mut oracle = Oracle {
                solver: &mut self.solver,
                ctx: &ctx,
                sat_calls: &mut self.stats.sat_calls,
            };
            if oracle.check(&all).is_sat() {
                return Err(ExplainError::NotExplainable(self.csp.describe_fact(&target)));
            }
            self.cache.insert(
                key.clone(),
                CtxCache {
                    ctx,
                    covers: Vec::new(),
                    muses: Vec::new(),
                },
            );
        }
        Ok(self.cache.get_mut(&key).expect("inserted above"))
    }

    pub fn context(&mut self, given: &[Fact], target: Fact) -> Result<Arc<ExplContext>, ExplainError> {
        Ok(self.entry(given, target)?.ctx.clone())
    }

    /// Whether the items form an unsatisfiable set whose every one-item
    /// deletion is satisfiable.
    pub fn is_mus(&mut self, ctx: &ExplContext, items: &[usize]) -> bool {
        let mut oracle = Oracle {
            solver: &mut self.solver,
            ctx,
            sat_calls: &mut self.stats.sat_calls,
        };
        if oracle.check(items).is_sat() {
            return false;
        }
        (0..items.len()).all(|k| {
            let mut sub = items.to_vec();
            sub.remove(k);
            oracle.check(&sub).is_sat()
        })
    }

    pub fn is_unsat(&mut self, ctx: &ExplContext, items: &[usize]) -> bool {
        let mut oracle = Oracle {
            solver: &mut self.solver,
            ctx,
            sat_calls: &mut self.stats.sat_calls,
        };
        !oracle.check(items).is_sat()
    }

    /// Optimal constrained unsatisfiable subset for explaining `target`.
    pub fn ocus(
        &mut self,
        given: &[Fact],
        target: Fact,
        costs: &CostModel,
        side: &SideConstraints,
    ) -> Result<(Score, ExplanationStep), ExplainError> {
        self.ocus_below(given, target, costs, side, None)?
            .ok_or(ExplainError::Infeasible)
    }

    /// Like [`Explainer::ocus`], but only returns a step scoring strictly
    /// better than `cutoff`.
    pub fn ocus_below(
        &mut self,
        given: &[Fact],
        target: Fact,
        costs: &CostModel,
        side: &SideConstraints,
        cutoff: Option<Score>,
    ) -> Result<Option<(Score, ExplanationStep)>, ExplainError> {
        self.entry(given, target)?;
        let mut key_given = given.to_vec();
        key_given.sort_unstable();
        let key = (key_given, target);
        let Explainer {
            solver, cache, stats, ..
        } = self;
        let entry = cache.get_mut(&key).expect("checked above");
        let ctx = entry.ctx.clone();
        let neg = ctx.not_target();
        let mut problem = HitProblem::new(ctx.item_costs(costs), ctx.item_features.clone(), NUM_FEATURES);
        problem.forced = vec![neg];
        problem.side = side.clone();
        problem.covers = entry.covers.clone();
        problem.exclusions = entry.muses.clone();
        problem.validate()?;

        let mut best: Option<(Score, Vec<usize>)> = None;
        for m in &entry.muses {
            if !problem.is_feasible(m) {
                continue;
            }
            let s = problem.score(m);
            if best
                .as_ref()
                .is_none_or(|(bs, bi)| candidate_cmp((&s, m), (bs, bi)) == Ordering::Less)
            {
                best = Some((s, m.clone()));
            }
        }
        let floor = cutoff.map(|s| (s, Vec::new()));
        let mut bound = match (&best, &floor) {
            (Some(b), Some(f)) => {
                if candidate_cmp((&b.0, &b.1), (&f.0, &f.1)) == Ordering::Less {
                    Some(b.clone())
                } else {
                    best = None;
                    Some(f.clone())
                }
            }
            (Some(b), None) => Some(b.clone()),
            (None, f) => f.clone(),
        };

        let universe: Vec<usize> = (0..ctx.num_items()).collect();
        loop {
            stats.hitting_sets += 1;
            let hit = solve_below(&problem, bound.as_ref().map(|(s, ids)| (*s, ids.as_slice())))?;
            let Some(sel) = hit else { break };
            let h = sel.items;
            let mut oracle = Oracle {
                solver,
                ctx: &ctx,
                sat_calls: &mut stats.sat_calls,
            };
            if oracle.check(&h).is_sat() {
                let mss = grow(&mut oracle, &h, &universe).expect("seed is satisfiable");
                let correction: Vec<usize> = universe.iter().copied().filter(|j| mss.binary_search(j).is_err()).collect();
                debug_assert!(!correction.is_empty());
                problem.covers.push(correction.clone());
                entry.covers.push(correction);
                continue;
            }
            let core = shrink(&mut oracle, &h, neg);
            if !entry.muses.contains(&core) {
                entry.muses.push(core.clone());
                problem.exclusions.push(core.clone());
            }
            if core == h {
                best = Some((sel.score, h));
                break;
            }
            if problem.is_feasible(&core) {
                let s = problem.score(&core);
                let better = bound
                    .as_ref()
                    .is_none_or(|(bs, bi)| candidate_cmp((&s, &core), (bs, bi)) == Ordering::Less);
                if better {
                    best = Some((s, core.clone()));
                    bound = Some((s, core));
                }
            }
        }
        Ok(best.map(|(s, items)| (s, ctx.step(&items))))
    }

    /// Smallest explanation step: fewest facts plus groups.
    pub fn ses(&mut self, given: &[Fact], target: Fact) -> Result<ExplanationStep, ExplainError> {
        Ok(self.ocus(given, target, &CostModel::Unit, &SideConstraints::default())?.1)
    }

    /// Best step over all targets of `inst`. Ties between targets go to the
    /// smallest decision variable id. `Ok(None)` when no target admits a
    /// step satisfying the side constraints.
    pub fn best_step(
        &mut self,
        inst: &Instance,
        costs: &CostModel,
        side: &SideConstraints,
    ) -> Result<Option<(Score, ExplanationStep)>, ExplainError> {
        if inst.targets.is_empty() {
            return Err(ExplainError::NoTargets);
        }
        let mut targets = inst.targets.clone();
        targets.sort_unstable();
        let mut best: Option<(Score, ExplanationStep)> = None;
        for t in targets {
            let cutoff = best.as_ref().map(|(s, _)| *s);
            if let Some(found) = self.ocus_below(&inst.given, t, costs, side, cutoff)? {
                best = Some(found);
            }
        }
        Ok(best)
    }

    /// Optimal explanation step of `inst` under per-feature cost weights.
    pub fn optimal_step(&mut self, inst: &Instance, costs: &CostModel) -> Result<ExplanationStep, ExplainError> {
        self.best_step(inst, costs, &SideConstraints::default())?
            .map(|(_, s)| s)
            .ok_or(ExplainError::Infeasible)
    }

    /// Explains every target in turn, always taking the optimal step and
    /// adding its fact to the given facts.
    pub fn sequence(&mut self, inst: &Instance, costs: &CostModel) -> Result<Vec<ExplanationStep>, ExplainError> {
        let mut state = inst.clone();
        let mut out = Vec::with_capacity(state.targets.len());
        while !state.targets.is_empty() {
            let step = self.optimal_step(&state, costs)?;
            let fact = step.target_fact(&self.csp);
            state.reveal(fact);
            out.push(step);
        }
        Ok(out)
    }
}

/// Deletion-based reduction of an unsatisfiable set to a minimal one. The
/// `keep` item is never removed.
fn shrink<O: SubsetOracle>(oracle: &mut O, items: &[usize], keep: usize) -> Vec<usize> {
    let mut core = items.to_vec();
    let mut i = 0;
    while i < core.len() {
        if core[i] == keep {
            i += 1;
            continue;
        }
        let mut trial = core.clone();
        trial.remove(i);
        if oracle.check(&trial).is_sat() {
            i += 1;
        } else {
            core = trial;
        }
    }
    core
}

/// Recomputes a step's feature vector from its facts and groups.
pub fn features(csp: &ClausalCsp, step: &ExplanationStep) -> Vec<i64> {
    let target = step.target_fact(csp);
    let facts: Vec<Fact> = step
        .facts
        .iter()
        .map(|f| csp.fact(f.var, f.val).expect("step refers to valid facts"))
        .collect();
    let groups: Vec<usize> = step.groups.iter().map(|g| g.id).collect();
    step_features(csp, &target, &facts, &groups)
}
