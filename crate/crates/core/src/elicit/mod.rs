//! The interactive learning loop: pick an instance, generate a pair of
//! explanation steps, ask for a preference, update the weights.

mod config;
pub mod norm;
mod record;
pub mod ucb;

pub use config::{default_eta, ElicitConfig, InstanceSelection, Scheme, Strategy, ETA_GRID};
pub use norm::{NormState, Normalization};
pub use record::{replay, IterationRecord, RecordLine, SessionHeader, SessionRecord};
pub use ucb::UcbStats;

use crate::explain::{CostModel, ExplainError, Explainer, ExplanationStep, ExplContext, FactRef, NUM_FEATURES};
use crate::model::{Fact, Instance};
use crate::opt::{Deviation, SideConstraints};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::time::Instant;
use thiserror::Error;

/// Smallest weight kept after an update.
pub const MIN_WEIGHT: f64 = 1e-6;

/// Consecutive skipped instances tolerated before giving up.
const MAX_SKIPS: usize = 1000;

#[derive(Debug, Error)]
pub enum ElicitError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("responder failed: {0}")]
    Responder(String),
    #[error("no query could be generated after {0} skipped instances")]
    NoQuery(usize),
    #[error("no query is pending")]
    NoPendingQuery,
    #[error("training is complete")]
    Finished,
    #[error("session record: {0}")]
    Record(String),
    #[error("replay diverges at iteration {t}: {msg}")]
    Replay { t: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// The first step is preferred.
    Left,
    Right,
    Indifferent,
}

/// Learner state shared by live sessions and log replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElicitationState {
    pub w: Vec<f64>,
    /// 1-based iteration counter.
    pub t: usize,
    /// Feature vectors (preferred, rejected) of every preference-labeled pair.
    pub history: Vec<(Vec<i64>, Vec<i64>)>,
    pub ucb: UcbStats,
    pub norm: NormState,
}

impl ElicitationState {
    pub fn new(w: Vec<f64>, norm: NormState) -> Self {
        let p = w.len();
        ElicitationState {
            w,
            t: 1,
            history: Vec::new(),
            ucb: UcbStats::new(p),
            norm,
        }
    }

    /// `f_w` of the normalized features.
    pub fn utility(&self, phi: &[i64]) -> f64 {
        self.norm.normalize(phi).iter().zip(&self.w).map(|(x, w)| x * w).sum()
    }

    /// Cost weights on raw features equivalent to the current objective.
    pub fn cost_weights(&self) -> Vec<f64> {
        self.norm.cost_weights(&self.w)
    }

    pub fn observe_pair(&mut self, phi1: &[i64], phi2: &[i64]) {
        self.norm.observe(phi1, phi2);
    }

    /// Records the label and, for a preference, moves the weights towards
    /// the preferred step. Always advances `t`.
    pub fn apply_label(&mut self, phi1: &[i64], phi2: &[i64], label: Label, eta: f64) {
        let (plus, minus) = match label {
            Label::Left => (phi1, phi2),
            Label::Right => (phi2, phi1),
            Label::Indifferent => {
                self.t += 1;
                return;
            }
        };
        self.ucb.record(plus, minus);
        self.history.push((plus.to_vec(), minus.to_vec()));
        self.w = update_weights(&self.w, &self.norm.normalize(plus), &self.norm.normalize(minus), eta);
        self.t += 1;
    }
}

/// `w + eta (phi_minus - phi_plus)`, clipped below at [`MIN_WEIGHT`].
pub fn update_weights(w: &[f64], phi_plus: &[f64], phi_minus: &[f64], eta: f64) -> Vec<f64> {
    w.iter()
        .zip(phi_plus.iter().zip(phi_minus))
        .map(|(&w, (&p, &m))| (w + eta * (m - p)).max(MIN_WEIGHT))
        .collect()
}

/// A named puzzle state to learn from.
#[derive(Clone, Debug)]
pub struct Puzzle {
    pub id: String,
    pub instance: Instance,
}

/// Upper bounds for default normalization: every feature evaluated on the
/// full candidate set of each leave-one-variable-out state of each solution.
pub fn nadir_bounds(puzzles: &[Puzzle]) -> Vec<f64> {
    let mut ub = vec![0.0f64; NUM_FEATURES];
    for p in puzzles {
        let inst = &p.instance;
        let mut all: Vec<Fact> = inst.given.iter().chain(&inst.targets).copied().collect();
        all.sort_unstable();
        for (k, &x) in all.iter().enumerate() {
            let rest: Vec<Fact> = all.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, f)| *f).collect();
            let ctx = ExplContext::new(inst.csp.clone(), &rest, x);
            let items: Vec<usize> = (0..ctx.num_items()).collect();
            for (i, v) in ctx.features_of(&items).into_iter().enumerate() {
                ub[i] = ub[i].max(v as f64);
            }
        }
    }
    ub
}

/// First step and, when one exists, the second step of a query.
#[derive(Clone, Debug)]
pub struct QueryPair {
    pub y1: ExplanationStep,
    /// The second step and whether the non-domination constraint had to be
    /// dropped to find it.
    pub y2: Option<(ExplanationStep, bool)>,
}

/// `y1` is the best step under the current weights; `y2` minimizes
/// `(1 - γ) f_w - γ Σ u_i |φ_i - φ_i(y1)|` with `γ = 1/t`, differs from `y1`
/// in some feature and, with `nondomination`, improves on it in one.
pub fn generate_query(
    ex: &mut Explainer,
    inst: &Instance,
    state: &ElicitationState,
    scheme: Scheme,
    nondomination: bool,
) -> Result<QueryPair, ElicitError> {
    let cw = state.cost_weights();
    let gamma = 1.0 / state.t as f64;
    let u = match scheme {
        Scheme::NoWeights => vec![1.0; state.w.len()],
        Scheme::Learned => state.w.clone(),
        Scheme::Ucb => state.ucb.weights(),
    };
    let (_, y1) = ex
        .best_step(inst, &CostModel::Features(cw.clone()), &SideConstraints::default())?
        .ok_or(ExplainError::Infeasible)?;
    let phi1 = y1.features.clone();
    let costs2 = CostModel::Features(cw.iter().map(|c| (1.0 - gamma) * c).collect());
    let mut side = SideConstraints {
        nondomination: nondomination.then(|| phi1.clone()),
        inequality: Some(phi1.clone()),
        deviation: Some(Deviation {
            reference: phi1,
            weights: state.norm.deviation_weights(&u),
            gamma,
        }),
    };
    if let Some((_, y2)) = ex.best_step(inst, &costs2, &side)? {
        return Ok(QueryPair {
            y1,
            y2: Some((y2, false)),
        });
    }
    if nondomination {
        side.nondomination = None;
        if let Some((_, y2)) = ex.best_step(inst, &costs2, &side)? {
            return Ok(QueryPair {
                y1,
                y2: Some((y2, true)),
            });
        }
    }
    Ok(QueryPair { y1, y2: None })
}

/// Targets ordered so that each has the smallest explanation step at its
/// position, given the facts before it. Ties go to the smallest variable.
pub fn ses_order(ex: &mut Explainer, inst: &Instance) -> Result<Vec<Fact>, ElicitError> {
    let seq = ex.sequence(inst, &CostModel::Unit)?;
    Ok(seq.iter().map(|s| s.target_fact(&inst.csp)).collect())
}

/// A generated query waiting for its label.
#[derive(Clone, Debug)]
pub struct Query {
    pub t: usize,
    pub puzzle: usize,
    pub instance: Instance,
    pub y1: ExplanationStep,
    pub y2: ExplanationStep,
    pub relaxed: bool,
    /// Wall time spent generating the pair, in seconds.
    pub seconds: f64,
}

/// Answers queries, e.g. a simulated user.
pub trait Responder {
    fn respond(&mut self, y1: &ExplanationStep, y2: &ExplanationStep) -> Result<Label, String>;
}

struct Cursor {
    puzzle: usize,
    state: Instance,
    /// Upfront fact order in the offline modes.
    order: Option<VecDeque<Fact>>,
}

impl Cursor {
    fn exhausted(&self) -> bool {
        match &self.order {
            Some(o) => o.is_empty(),
            None => self.state.targets.is_empty(),
        }
    }

    fn query_instance(&self) -> Instance {
        match &self.order {
            Some(o) => Instance {
                csp: self.state.csp.clone(),
                given: self.state.given.clone(),
                targets: vec![o[0]],
            },
            None => self.state.clone(),
        }
    }

    fn advance(&mut self, online_fact: Fact) {
        let fact = match &mut self.order {
            Some(o) => o.pop_front().expect("cursor is not exhausted"),
            None => online_fact,
        };
        self.state.reveal(fact);
    }
}

/// One elicitation session.
pub struct Elicitor {
    config: ElicitConfig,
    eta: f64,
    puzzles: Vec<Puzzle>,
    explainers: Vec<Option<Explainer>>,
    state: ElicitationState,
    rng: ChaCha8Rng,
    cursor: Option<Cursor>,
    pending: Option<Query>,
    record: SessionRecord,
    query_seconds: Vec<f64>,
    skipped: usize,
}

impl Elicitor {
    pub fn new(puzzles: Vec<Puzzle>, config: ElicitConfig) -> Result<Self, ElicitError> {
        config.validate(NUM_FEATURES).map_err(ElicitError::Config)?;
        let first = puzzles
            .first()
            .ok_or_else(|| ElicitError::Config("no puzzles given".into()))?;
        let kind = first.instance.csp.kind;
        if puzzles.iter().any(|p| p.instance.csp.kind != kind) {
            return Err(ElicitError::Config("puzzles of mixed families".into()));
        }
        if puzzles.iter().all(|p| p.instance.targets.is_empty()) {
            return Err(ElicitError::Config("no puzzle has facts left to explain".into()));
        }
        let eta = config.eta_for(kind);
        let norm = match config.normalization {
            Normalization::Default => {
                let n = NormState::with_bounds(nadir_bounds(&puzzles));
                let zero = n.zero_width_features();
                if !zero.is_empty() {
                    log::warn!("features {zero:?} have zero range; they stay on the raw scale");
                }
                n
            }
            mode => NormState::new(mode, NUM_FEATURES),
        };
        let w = config.initial_weights.clone().unwrap_or_else(|| vec![1.0; NUM_FEATURES]);
        let record = SessionRecord {
            header: SessionHeader {
                config: config.clone(),
                puzzle_ids: puzzles.iter().map(|p| p.id.clone()).collect(),
                eta,
                initial_weights: w.clone(),
                initial_norm: norm.clone(),
            },
            iterations: Vec::new(),
        };
        Ok(Elicitor {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            explainers: puzzles.iter().map(|_| None).collect(),
            config,
            eta,
            puzzles,
            state: ElicitationState::new(w, norm),
            cursor: None,
            pending: None,
            record,
            query_seconds: Vec::new(),
            skipped: 0,
        })
    }

    pub fn config(&self) -> &ElicitConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn state(&self) -> &ElicitationState {
        &self.state
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn into_record(self) -> SessionRecord {
        self.record
    }

    pub fn puzzles(&self) -> &[Puzzle] {
        &self.puzzles
    }

    pub fn pending(&self) -> Option<&Query> {
        self.pending.as_ref()
    }

    pub fn query_seconds(&self) -> &[f64] {
        &self.query_seconds
    }

    /// Instances dropped because no second step existed.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn finished(&self) -> bool {
        self.pending.is_none() && self.state.t > self.config.iterations
    }

    fn explainer(&mut self, puzzle: usize) -> &mut Explainer {
        let csp = self.puzzles[puzzle].instance.csp.clone();
        self.explainers[puzzle].get_or_insert_with(|| Explainer::new(csp))
    }

    fn draw_puzzle(&mut self) -> Result<Cursor, ElicitError> {
        let live: Vec<usize> = (0..self.puzzles.len())
            .filter(|&i| !self.puzzles[i].instance.targets.is_empty())
            .collect();
        let puzzle = live[self.rng.gen_range(0..live.len())];
        let state = self.puzzles[puzzle].instance.clone();
        let order = match self.config.selection {
            InstanceSelection::Online => None,
            InstanceSelection::OfflineRandom => {
                let mut facts = state.targets.clone();
                facts.shuffle(&mut self.rng);
                Some(facts.into())
            }
            InstanceSelection::OfflineSes => Some(ses_order(self.explainer(puzzle), &state)?.into()),
        };
        Ok(Cursor { puzzle, state, order })
    }

    /// The pending query, generating one if needed. Repeated calls return the
    /// same query until it is answered.
    pub fn next_query(&mut self) -> Result<&Query, ElicitError> {
        if self.pending.is_none() {
            if self.state.t > self.config.iterations {
                return Err(ElicitError::Finished);
            }
            let q = self.generate()?;
            self.state.observe_pair(&q.y1.features, &q.y2.features);
            self.query_seconds.push(q.seconds);
            self.pending = Some(q);
        }
        Ok(self.pending.as_ref().expect("set above"))
    }

    fn generate(&mut self) -> Result<Query, ElicitError> {
        for _ in 0..MAX_SKIPS {
            let mut cursor = match self.cursor.take() {
                Some(c) if !c.exhausted() => c,
                _ => self.draw_puzzle()?,
            };
            let inst = cursor.query_instance();
            let start = Instant::now();
            let QueryPair { y1, y2: pair } = self.pair(cursor.puzzle, &inst)?;
            let seconds = start.elapsed().as_secs_f64();
            match pair {
                Some((y2, relaxed)) => {
                    let q = Query {
                        t: self.state.t,
                        puzzle: cursor.puzzle,
                        instance: inst,
                        y1,
                        y2,
                        relaxed,
                        seconds,
                    };
                    self.cursor = Some(cursor);
                    return Ok(q);
                }
                None => {
                    log::debug!("no second step for puzzle {}; skipping", self.puzzles[cursor.puzzle].id);
                    self.skipped += 1;
                    let fact = y1.target_fact(&inst.csp);
                    cursor.advance(fact);
                    self.cursor = Some(cursor);
                }
            }
        }
        Err(ElicitError::NoQuery(MAX_SKIPS))
    }

    fn pair(&mut self, puzzle: usize, inst: &Instance) -> Result<QueryPair, ElicitError> {
        let (scheme, nondom) = (self.config.scheme, self.config.nondomination());
        let csp = self.puzzles[puzzle].instance.csp.clone();
        let ex = self.explainers[puzzle].get_or_insert_with(|| Explainer::new(csp));
        generate_query(ex, inst, &self.state, scheme, nondom)
    }

    /// Applies the label to the pending query.
    pub fn answer(&mut self, label: Label) -> Result<&IterationRecord, ElicitError> {
        let q = self.pending.take().ok_or(ElicitError::NoPendingQuery)?;
        self.state.apply_label(&q.y1.features, &q.y2.features, label, self.eta);
        // keep the fact whose step is better under the updated weights
        let keep = if self.state.utility(&q.y1.features) <= self.state.utility(&q.y2.features) {
            &q.y1
        } else {
            &q.y2
        };
        let fact = keep.target_fact(&q.instance.csp);
        if let Some(c) = self.cursor.as_mut() {
            c.advance(fact);
        }
        self.record.iterations.push(IterationRecord {
            t: q.t,
            puzzle: self.puzzles[q.puzzle].id.clone(),
            given: q.instance.given.iter().map(|&f| FactRef::from(f)).collect(),
            targets: q.instance.targets.iter().map(|&f| FactRef::from(f)).collect(),
            y1: q.y1,
            y2: q.y2,
            relaxed: q.relaxed,
            label,
            weights: self.state.w.clone(),
            ub: self.state.norm.ub.clone(),
            timestamp_ms: None,
        });
        Ok(self.record.iterations.last().expect("pushed above"))
    }

    /// Stamps the latest iteration, for callers that log wall-clock times.
    pub fn stamp_last(&mut self, timestamp_ms: u64) {
        if let Some(it) = self.record.iterations.last_mut() {
            it.timestamp_ms = Some(timestamp_ms);
        }
    }
}

/// Result of a complete run.
#[derive(Debug)]
pub struct ElicitRun {
    pub weights: Vec<f64>,
    /// Cost weights on raw features matching the learned objective.
    pub cost_weights: Vec<f64>,
    pub state: ElicitationState,
    pub record: SessionRecord,
    pub query_seconds: Vec<f64>,
    pub skipped: usize,
}

/// A failed run with the log up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct ElicitFailure {
    pub error: ElicitError,
    pub record: Option<SessionRecord>,
}

/// Runs `config.iterations` query/label/update rounds against `responder`.
pub fn run_elicitation(
    puzzles: Vec<Puzzle>,
    config: ElicitConfig,
    responder: &mut dyn Responder,
) -> Result<ElicitRun, ElicitFailure> {
    let mut el = Elicitor::new(puzzles, config).map_err(|error| ElicitFailure { error, record: None })?;
    while !el.finished() {
        let step = el
            .next_query()
            .and_then(|q| responder.respond(&q.y1, &q.y2).map_err(ElicitError::Responder))
            .and_then(|label| el.answer(label).map(|_| ()));
        if let Err(error) = step {
            return Err(ElicitFailure {
                error,
                record: Some(el.into_record()),
            });
        }
    }
    Ok(ElicitRun {
        weights: el.state.w.clone(),
        cost_weights: el.state.cost_weights(),
        state: el.state.clone(),
        query_seconds: el.query_seconds.clone(),
        skipped: el.skipped,
        record: el.record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_sudoku;

    struct Always(Label);

    impl Responder for Always {
        fn respond(&mut self, _: &ExplanationStep, _: &ExplanationStep) -> Result<Label, String> {
            Ok(self.0)
        }
    }

    fn puzzles() -> Vec<Puzzle> {
        include_str!("../../../../data/sudoku/pool4.txt")
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .take(3)
            .enumerate()
            .map(|(i, g)| Puzzle {
                id: format!("p{i}"),
                instance: load_sudoku(g.trim()).unwrap(),
            })
            .collect()
    }

    #[test]
    fn worked_update() {
        let w = update_weights(&[1.0, 1.0], &[0.2, 0.0], &[0.0, 0.3], 0.5);
        assert!((w[0] - 0.9).abs() < 1e-12 && (w[1] - 1.15).abs() < 1e-12);
        assert_eq!(update_weights(&[0.1], &[5.0], &[0.0], 1.0), vec![MIN_WEIGHT]);
        assert_eq!(update_weights(&[0.3, 2.0], &[1.0, 2.0], &[1.0, 2.0], 10.0), vec![0.3, 2.0]);
    }

    #[test]
    fn zero_iterations_never_query() {
        let cfg = ElicitConfig {
            iterations: 0,
            ..ElicitConfig::machop()
        };
        let run = run_elicitation(puzzles(), cfg, &mut Always(Label::Left)).unwrap();
        assert!(run.record.iterations.is_empty());
        assert_eq!(run.weights, vec![1.0; NUM_FEATURES]);
    }

    #[test]
    fn indifference_keeps_weights() {
        let cfg = ElicitConfig {
            iterations: 1,
            ..ElicitConfig::machop()
        };
        let run = run_elicitation(puzzles(), cfg, &mut Always(Label::Indifferent)).unwrap();
        assert_eq!(run.record.iterations.len(), 1);
        assert_eq!(run.weights, vec![1.0; NUM_FEATURES]);
        assert_eq!(run.state.t, 2);
        assert!(run.state.history.is_empty());
    }

    #[test]
    fn pending_query_is_idempotent() {
        let mut el = Elicitor::new(puzzles(), ElicitConfig::machop()).unwrap();
        assert!(matches!(el.answer(Label::Left), Err(ElicitError::NoPendingQuery)));
        let a = el.next_query().unwrap().y2.clone();
        let b = el.next_query().unwrap().y2.clone();
        assert_eq!(a, b);
        el.answer(Label::Left).unwrap();
        assert!(matches!(el.answer(Label::Left), Err(ElicitError::NoPendingQuery)));
    }

    #[test]
    fn responder_failure_keeps_partial_log() {
        struct FailSecond(usize);
        impl Responder for FailSecond {
            fn respond(&mut self, _: &ExplanationStep, _: &ExplanationStep) -> Result<Label, String> {
                self.0 += 1;
                if self.0 > 1 {
                    Err("user left".into())
                } else {
                    Ok(Label::Right)
                }
            }
        }
        let err = run_elicitation(puzzles(), ElicitConfig::machop(), &mut FailSecond(0)).unwrap_err();
        assert!(matches!(err.error, ElicitError::Responder(_)));
        assert_eq!(err.record.unwrap().iterations.len(), 1);
    }

    #[test]
    fn log_round_trips_and_replays() {
        let cfg = ElicitConfig {
            iterations: 5,
            ..ElicitConfig::machop()
        };
        let run = run_elicitation(puzzles(), cfg, &mut Always(Label::Right)).unwrap();
        let mut buf = Vec::new();
        run.record.write_jsonl(&mut buf).unwrap();
        let back = SessionRecord::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, run.record);
        let replayed = replay(&back).unwrap();
        assert_eq!(replayed, run.state);
    }
}
