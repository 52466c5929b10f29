//! Labeling sessions: an elicitor, its append-only log and the held-out
//! comparison against smallest-step explanations.

use crate::render::{render_step, RenderedStep};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use stepwise_core::elicit::{
    ElicitConfig, ElicitError, Elicitor, IterationRecord, Label, NormState, Normalization, Puzzle, RecordLine,
};
use stepwise_core::explain::{CostModel, ExplainError, ExplanationStep, Explainer};
use stepwise_core::model::Instance;

/// Label counts after which the learned weights are compared with SES.
pub const CHECKPOINTS: [usize; 3] = [10, 30, 50];

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("training complete")]
    Finished,
    #[error("no query is waiting for a label")]
    NoPendingQuery,
    #[error("no weight snapshot at checkpoint {0}")]
    MissingCheckpoint(usize),
    #[error("checkpoint must be one of 10, 30 or 50, got {0}")]
    BadCheckpoint(usize),
    #[error("expected {expected} evaluation labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error(transparent)]
    Elicit(ElicitError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("session log: {0}")]
    Io(#[from] std::io::Error),
}

impl From<ElicitError> for SessionError {
    fn from(e: ElicitError) -> Self {
        match e {
            ElicitError::Finished => SessionError::Finished,
            ElicitError::NoPendingQuery => SessionError::NoPendingQuery,
            ElicitError::Config(m) => SessionError::Config(m),
            e => SessionError::Elicit(e),
        }
    }
}

/// Body of `POST /sessions`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    /// `choice_perceptron` or `machop`.
    pub strategy: String,
    #[serde(default)]
    pub normalization: Option<Normalization>,
    /// Name of a loaded puzzle set; the server default when absent.
    #[serde(default)]
    pub puzzles: Option<String>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub eta: Option<f64>,
}

impl SessionSpec {
    pub fn elicit_config(&self) -> Result<ElicitConfig, SessionError> {
        let mut cfg = ElicitConfig::preset(&self.strategy)
            .ok_or_else(|| SessionError::Config(format!("unknown strategy {:?}", self.strategy)))?;
        if let Some(n) = self.normalization {
            cfg.normalization = n;
        }
        if let Some(t) = self.iterations {
            cfg.iterations = t;
        }
        cfg.seed = self.seed.unwrap_or(0);
        cfg.eta = self.eta;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Evaluation,
}

/// Service-level lines sharing the session file with the elicitation log.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ServiceLine<'a> {
    Session {
        id: &'a str,
        puzzle_set: &'a str,
        evaluation_puzzle: &'a str,
    },
    EvaluationPairs {
        checkpoint: usize,
        /// Per pair, whether the learned step is shown on the left.
        learned_left: &'a [bool],
    },
    EvaluationLabels {
        checkpoint: usize,
        labels: &'a [Label],
        summary: &'a EvaluationSummary,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct PairView {
    pub t: usize,
    pub iterations: usize,
    pub puzzle: String,
    pub left: RenderedStep,
    pub right: RenderedStep,
    /// The non-domination constraint was dropped for lack of alternatives.
    pub relaxed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelView {
    pub t: usize,
    pub weights: Vec<f64>,
    pub phase: Phase,
}

#[derive(Clone, Debug, Serialize)]
pub struct StatusView {
    pub id: String,
    pub phase: Phase,
    pub labels: usize,
    pub iterations: usize,
    pub weights: Vec<f64>,
    pub checkpoints: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationPairView {
    pub index: usize,
    pub left: RenderedStep,
    pub right: RenderedStep,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluationView {
    pub checkpoint: usize,
    pub puzzle: String,
    pub pairs: Vec<EvaluationPairView>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub checkpoint: usize,
    pub n: usize,
    pub learned_pct: f64,
    pub ses_pct: f64,
    pub indifferent_pct: f64,
}

/// One comparison: the state, the step under learned weights and the SES step.
#[derive(Clone, Debug)]
pub struct EvaluationPair {
    pub state: Instance,
    pub learned: ExplanationStep,
    pub ses: ExplanationStep,
}

/// Walks the SES sequence of `inst` and pairs each SES step with the best
/// step under `cost_weights` in the same state.
pub fn evaluation_pairs(
    ex: &mut Explainer,
    inst: &Instance,
    cost_weights: &[f64],
) -> Result<Vec<EvaluationPair>, ExplainError> {
    let ses = ex.sequence(inst, &CostModel::Unit)?;
    let learned_costs = CostModel::Features(cost_weights.to_vec());
    let mut state = inst.clone();
    let mut out = Vec::with_capacity(ses.len());
    for step in ses {
        let learned = ex.optimal_step(&state, &learned_costs)?;
        let next = step.target_fact(&inst.csp);
        out.push(EvaluationPair {
            state: state.clone(),
            learned,
            ses: step,
        });
        state.reveal(next);
    }
    Ok(out)
}

/// Shares of learned, SES and indifferent answers, in percent.
pub fn summarize(checkpoint: usize, learned_left: &[bool], labels: &[Label]) -> EvaluationSummary {
    let (mut learned, mut ses, mut indiff) = (0usize, 0usize, 0usize);
    for (&ll, &l) in learned_left.iter().zip(labels) {
        match (l, ll) {
            (Label::Indifferent, _) => indiff += 1,
            (Label::Left, true) | (Label::Right, false) => learned += 1,
            _ => ses += 1,
        }
    }
    let n = labels.len();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    EvaluationSummary {
        checkpoint,
        n,
        learned_pct: pct(learned),
        ses_pct: pct(ses),
        indifferent_pct: pct(indiff),
    }
}

struct Round {
    pairs: Vec<EvaluationPair>,
    learned_left: Vec<bool>,
}

pub struct Session {
    pub id: String,
    elicitor: Elicitor,
    held_out: Puzzle,
    explainer: Explainer,
    rounds: Vec<(usize, Round)>,
    log: Option<File>,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Session {
    /// Trains on all puzzles but the last, which is kept for evaluation.
    /// With `dir` set, the log goes to `<dir>/<id>.jsonl`.
    pub fn create(
        id: String,
        set_name: &str,
        puzzles: &[Puzzle],
        config: ElicitConfig,
        dir: Option<&Path>,
    ) -> Result<Session, SessionError> {
        let (held_out, train) = puzzles
            .split_last()
            .filter(|(_, rest)| !rest.is_empty())
            .ok_or_else(|| SessionError::Config(format!("puzzle set {set_name:?} needs at least two puzzles")))?;
        let elicitor = Elicitor::new(train.to_vec(), config)?;
        let mut log = match dir {
            Some(d) => Some(
                OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(Self::log_path(d, &id))?,
            ),
            None => None,
        };
        if let Some(f) = log.as_mut() {
            write_line(
                f,
                &ServiceLine::Session {
                    id: &id,
                    puzzle_set: set_name,
                    evaluation_puzzle: &held_out.id,
                },
            )?;
            write_line(f, &RecordLine::Header(elicitor.record().header.clone()))?;
        }
        Ok(Session {
            id,
            explainer: Explainer::new(held_out.instance.csp.clone()),
            held_out: held_out.clone(),
            elicitor,
            rounds: Vec::new(),
            log,
        })
    }

    pub fn log_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    pub fn elicitor(&self) -> &Elicitor {
        &self.elicitor
    }

    pub fn phase(&self) -> Phase {
        if self.elicitor.finished() {
            Phase::Evaluation
        } else {
            Phase::Training
        }
    }

    fn labels(&self) -> usize {
        self.elicitor.record().iterations.len()
    }

    pub fn status(&self) -> StatusView {
        StatusView {
            id: self.id.clone(),
            phase: self.phase(),
            labels: self.labels(),
            iterations: self.elicitor.config().iterations,
            weights: self.elicitor.state().w.clone(),
            checkpoints: CHECKPOINTS.into_iter().filter(|&c| c <= self.labels()).collect(),
        }
    }

    pub fn query(&mut self) -> Result<PairView, SessionError> {
        let iterations = self.elicitor.config().iterations;
        let q = self.elicitor.next_query()?.clone();
        Ok(PairView {
            t: q.t,
            iterations,
            puzzle: self.elicitor.puzzles()[q.puzzle].id.clone(),
            left: render_step(&q.instance, &q.y1),
            right: render_step(&q.instance, &q.y2),
            relaxed: q.relaxed,
        })
    }

    pub fn label(&mut self, label: Label) -> Result<LabelView, SessionError> {
        let t = self.elicitor.answer(label)?.t;
        self.elicitor.stamp_last(now_ms());
        let it: &IterationRecord = self.elicitor.record().iterations.last().expect("just answered");
        if let Some(f) = self.log.as_mut() {
            write_line(f, &RecordLine::Iteration(it.clone()))?;
        }
        Ok(LabelView {
            t,
            weights: it.weights.clone(),
            phase: self.phase(),
        })
    }

    /// Cost weights on raw features implied by the snapshot after `checkpoint` labels.
    pub fn checkpoint_cost_weights(&self, checkpoint: usize) -> Result<Vec<f64>, SessionError> {
        if !CHECKPOINTS.contains(&checkpoint) {
            return Err(SessionError::BadCheckpoint(checkpoint));
        }
        let it = self
            .elicitor
            .record()
            .iterations
            .get(checkpoint - 1)
            .ok_or(SessionError::MissingCheckpoint(checkpoint))?;
        let norm = NormState {
            mode: self.elicitor.config().normalization,
            ub: it.ub.clone(),
            lb: vec![0.0; it.ub.len()],
        };
        Ok(norm.cost_weights(&it.weights))
    }

    fn round(&mut self, checkpoint: usize) -> Result<usize, SessionError> {
        if let Some(i) = self.rounds.iter().position(|(c, _)| *c == checkpoint) {
            return Ok(i);
        }
        let cw = self.checkpoint_cost_weights(checkpoint)?;
        let pairs = evaluation_pairs(&mut self.explainer, &self.held_out.instance, &cw)?;
        let seed = self.elicitor.config().seed ^ (checkpoint as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let learned_left: Vec<bool> = pairs.iter().map(|_| rng.gen_bool(0.5)).collect();
        if let Some(f) = self.log.as_mut() {
            write_line(
                f,
                &ServiceLine::EvaluationPairs {
                    checkpoint,
                    learned_left: &learned_left,
                },
            )?;
        }
        self.rounds.push((
            checkpoint,
            Round {
                pairs,
                learned_left,
            },
        ));
        Ok(self.rounds.len() - 1)
    }

    pub fn evaluation(&mut self, checkpoint: usize) -> Result<EvaluationView, SessionError> {
        let i = self.round(checkpoint)?;
        let round = &self.rounds[i].1;
        let pairs = round
            .pairs
            .iter()
            .zip(&round.learned_left)
            .enumerate()
            .map(|(index, (p, &ll))| {
                let (l, r) = if ll { (&p.learned, &p.ses) } else { (&p.ses, &p.learned) };
                EvaluationPairView {
                    index,
                    left: render_step(&p.state, l),
                    right: render_step(&p.state, r),
                }
            })
            .collect();
        Ok(EvaluationView {
            checkpoint,
            puzzle: self.held_out.id.clone(),
            pairs,
        })
    }

    pub fn label_evaluation(&mut self, checkpoint: usize, labels: &[Label]) -> Result<EvaluationSummary, SessionError> {
        let i = self.round(checkpoint)?;
        let round = &self.rounds[i].1;
        if labels.len() != round.pairs.len() {
            return Err(SessionError::LabelCount {
                expected: round.pairs.len(),
                got: labels.len(),
            });
        }
        let summary = summarize(checkpoint, &round.learned_left, labels);
        if let Some(f) = self.log.as_mut() {
            write_line(
                f,
                &ServiceLine::EvaluationLabels {
                    checkpoint,
                    labels,
                    summary: &summary,
                },
            )?;
        }
        Ok(summary)
    }
}

fn write_line<T: Serialize>(f: &mut File, value: &T) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(std::io::Error::other)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.flush()
}
