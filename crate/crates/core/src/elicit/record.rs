use super::config::ElicitConfig;
use super::norm::NormState;
use super::{ElicitError, ElicitationState, Label};
use crate::explain::{ExplanationStep, FactRef};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub config: ElicitConfig,
    pub puzzle_ids: Vec<String>,
    pub eta: f64,
    pub initial_weights: Vec<f64>,
    /// Normalization bounds before the first query.
    pub initial_norm: NormState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub puzzle: String,
    pub given: Vec<FactRef>,
    pub targets: Vec<FactRef>,
    pub y1: ExplanationStep,
    pub y2: ExplanationStep,
    /// The non-domination constraint had to be dropped for this pair.
    pub relaxed: bool,
    pub label: Label,
    /// Weights after the update.
    pub weights: Vec<f64>,
    /// Normalization upper bounds after this pair.
    pub ub: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

/// One line of the JSON-lines export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordLine {
    Header(SessionHeader),
    Iteration(IterationRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub header: SessionHeader,
    pub iterations: Vec<IterationRecord>,
}

impl SessionRecord {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &RecordLine::Header(self.header.clone()))?;
        out.write_all(b"\n")?;
        for it in &self.iterations {
            serde_json::to_writer(&mut out, &RecordLine::Iteration(it.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a JSON-lines log. Lines of other types (written by callers that
    /// share the file) are skipped.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<SessionRecord, ElicitError> {
        let mut header = None;
        let mut iterations = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| ElicitError::Record(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| ElicitError::Record(format!("line {}: {e}", n + 1)))?;
            let kind = value.get("type").and_then(|v| v.as_str()).unwrap_or("");
            if kind != "header" && kind != "iteration" {
                continue;
            }
            match serde_json::from_value(value).map_err(|e| ElicitError::Record(format!("line {}: {e}", n + 1)))? {
                RecordLine::Header(h) => header = Some(h),
                RecordLine::Iteration(it) => iterations.push(it),
            }
        }
        let header = header.ok_or_else(|| ElicitError::Record("missing header line".into()))?;
        Ok(SessionRecord { header, iterations })
    }

    pub fn final_weights(&self) -> &[f64] {
        self.iterations
            .last()
            .map(|it| it.weights.as_slice())
            .unwrap_or(&self.header.initial_weights)
    }
}

/// Re-applies every logged label to a fresh state and checks each logged
/// weight snapshot bit for bit. Returns the replayed final state.
pub fn replay(record: &SessionRecord) -> Result<ElicitationState, ElicitError> {
    let h = &record.header;
    let mut state = ElicitationState::new(h.initial_weights.clone(), h.initial_norm.clone());
    for it in &record.iterations {
        if it.t != state.t {
            return Err(ElicitError::Replay {
                t: it.t,
                msg: format!("expected iteration {}", state.t),
            });
        }
        state.observe_pair(&it.y1.features, &it.y2.features);
        state.apply_label(&it.y1.features, &it.y2.features, it.label, h.eta);
        let same = state.w.len() == it.weights.len()
            && state.w.iter().zip(&it.weights).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(ElicitError::Replay {
                t: it.t,
                msg: format!("weights {:?} differ from logged {:?}", state.w, it.weights),
            });
        }
    }
    Ok(state)
}
