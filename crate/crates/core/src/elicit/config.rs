use super::norm::Normalization;
use crate::model::PuzzleKind;
use serde::{Deserialize, Serialize};

/// Whether the second query step must improve at least one feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[serde(alias = "choice_perceptron")]
    Baseline,
    NonDomination,
}

/// Per-feature diversification weights `u` for the second query step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    NoWeights,
    Learned,
    Ucb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSelection {
    Online,
    OfflineRandom,
    OfflineSes,
}

pub const ETA_GRID: [f64; 5] = [0.1, 0.5, 1.0, 5.0, 10.0];

fn default_iterations() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElicitConfig {
    pub strategy: Strategy,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_selection")]
    pub selection: InstanceSelection,
    /// Learning rate; `None` picks the tuned default for the puzzle family.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_weights: Option<Vec<f64>>,
}

fn default_scheme() -> Scheme {
    Scheme::NoWeights
}

fn default_normalization() -> Normalization {
    Normalization::None
}

fn default_selection() -> InstanceSelection {
    InstanceSelection::Online
}

impl ElicitConfig {
    /// Plain perceptron updates on raw features, no extra query constraints.
    pub fn choice_perceptron() -> Self {
        ElicitConfig {
            strategy: Strategy::Baseline,
            scheme: Scheme::NoWeights,
            normalization: Normalization::None,
            selection: InstanceSelection::Online,
            eta: None,
            iterations: default_iterations(),
            seed: 0,
            initial_weights: None,
        }
    }

    /// Non-domination, local normalization and UCB diversification.
    pub fn machop() -> Self {
        ElicitConfig {
            strategy: Strategy::NonDomination,
            scheme: Scheme::Ucb,
            normalization: Normalization::Local,
            ..Self::choice_perceptron()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "choice_perceptron" => Some(Self::choice_perceptron()),
            "machop" => Some(Self::machop()),
            _ => None,
        }
    }

    pub fn nondomination(&self) -> bool {
        self.strategy == Strategy::NonDomination
    }

    pub fn eta_for(&self, kind: PuzzleKind) -> f64 {
        self.eta
            .unwrap_or_else(|| default_eta(kind, self.strategy, self.normalization, self.scheme, self.selection))
    }

    pub fn validate(&self, p: usize) -> Result<(), String> {
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(format!("eta must be positive, got {eta}"));
            }
        }
        if let Some(w) = &self.initial_weights {
            if w.len() != p {
                return Err(format!("expected {p} initial weights, got {}", w.len()));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err("initial weights must be positive".into());
            }
        }
        Ok(())
    }
}

/// Tuned learning rates per puzzle family and learner setup.
pub fn default_eta(
    kind: PuzzleKind,
    strategy: Strategy,
    norm: Normalization,
    scheme: Scheme,
    selection: InstanceSelection,
) -> f64 {
    use InstanceSelection as Sel;
    use Normalization as N;
    let nd = strategy == Strategy::NonDomination;
    match kind {
        PuzzleKind::Sudoku { .. } => match norm {
            N::Default => {
                if nd {
                    0.5
                } else {
                    0.1
                }
            }
            N::None => 0.1,
            N::Cumulative => 0.5,
            N::Local if !nd => 0.5,
            N::Local => match (scheme, selection) {
                (Scheme::NoWeights, _) => 10.0,
                (Scheme::Learned, _) => 5.0,
                (Scheme::Ucb, Sel::Online) => 0.5,
                (Scheme::Ucb, _) => 10.0,
            },
        },
        PuzzleKind::LogicGrid => match norm {
            N::Default => {
                if nd {
                    0.5
                } else {
                    0.1
                }
            }
            N::None => 0.1,
            N::Cumulative => 10.0,
            N::Local if !nd => 0.1,
            N::Local => match scheme {
                Scheme::NoWeights => 5.0,
                Scheme::Learned => 0.1,
                Scheme::Ucb => 0.5,
            },
        },
    }
}
