//! Regret metrics and simulated-user experiments.

use crate::elicit::{
    run_elicitation, ElicitConfig, ElicitError, InstanceSelection, Normalization, Puzzle, Scheme, Strategy,
};
use crate::explain::{CostModel, ExplainError, Explainer, ExplanationStep};
use crate::model::{load_logic_grid, load_sudoku, Instance, ModelError};
use crate::oracle::{sample_oracle_with, OracleSpec, OracleUser};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Elicit(#[from] ElicitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("optimal step has zero utility under the true weights")]
    ZeroUtility,
    #[error("negative regret {0}")]
    NegativeRegret(f64),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("invalid experiment config: {0}")]
    Config(String),
}

fn dot(w: &[f64], phi: &[i64]) -> f64 {
    w.iter().zip(phi).map(|(w, &x)| w * x as f64).sum()
}

/// Relative regret of `y` against the true optimum `y_star` under `w_star`.
pub fn step_regret(w_star: &[f64], y: &ExplanationStep, y_star: &ExplanationStep) -> Result<f64, EvalError> {
    let best = dot(w_star, &y_star.features);
    if best <= 0.0 {
        return Err(EvalError::ZeroUtility);
    }
    let r = (dot(w_star, &y.features) - best) / best;
    // the optimizer compares objectives with a small tolerance
    if r < -1e-9 {
        return Err(EvalError::NegativeRegret(r));
    }
    Ok(r.max(0.0))
}

/// Regret of the step chosen under cost weights `w` on raw features.
pub fn relative_regret(ex: &mut Explainer, inst: &Instance, w_star: &[f64], w: &[f64]) -> Result<f64, EvalError> {
    let y = ex.optimal_step(inst, &CostModel::Features(w.to_vec()))?;
    let y_star = ex.optimal_step(inst, &CostModel::Features(w_star.to_vec()))?;
    step_regret(w_star, &y, &y_star)
}

/// Mean relative regret over the states visited by the reference sequence
/// `e_star`, each state adding the facts explained so far.
pub fn sequential_regret(
    ex: &mut Explainer,
    inst: &Instance,
    e_star: &[ExplanationStep],
    w_star: &[f64],
    w: &[f64],
) -> Result<f64, EvalError> {
    if e_star.is_empty() {
        return Ok(0.0);
    }
    let mut state = inst.clone();
    let mut total = 0.0;
    for y_star in e_star {
        let y = ex.optimal_step(&state, &CostModel::Features(w.to_vec()))?;
        total += step_regret(w_star, &y, y_star)?;
        state.reveal(y_star.target_fact(&inst.csp));
    }
    Ok(total / e_star.len() as f64)
}

/// Loads puzzles from files: `.lgp` files hold one logic grid each, anything
/// else one Sudoku grid per non-empty line (`#` starts a comment).
pub fn load_puzzles(path: &Path) -> Result<Vec<Puzzle>, EvalError> {
    let io = |e: std::io::Error| EvalError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("puzzle").to_string();
    if path.extension().is_some_and(|e| e == "lgp") {
        let instance = load_logic_grid(&std::fs::read_to_string(path).map_err(io)?)?;
        return Ok(vec![Puzzle { id: stem, instance }]);
    }
    let text = std::fs::read_to_string(path).map_err(io)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let instance = load_sudoku(line).map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            msg: format!("line {}: {e}", n + 1),
        })?;
        out.push(Puzzle {
            id: format!("{stem}:{}", n + 1),
            instance,
        });
    }
    Ok(out)
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Baseline, Strategy::NonDomination]
}

fn default_normalizations() -> Vec<Normalization> {
    Normalization::ALL.to_vec()
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::NoWeights]
}

fn default_selections() -> Vec<InstanceSelection> {
    vec![InstanceSelection::Online]
}

fn default_oracles() -> usize {
    10
}

fn default_runs() -> usize {
    5
}

fn default_iterations() -> usize {
    100
}

fn default_holdout() -> usize {
    5
}

/// One learner setup of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub strategy: Strategy,
    pub normalization: Normalization,
    pub scheme: Scheme,
    #[serde(default = "default_selection")]
    pub selection: InstanceSelection,
    #[serde(default)]
    pub eta: Option<f64>,
}

fn default_selection() -> InstanceSelection {
    InstanceSelection::Online
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Puzzle files, relative to the config file.
    pub puzzles: Vec<PathBuf>,
    /// Puzzles held out for evaluation; the rest are used for training.
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_normalizations")]
    pub normalizations: Vec<Normalization>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_selections")]
    pub selections: Vec<InstanceSelection>,
    /// Learning rates to try; empty uses the tuned default of each cell.
    #[serde(default)]
    pub etas: Vec<f64>,
    /// Extra cells outside the cartesian grid.
    #[serde(default)]
    pub cells: Vec<Cell>,
    #[serde(default = "default_oracles")]
    pub oracles: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn grid(&self) -> Vec<Cell> {
        let etas: Vec<Option<f64>> = if self.etas.is_empty() {
            vec![None]
        } else {
            self.etas.iter().map(|&e| Some(e)).collect()
        };
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &normalization in &self.normalizations {
                for &scheme in &self.schemes {
                    for &selection in &self.selections {
                        for &eta in &etas {
                            out.push(Cell {
                                strategy,
                                normalization,
                                scheme,
                                selection,
                                eta,
                            });
                        }
                    }
                }
            }
        }
        for c in &self.cells {
            if !out.contains(c) {
                out.push(*c);
            }
        }
        out
    }

    pub fn oracle_seed(&self, k: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(k as u64)
    }

    pub fn run_seed(&self, k: usize, r: usize) -> u64 {
        self.oracle_seed(k).wrapping_mul(7919).wrapping_add(r as u64 + 1)
    }
}

/// Summary statistics of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub min: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        Some(Summary {
            n,
            mean,
            std: var.sqrt(),
            median: quantile(&v, 0.5),
            p25: quantile(&v, 0.25),
            p75: quantile(&v, 0.75),
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub strategy: Strategy,
    pub normalization: Normalization,
    pub scheme: Scheme,
    pub selection: InstanceSelection,
    pub eta: f64,
    pub oracle_seed: u64,
    pub run_seed: u64,
    pub puzzle: String,
    pub seq_regret: f64,
    pub mean_query_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub eta: f64,
    pub regret: Option<Summary>,
    pub mean_query_time_s: f64,
    pub completed_runs: usize,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub cells: Vec<CellReport>,
    pub rows: Vec<Row>,
}

impl RegretReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn cell(&self, cell: &Cell) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.cell == *cell)
    }
}

/// Trains under `cell` for every (oracle, run) pair and scores the learned
/// weights on the held-out puzzles.
pub struct Experiment {
    pub config: ExperimentConfig,
    train: Vec<Puzzle>,
    eval: Vec<Puzzle>,
    explainers: Vec<Explainer>,
    e_star: HashMap<(usize, usize), Vec<ExplanationStep>>,
}

impl Experiment {
    /// Loads the puzzle files, resolving paths against `base`.
    pub fn load(config: ExperimentConfig, base: &Path) -> Result<Self, EvalError> {
        let mut puzzles = Vec::new();
        for p in &config.puzzles {
            puzzles.extend(load_puzzles(&base.join(p))?);
        }
        Self::new(config, puzzles)
    }

    pub fn new(config: ExperimentConfig, mut puzzles: Vec<Puzzle>) -> Result<Self, EvalError> {
        puzzles.retain(|p| !p.instance.targets.is_empty());
        if config.holdout == 0 || config.holdout >= puzzles.len() {
            return Err(EvalError::Config(format!(
                "holdout must leave training puzzles: {} of {} usable puzzles",
                config.holdout,
                puzzles.len()
            )));
        }
        puzzles.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let train = puzzles.split_off(config.holdout);
        let eval = puzzles;
        let explainers = eval.iter().map(|p| Explainer::new(p.instance.csp.clone())).collect();
        Ok(Experiment {
            config,
            train,
            eval,
            explainers,
            e_star: HashMap::new(),
        })
    }

    pub fn training_puzzles(&self) -> &[Puzzle] {
        &self.train
    }

    pub fn evaluation_puzzles(&self) -> &[Puzzle] {
        &self.eval
    }

    fn oracle(&self, k: usize, r: usize) -> OracleUser {
        let o = sample_oracle_with(self.config.oracle_seed(k), self.config.oracle);
        OracleUser::new(o.w_star, self.config.oracle, self.config.run_seed(k, r))
    }

    /// The true optimal sequence for oracle `k` on evaluation puzzle `j`.
    fn reference(&mut self, k: usize, j: usize, w_star: &[f64]) -> Result<Vec<ExplanationStep>, EvalError> {
        if let Some(s) = self.e_star.get(&(k, j)) {
            return Ok(s.clone());
        }
        let seq = self.explainers[j].sequence(&self.eval[j].instance, &CostModel::Features(w_star.to_vec()))?;
        self.e_star.insert((k, j), seq.clone());
        Ok(seq)
    }

    /// Sequential regret of cost weights `w` for oracle `k` per evaluation
    /// puzzle.
    pub fn score(&mut self, k: usize, w_star: &[f64], w: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::with_capacity(self.eval.len());
        for j in 0..self.eval.len() {
            let e_star = self.reference(k, j, w_star)?;
            out.push(sequential_regret(
                &mut self.explainers[j],
                &self.eval[j].instance,
                &e_star,
                w_star,
                w,
            )?);
        }
        Ok(out)
    }

    fn elicit_config(&self, cell: &Cell, seed: u64) -> ElicitConfig {
        ElicitConfig {
            strategy: cell.strategy,
            scheme: cell.scheme,
            normalization: cell.normalization,
            selection: cell.selection,
            eta: cell.eta,
            iterations: self.config.iterations,
            seed,
            initial_weights: None,
        }
    }

    pub fn run_cell(&mut self, cell: &Cell) -> (CellReport, Vec<Row>) {
        let kind = self.train[0].instance.csp.kind;
        let eta = self.elicit_config(cell, 0).eta_for(kind);
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        let mut times = Vec::new();
        let mut completed = 0;
        for k in 0..self.config.oracles {
            for r in 0..self.config.runs {
                let mut oracle = self.oracle(k, r);
                let run_seed = self.config.run_seed(k, r);
                let cfg = self.elicit_config(cell, run_seed);
                let result = run_elicitation(self.train.clone(), cfg, &mut oracle)
                    .map_err(|f| EvalError::from(f.error))
                    .and_then(|run| {
                        let regrets = self.score(k, &oracle.w_star, &run.cost_weights)?;
                        Ok((run.query_seconds, regrets))
                    });
                match result {
                    Ok((secs, regrets)) => {
                        completed += 1;
                        let mean_t = if secs.is_empty() {
                            0.0
                        } else {
                            secs.iter().sum::<f64>() / secs.len() as f64
                        };
                        times.extend(secs);
                        for (j, reg) in regrets.into_iter().enumerate() {
                            rows.push(Row {
                                strategy: cell.strategy,
                                normalization: cell.normalization,
                                scheme: cell.scheme,
                                selection: cell.selection,
                                eta,
                                oracle_seed: self.config.oracle_seed(k),
                                run_seed,
                                puzzle: self.eval[j].id.clone(),
                                seq_regret: reg,
                                mean_query_time_s: mean_t,
                            });
                        }
                    }
                    Err(e) => {
                        log::warn!("oracle {k} run {r} failed: {e}");
                        failures.push(format!("oracle {k} run {r}: {e}"));
                    }
                }
            }
        }
        let regrets: Vec<f64> = rows.iter().map(|r| r.seq_regret).collect();
        let report = CellReport {
            cell: *cell,
            eta,
            regret: Summary::of(&regrets),
            mean_query_time_s: if times.is_empty() {
                0.0
            } else {
                times.iter().sum::<f64>() / times.len() as f64
            },
            completed_runs: completed,
            failures,
        };
        (report, rows)
    }

    pub fn run(&mut self) -> RegretReport {
        let mut report = RegretReport {
            cells: Vec::new(),
            rows: Vec::new(),
        };
        for cell in self.config.grid() {
            log::info!("running {cell:?}");
            let (c, rows) = self.run_cell(&cell);
            report.cells.push(c);
            report.rows.extend(rows);
        }
        report
    }
}

/// Loads a TOML experiment config and runs its whole grid.
pub fn run_experiment(config_path: &Path) -> Result<RegretReport, EvalError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| EvalError::Io {
        path: config_path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let config = ExperimentConfig::from_toml(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    Ok(Experiment::load(config, base)?.run())
}
