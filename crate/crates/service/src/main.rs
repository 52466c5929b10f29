use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use stepwise_core::elicit::{replay, SessionRecord};
use stepwise_core::eval::{load_puzzles, run_experiment};
use stepwise_core::explain::{feature_names, CostModel, Explainer, NUM_FEATURES};
use stepwise_service::api::{router, AppState};

#[derive(Parser)]
#[command(name = "stepwise", version, about = "Step-wise puzzle explanations with preference learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated-user experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Print the optimal explanation sequence of a puzzle under given weights.
    Explain {
        /// Puzzle file: one Sudoku grid per line, or a `.lgp` logic grid.
        puzzle: PathBuf,
        /// JSON array with one cost weight per feature; unit costs if absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Line of a multi-puzzle file to use (0-based among puzzles).
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run the labeling HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Puzzle files offered as sets named by file stem; the first is the default.
        #[arg(long = "puzzles", default_value = "data/sudoku/pool4.txt")]
        puzzles: Vec<PathBuf>,
        /// Where session logs are written.
        #[arg(long, default_value = "sessions")]
        sessions: PathBuf,
    },
    /// Re-apply a session log and check every weight snapshot.
    Replay { session_file: PathBuf },
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run every cell of a TOML experiment grid.
    Run {
        config: PathBuf,
        /// Per-run CSV output; defaults to the config path with a `.csv` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Experiment {
            action: ExperimentAction::Run { config, out },
        } => experiment(&config, out),
        Command::Explain { puzzle, weights, index } => explain(&puzzle, weights.as_deref(), index),
        Command::Serve {
            port,
            puzzles,
            sessions,
        } => serve(port, &puzzles, sessions),
        Command::Replay { session_file } => replay_file(&session_file),
    }
}

fn experiment(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let report = run_experiment(config)?;
    let out = out.unwrap_or_else(|| config.with_extension("csv"));
    let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    report.write_csv(file)?;
    println!(
        "{:<16} {:<11} {:<10} {:<15} {:>6} {:>5} {:>8} {:>8} {:>8} {:>10}",
        "strategy", "norm", "scheme", "selection", "eta", "n", "mean", "std", "median", "query_s"
    );
    for c in &report.cells {
        let (n, mean, std, median) = c
            .regret
            .map(|s| (s.n, s.mean, s.std, s.median))
            .unwrap_or((0, f64::NAN, f64::NAN, f64::NAN));
        println!(
            "{:<16} {:<11} {:<10} {:<15} {:>6} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>10.5}",
            name(&c.cell.strategy),
            name(&c.cell.normalization),
            name(&c.cell.scheme),
            name(&c.cell.selection),
            c.eta,
            n,
            mean,
            std,
            median,
            c.mean_query_time_s
        );
        for f in &c.failures {
            println!("  failed: {f}");
        }
    }
    println!("rows written to {}", out.display());
    Ok(())
}

fn name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn explain(path: &Path, weights: Option<&Path>, index: usize) -> Result<()> {
    let puzzles = load_puzzles(path)?;
    let Some(p) = puzzles.get(index) else {
        bail!("{} holds {} puzzles", path.display(), puzzles.len());
    };
    let costs = match weights {
        Some(w) => {
            let text = std::fs::read_to_string(w).with_context(|| format!("reading {}", w.display()))?;
            let w: Vec<f64> = serde_json::from_str(&text).context("weights must be a JSON array of numbers")?;
            if w.len() != NUM_FEATURES || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                bail!("expected {NUM_FEATURES} non-negative weights, got {w:?}");
            }
            CostModel::Features(w)
        }
        None => CostModel::Unit,
    };
    let inst = &p.instance;
    let csp = &inst.csp;
    let names = feature_names(csp);
    let mut ex = Explainer::new(csp.clone());
    let seq = ex.sequence(inst, &costs)?;
    println!("{}: {} steps", p.id, seq.len());
    for (k, step) in seq.iter().enumerate() {
        let target = step.target_fact(csp);
        let facts: Vec<String> = step
            .facts
            .iter()
            .map(|f| csp.describe_fact(&csp.fact(f.var, f.val).expect("valid fact")))
            .collect();
        let groups: Vec<&str> = step.groups.iter().map(|g| csp.groups[g.id].name.as_str()).collect();
        let active: Vec<String> = step
            .features
            .iter()
            .zip(names.iter())
            .filter(|(v, _)| **v != 0)
            .map(|(v, n)| format!("{n}={v}"))
            .collect();
        println!(
            "{:>3}. {}  <=  facts [{}]  constraints [{}]  ({})",
            k + 1,
            csp.describe_fact(&target),
            facts.join(", "),
            groups.join(", "),
            active.join(" ")
        );
    }
    Ok(())
}

fn serve(port: u16, files: &[PathBuf], sessions: PathBuf) -> Result<()> {
    let mut sets = BTreeMap::new();
    let mut default_set = None;
    for f in files {
        let stem = f
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("bad puzzle path {}", f.display()))?
            .to_string();
        let puzzles = load_puzzles(f)?;
        log::info!("puzzle set {stem}: {} puzzles", puzzles.len());
        default_set.get_or_insert_with(|| stem.clone());
        sets.insert(stem, puzzles);
    }
    let default_set = default_set.context("at least one puzzle file is needed")?;
    std::fs::create_dir_all(&sessions).with_context(|| format!("creating {}", sessions.display()))?;
    let state = Arc::new(AppState::new(sets, default_set, Some(sessions)));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

fn replay_file(path: &Path) -> Result<()> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let record = SessionRecord::read_jsonl(BufReader::new(file))?;
    let state = replay(&record)?;
    println!("{} labels replayed; every weight snapshot matches", record.iterations.len());
    println!("final weights: {:?}", state.w);
    Ok(())
}
