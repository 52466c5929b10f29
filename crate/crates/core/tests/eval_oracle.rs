mod common;

use common::{pool4, sudoku_muses};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepwise_core::elicit::{InstanceSelection, Normalization, Puzzle, Scheme, Strategy};
use stepwise_core::eval::{
    relative_regret, sequential_regret, Cell, Experiment, ExperimentConfig, Summary,
};
use stepwise_core::explain::{CostModel, ExplContext, Explainer, NUM_FEATURES};
use stepwise_core::model::{load_sudoku, Instance};
use stepwise_core::oracle::sample_weights;

fn dot(w: &[f64], phi: &[i64]) -> f64 {
    w.iter().zip(phi).map(|(a, &b)| a * b as f64).sum()
}

/// Feature vectors of every MUS for every target of a small state.
fn all_steps(inst: &Instance) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for &t in &inst.targets {
        let ctx = ExplContext::new(inst.csp.clone(), &inst.given, t);
        out.extend(sudoku_muses(&ctx).iter().map(|m| ctx.features_of(m)));
    }
    out
}

/// Range of regrets over the steps tied for best under `w`.
fn brute_regret(steps: &[Vec<i64>], w_star: &[f64], w: &[f64]) -> (f64, f64) {
    let best_w = steps.iter().map(|p| dot(w, p)).fold(f64::INFINITY, f64::min);
    let best = steps.iter().map(|p| dot(w_star, p)).fold(f64::INFINITY, f64::min);
    steps
        .iter()
        .filter(|p| dot(w, p) <= best_w + 1e-9 * best_w.abs().max(1.0))
        .map(|p| (dot(w_star, p) - best) / best)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

fn small_puzzles(max_given: usize) -> Vec<Instance> {
    pool4()
        .into_iter()
        .map(|g| load_sudoku(g).unwrap())
        .filter(|i| i.given.len() <= max_given)
        .collect()
}

#[test]
fn relative_regret_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let insts = small_puzzles(7);
    assert!(insts.len() >= 2);
    for inst in insts.iter().take(2) {
        let steps = all_steps(inst);
        let mut ex = Explainer::new(inst.csp.clone());
        for _ in 0..6 {
            let w_star = sample_weights(&mut rng, NUM_FEATURES);
            let w = sample_weights(&mut rng, NUM_FEATURES);
            let got = relative_regret(&mut ex, inst, &w_star, &w).unwrap();
            let (lo, hi) = brute_regret(&steps, &w_star, &w);
            assert!(got >= lo - 1e-9 && got <= hi + 1e-9, "{got} not in [{lo}, {hi}]");
            assert!(got >= 0.0);
            let own = relative_regret(&mut ex, inst, &w_star, &w_star).unwrap();
            assert!(own.abs() < 1e-9);
        }
    }
}

#[test]
fn three_step_sequential_regret_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let base = small_puzzles(6).into_iter().next().expect("a six-clue puzzle");
    let mut targets = base.targets.clone();
    let picked: Vec<_> = (0..3).map(|_| targets.remove(rng.gen_range(0..targets.len()))).collect();
    let inst = Instance {
        csp: base.csp.clone(),
        given: base.given.clone(),
        targets: picked,
    };
    let mut ex = Explainer::new(inst.csp.clone());
    for _ in 0..3 {
        let w_star = sample_weights(&mut rng, NUM_FEATURES);
        let w = sample_weights(&mut rng, NUM_FEATURES);
        let e_star = ex.sequence(&inst, &CostModel::Features(w_star.clone())).unwrap();
        assert_eq!(e_star.len(), 3);
        let (mut lo, mut hi) = (0.0, 0.0);
        let mut state = inst.clone();
        for y_star in &e_star {
            let steps = all_steps(&state);
            let best = steps.iter().map(|p| dot(&w_star, p)).fold(f64::INFINITY, f64::min);
            assert!((dot(&w_star, &y_star.features) - best).abs() < 1e-9 * best);
            let (l, h) = brute_regret(&steps, &w_star, &w);
            lo += l / 3.0;
            hi += h / 3.0;
            state.reveal(y_star.target_fact(&inst.csp));
        }
        let got = sequential_regret(&mut ex, &inst, &e_star, &w_star, &w).unwrap();
        assert!(got >= lo - 1e-9 && got <= hi + 1e-9, "{got} not in [{lo}, {hi}]");
    }
}

#[test]
fn scaled_true_weights_have_no_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for g in pool4().into_iter().take(4) {
        let inst = load_sudoku(g).unwrap();
        let mut ex = Explainer::new(inst.csp.clone());
        let w_star = sample_weights(&mut rng, NUM_FEATURES);
        let e_star = ex.sequence(&inst, &CostModel::Features(w_star.clone())).unwrap();
        for c in [0.01, 1.0, 37.0] {
            let w: Vec<f64> = w_star.iter().map(|x| x * c).collect();
            let r = sequential_regret(&mut ex, &inst, &e_star, &w_star, &w).unwrap();
            assert!(r.abs() < 1e-9, "c = {c}: {r}");
        }
        let other = sample_weights(&mut rng, NUM_FEATURES);
        assert!(sequential_regret(&mut ex, &inst, &e_star, &w_star, &other).unwrap() >= 0.0);
    }
}

fn puzzles(n: usize) -> Vec<Puzzle> {
    pool4()
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, g)| Puzzle {
            id: format!("p{i}"),
            instance: load_sudoku(g).unwrap(),
        })
        .collect()
}

#[test]
fn tiny_experiment_produces_consistent_report() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        puzzles = []
        holdout = 1
        oracles = 1
        runs = 1
        iterations = 1
        strategies = ["choice_perceptron", "non_domination"]
        normalizations = ["none", "local"]
        schemes = ["no_weights"]
        "#,
    )
    .unwrap();
    let mut exp = Experiment::new(cfg, puzzles(4)).unwrap();
    assert_eq!(exp.evaluation_puzzles().len(), 1);
    assert_eq!(exp.training_puzzles().len(), 3);
    let report = exp.run();
    assert_eq!(report.cells.len(), 4);
    assert_eq!(report.rows.len(), 4);
    for c in &report.cells {
        assert!(c.failures.is_empty());
        let rows: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| {
                r.strategy == c.cell.strategy && r.normalization == c.cell.normalization && r.scheme == c.cell.scheme
            })
            .map(|r| r.seq_regret)
            .collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(c.regret, Summary::of(&rows));
        assert!(rows[0] >= 0.0);
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "strategy,normalization,scheme,selection,eta,oracle_seed,run_seed,puzzle,seq_regret,mean_query_time_s"
    );
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn same_seed_same_report() {
    let cell = Cell {
        strategy: Strategy::NonDomination,
        normalization: Normalization::Local,
        scheme: Scheme::Ucb,
        selection: InstanceSelection::Online,
        eta: None,
    };
    let cfg = ExperimentConfig {
        holdout: 2,
        oracles: 2,
        runs: 1,
        iterations: 5,
        cells: vec![cell],
        strategies: vec![],
        seed: 4,
        ..ExperimentConfig::from_toml("puzzles = []").unwrap()
    };
    let a = Experiment::new(cfg.clone(), puzzles(6)).unwrap().run_cell(&cell).1;
    let b = Experiment::new(cfg, puzzles(6)).unwrap().run_cell(&cell).1;
    let strip = |rows: Vec<stepwise_core::eval::Row>| -> Vec<(String, u64, f64)> {
        rows.into_iter().map(|r| (r.puzzle, r.run_seed, r.seq_regret)).collect()
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"));
    for (name, cells, iterations) in [("smoke.toml", 10, 30), ("desk.toml", 10, 100), ("schemes.toml", 9, 100)] {
        let cfg = ExperimentConfig::from_toml(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap();
        assert_eq!(cfg.grid().len(), cells, "{name}");
        assert_eq!(cfg.iterations, iterations);
        for p in &cfg.puzzles {
            assert!(dir.join(p).exists(), "{name}: {}", p.display());
        }
    }
}
