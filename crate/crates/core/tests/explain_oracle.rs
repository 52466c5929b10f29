mod common;

use common::{close, objective, pool4, sudoku_muses};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use stepwise_core::explain::{features, CostModel, ExplContext, Explainer, NUM_FEATURES};
use stepwise_core::model::{load_sudoku, Fact, Instance};
use stepwise_core::opt::{Deviation, SideConstraints};

fn small_instances() -> Vec<Instance> {
    pool4()
        .into_iter()
        .map(|l| load_sudoku(l).unwrap())
        .filter(|i| i.given.len() + i.csp.groups.len() + 1 <= 18)
        .collect()
}

fn random_weights(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..NUM_FEATURES).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect()
}

/// Best brute-force MUS under `costs` among those accepted by `keep`.
fn brute_best(
    ctx: &ExplContext,
    muses: &[Vec<usize>],
    costs: &[f64],
    dev: Option<(&[i64], &[f64], f64)>,
    keep: impl Fn(&[i64]) -> bool,
) -> Option<((f64, f64), Vec<usize>)> {
    let mut best: Option<((f64, f64), Vec<usize>)> = None;
    for m in muses {
        if !keep(&ctx.features_of(m)) {
            continue;
        }
        let s = objective(ctx, m, costs, dev);
        let better = match &best {
            None => true,
            Some((b, _)) => s.0 < b.0 - 1e-9 || (close(s.0, b.0) && s.1 < b.1 - 1e-9 * 1f64.max(b.1.abs())),
        };
        if better {
            best = Some((s, m.clone()));
        }
    }
    best
}

#[test]
fn ocus_matches_enumeration_over_all_muses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let instances = small_instances();
    let mut checked = 0;
    for inst in instances.iter().cycle().take(25) {
        let target = inst.targets[rng.gen_range(0..inst.targets.len())];
        let mut ex = Explainer::new(inst.csp.clone());
        let ctx = ex.context(&inst.given, target).unwrap();
        let muses = sudoku_muses(&ctx);
        for costs in [CostModel::Unit, CostModel::Features(random_weights(&mut rng))] {
            let item_costs = ctx.item_costs(&costs);
            let (score, step) = ex.ocus(&inst.given, target, &costs, &SideConstraints::default()).unwrap();
            let (want, _) = brute_best(&ctx, &muses, &item_costs, None, |_| true).unwrap();
            assert!(close(score.secondary, want.1), "{} vs {}", score.secondary, want.1);
            let items = ctx.items_of(&step).unwrap();
            assert!(muses.contains(&items));
            assert_eq!(features(&inst.csp, &step), step.features);
            checked += 1;
        }
    }
    assert_eq!(checked, 50);
}

#[test]
fn side_constraints_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for inst in small_instances().iter().take(8) {
        let target = inst.targets[rng.gen_range(0..inst.targets.len())];
        let mut ex = Explainer::new(inst.csp.clone());
        let ctx = ex.context(&inst.given, target).unwrap();
        let muses = sudoku_muses(&ctx);
        let w = random_weights(&mut rng);
        let costs = CostModel::Features(w.clone());
        let item_costs = ctx.item_costs(&costs);
        let (_, y1) = ex.ocus(&inst.given, target, &costs, &SideConstraints::default()).unwrap();
        let r = y1.features.clone();

        // non-domination plus inequality
        let side = SideConstraints {
            nondomination: Some(r.clone()),
            inequality: Some(r.clone()),
            deviation: None,
        };
        let keep = |phi: &[i64]| phi != r.as_slice() && phi.iter().zip(&r).any(|(a, b)| a < b);
        let want = brute_best(&ctx, &muses, &item_costs, None, keep);
        match ex.ocus(&inst.given, target, &costs, &side) {
            Ok((s, step)) => {
                let (ws, _) = want.expect("solver found a step the enumeration missed");
                assert!(close(s.secondary, ws.1));
                assert!(keep(&step.features));
            }
            Err(_) => assert!(want.is_none()),
        }

        // diversification with a mix of infinite and finite weights
        for gamma in [1.0, 0.5] {
            let u: Vec<f64> = (0..NUM_FEATURES)
                .map(|i| if i % 3 == 0 { f64::INFINITY } else { rng.gen_range(0.1..2.0) })
                .collect();
            let scaled: Vec<f64> = w.iter().map(|x| x * (1.0 - gamma)).collect();
            let costs = CostModel::Features(scaled);
            let item_costs = ctx.item_costs(&costs);
            let side = SideConstraints {
                nondomination: None,
                inequality: Some(r.clone()),
                deviation: Some(Deviation {
                    reference: r.clone(),
                    weights: u.clone(),
                    gamma,
                }),
            };
            let dev = Some((r.as_slice(), u.as_slice(), gamma));
            let want = brute_best(&ctx, &muses, &item_costs, dev, |phi| phi != r.as_slice());
            let (s, step) = ex.ocus(&inst.given, target, &costs, &side).unwrap();
            let (ws, _) = want.unwrap();
            assert!(close(s.primary, ws.0) && close(s.secondary, ws.1), "{s:?} vs {ws:?}");
            let items = ctx.items_of(&step).unwrap();
            assert!(muses.contains(&items));
        }
    }
}

#[test]
fn smallest_step_has_fewest_items() {
    for inst in small_instances().iter().take(6) {
        let mut ex = Explainer::new(inst.csp.clone());
        for &t in inst.targets.iter().take(4) {
            let ctx = ex.context(&inst.given, t).unwrap();
            let smallest = sudoku_muses(&ctx).iter().map(|m| m.len() - 1).min().unwrap();
            assert_eq!(ex.ses(&inst.given, t).unwrap().size(), smallest);
        }
    }
}

fn brute_optimal_step(inst: &Instance, w: &[f64]) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    let mut targets = inst.targets.clone();
    targets.sort();
    for t in targets {
        let ctx = ExplContext::new(inst.csp.clone(), &inst.given, t);
        let costs = ctx.item_costs(&CostModel::Features(w.to_vec()));
        let (s, _) = brute_best(&ctx, &sudoku_muses(&ctx), &costs, None, |_| true).unwrap();
        if best.is_none_or(|(_, b)| s.1 < b - 1e-9 * b.abs().max(1.0)) {
            best = Some((t.var, s.1));
        }
    }
    best.unwrap()
}

#[test]
fn optimal_step_and_greedy_sequence_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = small_instances().into_iter().find(|i| i.given.len() == 4).unwrap();
    let w = random_weights(&mut rng);
    let mut ex = Explainer::new(inst.csp.clone());
    let seq = ex.sequence(&inst, &CostModel::Features(w.clone())).unwrap();
    assert_eq!(seq.len(), inst.targets.len());
    // the first two states still fit the enumeration
    let mut state = inst.clone();
    for step in seq.iter().take(2) {
        let (var, cost) = brute_optimal_step(&state, &w);
        let ctx = ExplContext::new(state.csp.clone(), &state.given, step.target_fact(&state.csp));
        let items = ctx.items_of(step).unwrap();
        let got: f64 = ctx.item_costs(&CostModel::Features(w.clone())).iter().enumerate().filter(|(j, _)| items.contains(j)).map(|(_, c)| c).sum();
        assert!(close(got, cost));
        assert_eq!(step.target.var, var);
        state.reveal(step.target_fact(&state.csp));
    }
}

#[test]
fn sequence_steps_are_muses_and_partition_targets() {
    let inst = load_sudoku("1234|3..2|2143|4.21").unwrap();
    assert_eq!(inst.targets.len(), 3);
    let mut ex = Explainer::new(inst.csp.clone());
    let seq = ex.sequence(&inst, &CostModel::Unit).unwrap();
    let mut derived: Vec<Fact> = seq.iter().map(|s| s.target_fact(&inst.csp)).collect();
    derived.sort();
    assert_eq!(derived, inst.targets);
    let mut given = inst.given.clone();
    for step in &seq {
        let ctx = ExplContext::new(Arc::clone(&inst.csp), &given, step.target_fact(&inst.csp));
        let items = ctx.items_of(step).expect("step only uses known facts");
        assert!(ex.is_mus(&ctx, &items));
        given.push(step.target_fact(&inst.csp));
    }
}

#[test]
fn scaling_weights_keeps_the_optimal_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in small_instances().iter().take(5) {
        let w = random_weights(&mut rng);
        let scaled: Vec<f64> = w.iter().map(|x| x * 7.5).collect();
        let mut ex = Explainer::new(inst.csp.clone());
        let a = ex.optimal_step(inst, &CostModel::Features(w)).unwrap();
        let b = ex.optimal_step(inst, &CostModel::Features(scaled)).unwrap();
        assert_eq!(a, b);
    }
}
