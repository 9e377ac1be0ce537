use std::sync::Arc;

use hyplns::generators::{gen_mis, gen_sc, Family, SizeClass};
use hyplns::ilp::Direction;
use hyplns::lns::{allocate_budgets, run, BudgetMode, LnsConfig, LnsOutcome, LnsState, SelectionRule};
use hyplns::size_policy::{SizePolicy, SizePolicySpec};

fn nodes(initial: f64, step: f64, total: f64, max_steps: usize, seed: u64) -> LnsConfig {
    LnsConfig {
        initial_budget: initial,
        step_budget: step,
        total_budget: total,
        max_steps,
        budget_mode: BudgetMode::Nodes,
        seed,
        ..Default::default()
    }
}

fn pool_is_concatenated_streams(out: &LnsOutcome) -> bool {
    let streamed: Vec<_> = out.streams.iter().flatten().collect();
    streamed.len() == out.pool.len()
        && streamed
            .iter()
            .zip(out.pool.entries())
            .all(|(inc, e)| inc.assignment.values() == e.assignment.values() && inc.objective == e.objective)
}

#[test]
fn zero_steps_is_the_initial_solve() {
    let inst = gen_mis(60, 150, 4).unwrap();
    let out = run(&inst, &nodes(3.0, 5.0, 100.0, 0, 1)).unwrap();
    assert_eq!(out.steps, 0);
    assert_eq!(out.best_objective, out.initial_objective);
    assert_eq!(out.streams.len(), 1);
    assert!(pool_is_concatenated_streams(&out));
}

#[test]
fn traces_are_monotone_and_pool_matches_streams() {
    for seed in 0..6 {
        let inst = gen_mis(80, 240, seed).unwrap();
        let policy = if seed % 2 == 0 { SizePolicySpec::gaussian() } else { SizePolicySpec::Fixed { ratio: 0.3 } };
        let cfg = LnsConfig { size_policy: policy, ..nodes(2.0, 10.0, 300.0, 30, seed) };
        let out = run(&inst, &cfg).unwrap();
        assert!(out.trace.is_monotone(Direction::Maximize));
        assert!(pool_is_concatenated_streams(&out));
        assert_eq!(out.streams.len(), out.steps + 1);
        assert!(inst.is_feasible(&out.best));
        assert_eq!(inst.evaluate_objective(&out.best).unwrap(), out.best_objective);
        assert!(out.best_objective >= out.initial_objective);
    }
}

#[test]
fn node_budget_is_never_exceeded() {
    let inst = gen_mis(100, 300, 9).unwrap();
    for total in [5.0, 13.0, 50.0, 201.0] {
        let out = run(&inst, &nodes(4.0, 7.0, total, 10_000, 2)).unwrap();
        assert!(out.nodes_used <= total as u64, "{} > {total}", out.nodes_used);
        let step_nodes: u64 = out.step_log.iter().map(|r| r.nodes).sum();
        assert!(out.step_log.iter().all(|r| r.nodes <= 7));
        assert!(step_nodes <= out.nodes_used);
    }
}

#[test]
fn node_mode_is_deterministic() {
    let inst = gen_sc(60, 40, 3).unwrap();
    let cfg = LnsConfig { size_policy: SizePolicySpec::beta(), ..nodes(3.0, 6.0, 150.0, 40, 77) };
    let a = run(&inst, &cfg).unwrap();
    let b = run(&inst, &cfg).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.step_log, b.step_log);
    let strip = |o: &LnsOutcome| o.trace.points.iter().map(|p| (p.nodes_used, p.step, p.objective)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    let c = run(&inst, &LnsConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.step_log, c.step_log);
}

#[test]
fn search_improves_on_the_initial_solution() {
    let inst = gen_mis(200, 600, 2024).unwrap();
    let mut strictly = 0;
    for seed in 0..10 {
        let out = run(&inst, &nodes(1.0, 20.0, 600.0, 100, seed)).unwrap();
        assert!(out.best_objective >= out.initial_objective);
        if out.best_objective > out.initial_objective {
            strictly += 1;
        }
    }
    assert!(strictly >= 8, "improved in only {strictly}/10 runs");
}

#[test]
fn uniform_selection_runs() {
    let inst = gen_mis(50, 120, 5).unwrap();
    let cfg = LnsConfig { selection: SelectionRule::Uniform, ..nodes(2.0, 5.0, 80.0, 20, 0) };
    let mut state = LnsState::initialize(Arc::new(inst), cfg).unwrap();
    let p = state.probabilities().unwrap();
    assert!(p.iter().all(|&v| (v - 1.0 / 50.0).abs() < 1e-15));
    let policy = SizePolicy::from_spec(&SizePolicySpec::uniform()).unwrap();
    while !state.is_done() {
        let rec = state.step(&policy).unwrap();
        assert!((1..=50).contains(&rec.size));
    }
    assert!(state.step(&policy).is_err());
}

#[test]
fn wall_mode_respects_the_total() {
    let inst = gen_mis(120, 400, 6).unwrap();
    let cfg = LnsConfig {
        initial_budget: 0.05,
        step_budget: 0.02,
        total_budget: 0.4,
        max_steps: 10_000,
        budget_mode: BudgetMode::Wall,
        ..Default::default()
    };
    let out = run(&inst, &cfg).unwrap();
    assert!(out.trace.is_monotone(Direction::Maximize));
    // accepted incumbents all land inside the budget
    assert!(out.trace.points.iter().all(|p| p.elapsed_s <= 0.4));
    assert!(pool_is_concatenated_streams(&out));
}

#[test]
fn invalid_budgets_are_rejected() {
    let inst = gen_mis(20, 30, 0).unwrap();
    assert!(run(&inst, &nodes(0.0, 1.0, 10.0, 5, 0)).is_err());
    assert!(run(&inst, &nodes(1.0, -1.0, 10.0, 5, 0)).is_err());
    assert!(run(&inst, &nodes(1.0, 0.5, 10.0, 5, 0)).is_err());
}

#[test]
fn allocation_table() {
    let expect = [
        (Family::Mis, (8.0, 4.0, 40.0)),
        (Family::Ca, (12.0, 6.0, 60.0)),
        (Family::Mvc, (6.0, 3.0, 30.0)),
        (Family::Sc, (12.0, 6.0, 60.0)),
    ];
    for (family, budgets) in expect {
        assert_eq!(allocate_budgets(SizeClass::Small, family), budgets);
        assert_eq!(allocate_budgets(SizeClass::Medium, family), (60.0, 30.0, 300.0));
        assert_eq!(allocate_budgets(SizeClass::Hard, family), (600.0, 300.0, 5000.0));
    }
    let cfg = LnsConfig::default().with_allocation(allocate_budgets(SizeClass::Small, Family::Mvc));
    assert_eq!((cfg.initial_budget, cfg.step_budget, cfg.total_budget), (6.0, 3.0, 30.0));
}
