mod common;

use std::collections::BTreeMap;

use common::{enumerate_optimum, random_instance, small_family_instance};
use hyplns::generators::{gen_mis, Family};
use hyplns::ilp::{mps, Assignment, IlpInstance};
use hyplns::subsolver::{
    external::{format_solution, parse_solution},
    solve, solve_sub, SolveBudget, SolveStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_stream(inst: &IlpInstance, r: &hyplns::subsolver::SolveResult) {
    for w in r.incumbents.windows(2) {
        assert!(inst.direction().better(w[1].objective, w[0].objective));
    }
    if let Some(last) = r.incumbents.last() {
        assert_eq!(Some(&last.assignment), r.best.as_ref());
    }
    for inc in &r.incumbents {
        assert!(inst.is_feasible(&inc.assignment));
    }
}

#[test]
fn random_mixed_instances_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..150 {
        let n = rng.random_range(1..=14);
        let m = rng.random_range(0..=8);
        let inst = random_instance(n, m, &mut rng);
        let r = solve(&inst, &SolveBudget::unlimited(), None).unwrap();
        check_stream(&inst, &r);
        let expected = enumerate_optimum(&inst, &[]);
        match expected {
            Some(opt) => {
                assert_eq!(r.status, SolveStatus::Optimal);
                assert_eq!(r.best_objective(), Some(opt), "{inst:?}");
            }
            None => assert_eq!(r.status, SolveStatus::Infeasible),
        }
    }
}

#[test]
fn family_instances_match_enumeration() {
    for (k, family) in Family::ALL.iter().enumerate() {
        for seed in 0..10 {
            let inst = small_family_instance(*family, 20, 1000 * k as u64 + seed);
            let r = solve(&inst, &SolveBudget::unlimited(), None).unwrap();
            check_stream(&inst, &r);
            assert_eq!(r.best_objective(), enumerate_optimum(&inst, &[]));
            assert_eq!(r.status, SolveStatus::Optimal);
        }
    }
}

#[test]
fn sub_solves_match_restricted_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 60 {
        let inst = random_instance(15, rng.random_range(2..=10), &mut rng);
        let Some(inc) = solve(&inst, &SolveBudget::nodes(3), None).unwrap().best else {
            continue;
        };
        let fixed: BTreeMap<usize, bool> = (0..15)
            .filter(|_| rng.random_bool(0.5))
            .map(|i| (i, inc.get(i)))
            .collect();
        let dense: Vec<Option<bool>> = (0..15).map(|i| fixed.get(&i).copied()).collect();
        let r = solve_sub(&inst, &fixed, &SolveBudget::unlimited(), &inc).unwrap();
        check_stream(&inst, &r);
        let best = r.best.clone().unwrap();
        assert!(fixed.iter().all(|(&i, &v)| best.get(i) == v));
        assert_eq!(r.best_objective(), enumerate_optimum(&inst, &dense));
        let old = inst.evaluate_objective(&inc).unwrap();
        assert!(!inst.direction().better(old, r.best_objective().unwrap()));
        checked += 1;
    }
}

#[test]
fn empty_fixing_equals_warm_started_solve() {
    let inst = gen_mis(18, 30, 4).unwrap();
    let inc = inst.assignment(vec![false; 18]).unwrap();
    let a = solve_sub(&inst, &BTreeMap::new(), &SolveBudget::nodes(500), &inc).unwrap();
    let b = solve(&inst, &SolveBudget::nodes(500), Some(&inc)).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.status, b.status);
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn node_budget_is_respected() {
    let inst = gen_mis(120, 360, 9).unwrap();
    for limit in [1, 2, 7, 40] {
        let r = solve(&inst, &SolveBudget::nodes(limit), None).unwrap();
        assert!(r.nodes <= limit);
    }
}

#[test]
fn fixings_survive_the_mps_round_trip() {
    let inst = gen_mis(6, 7, 2).unwrap();
    let fixed = vec![Some(true), None, Some(false), None, None, Some(false)];
    let text = mps::write(&inst, &fixed, "FIXED");
    let back = mps::parse(&text).unwrap();
    assert_eq!(back.fixed, fixed);
    assert_eq!(back.instance, inst);
    let values = vec![true, false, false, true, false, false];
    assert_eq!(
        parse_solution(&format_solution(&values), 6, &[]).unwrap(),
        values
    );
    let _ = Assignment::new(values);
}
