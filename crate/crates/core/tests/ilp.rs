use hyplns::generators::{Family, GenSpec};
use hyplns::ilp::io::{from_canonical_str, to_canonical_string};
use hyplns::ilp::{build_bipartite, mps, Assignment, Constraint, Direction, IlpInstance, Sense};
use hyplns::pool::SolutionPool;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_rows(inst: &IlpInstance) -> Vec<Vec<f64>> {
    inst.constraints()
        .iter()
        .map(|row| {
            let mut dense = vec![0.0; inst.num_vars()];
            for &(i, a) in &row.terms {
                dense[i] = a;
            }
            dense
        })
        .collect()
}

fn dot(a: &[f64], x: &[bool]) -> f64 {
    a.iter().zip(x).filter(|(_, &b)| b).map(|(c, _)| c).sum()
}

fn feasible_oracle(inst: &IlpInstance, x: &[bool]) -> bool {
    inst.constraints().iter().zip(dense_rows(inst)).all(|(row, dense)| {
        let lhs = dot(&dense, x);
        match row.sense {
            Sense::Le => lhs <= row.rhs,
            Sense::Ge => lhs >= row.rhs,
            Sense::Eq => lhs == row.rhs,
        }
    })
}

#[test]
fn objective_and_feasibility_match_dense_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut feasible = 0;
    for k in 0..50u64 {
        let family = Family::ALL[k as usize % 4];
        let (n, m) = match family {
            Family::Mis | Family::Mvc => (15, 25),
            Family::Sc => (15, 10),
            Family::Ca => (15, 8),
        };
        let inst = GenSpec { family, n, m, seed: k }.generate().unwrap();
        for _ in 0..20 {
            let x: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let a = Assignment::new(x.clone());
            assert_eq!(inst.evaluate_objective(&a).unwrap(), dot(inst.objective(), &x));
            let ok = feasible_oracle(&inst, &x);
            assert_eq!(inst.is_feasible(&a), ok);
            assert_eq!(inst.check_feasibility(&a).unwrap().is_empty(), ok);
            feasible += ok as usize;
        }
    }
    assert!(feasible > 0);
}

#[test]
fn duplicate_constraint_does_not_change_feasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = GenSpec { family: Family::Mvc, n: 12, m: 20, seed: 8 }.generate().unwrap();
    let mut rows = base.constraints().to_vec();
    rows.push(rows[4].clone());
    let doubled = IlpInstance::new(base.objective().to_vec(), base.direction(), rows).unwrap();
    for _ in 0..500 {
        let a = Assignment::new((0..12).map(|_| rng.random_bool(0.6)).collect());
        assert_eq!(base.is_feasible(&a), doubled.is_feasible(&a));
    }
}

#[test]
fn violations_report_signed_slack() {
    let inst = IlpInstance::new(
        vec![1.0, 1.0],
        Direction::Minimize,
        vec![
            Constraint::new(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 2.0),
            Constraint::new(vec![(0, 1.0)], Sense::Le, 1.0),
        ],
    )
    .unwrap();
    let v = inst.check_feasibility(&Assignment::new(vec![true, false])).unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].row, 0);
    assert!(v[0].slack < 0.0);
    assert!(inst.check_feasibility(&Assignment::new(vec![true])).is_err());
}

#[test]
fn malformed_models_are_rejected() {
    let row = |terms| Constraint::new(terms, Sense::Le, 1.0);
    assert!(IlpInstance::new(vec![1.0], Direction::Maximize, vec![row(vec![(1, 1.0)])]).is_err());
    assert!(IlpInstance::new(vec![1.0, 1.0], Direction::Maximize, vec![row(vec![(0, 1.0), (0, 2.0)])]).is_err());
    assert!(IlpInstance::new(vec![f64::NAN], Direction::Maximize, vec![]).is_err());
    assert!(from_canonical_str("not an instance").is_err());
}

#[test]
fn mps_round_trip_preserves_instances() {
    for (k, family) in Family::ALL.into_iter().enumerate() {
        let inst = GenSpec { family, n: 20, m: 15, seed: k as u64 }.generate().unwrap();
        let text = mps::write(&inst, &[], "rt");
        let parsed = mps::parse(&text).unwrap();
        assert_eq!(parsed.instance, inst, "{family}");
        assert!(parsed.fixed.iter().all(Option::is_none));
    }
}

fn graph_for(inst: &IlpInstance, seed: u64) -> hyplns::ilp::BipartiteGraph {
    let n = inst.num_vars();
    let zeros = Assignment::zeros(n);
    let current = if inst.is_feasible(&zeros) { zeros } else { Assignment::ones(n) };
    let mut pool = SolutionPool::new(inst.direction(), n);
    let obj = inst.evaluate_objective(&current).unwrap();
    pool.push(current.clone(), obj).unwrap();
    build_bipartite(inst, &pool, &current, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_text_round_trips(family in 0usize..4, n in 4usize..30, seed in any::<u64>()) {
        let family = Family::ALL[family];
        let m = match family {
            Family::Mis | Family::Mvc => n,
            _ => (n / 2).max(6),
        };
        let inst = GenSpec { family, n, m, seed }.generate().unwrap();
        let text = to_canonical_string(&inst);
        let back = from_canonical_str(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(to_canonical_string(&back), text);
    }

    #[test]
    fn graph_has_one_edge_per_nonzero(family in 0usize..4, n in 4usize..30, seed in any::<u64>()) {
        let family = Family::ALL[family];
        let m = match family {
            Family::Mis | Family::Mvc => n,
            _ => (n / 2).max(6),
        };
        let inst = GenSpec { family, n, m, seed }.generate().unwrap();
        let g = graph_for(&inst, seed);
        prop_assert_eq!(g.num_edges(), inst.num_nonzeros());
        prop_assert_eq!(g.num_vars(), inst.num_vars());
        prop_assert_eq!(g.num_cons(), inst.num_cons());
        for (e, (&i, &j)) in g.edge_vars().iter().zip(g.edge_cons()).enumerate() {
            let coef = inst.constraints()[j].terms.iter().find(|t| t.0 == i).map(|t| t.1);
            prop_assert!(coef.is_some());
            prop_assert!(g.edge_features()[e].abs() <= 1.0);
        }
        prop_assert!(g.var_features().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        prop_assert!(g.cons_features().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }
}
