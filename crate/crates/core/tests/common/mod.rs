#![allow(dead_code)]

pub mod graphs;
pub mod pool_oracle;

use hyplns::generators::{gen_ca, gen_mis, gen_mvc, gen_sc, Family};
use hyplns::ilp::{Constraint, Direction, IlpInstance, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best objective over all assignments agreeing with `fixed`, by Gray-code
/// enumeration with incremental row activities. Written without the crate's
/// evaluation routines.
pub fn enumerate_optimum(inst: &IlpInstance, fixed: &[Option<bool>]) -> Option<f64> {
    let n = inst.num_vars();
    let free: Vec<usize> = (0..n).filter(|&i| fixed.get(i).copied().flatten().is_none()).collect();
    assert!(free.len() <= 24, "enumeration over {} variables", free.len());
    let rows = inst.constraints();
    let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, c) in rows.iter().enumerate() {
        for &(i, a) in &c.terms {
            col_rows[i].push((r, a));
        }
    }
    let ok = |act: f64, c: &Constraint| match c.sense {
        Sense::Le => act <= c.rhs,
        Sense::Ge => act >= c.rhs,
        Sense::Eq => act == c.rhs,
    };
    let mut x = vec![false; n];
    for i in 0..n {
        if let Some(Some(v)) = fixed.get(i) {
            x[i] = *v;
        }
    }
    let mut act: Vec<f64> = rows
        .iter()
        .map(|c| c.terms.iter().filter(|(i, _)| x[*i]).map(|(_, a)| a).sum())
        .collect();
    let mut bad = rows.iter().zip(&act).filter(|(c, &a)| !ok(a, c)).count();
    let c = inst.objective();
    let mut obj: f64 = (0..n).filter(|&i| x[i]).map(|i| c[i]).sum();
    let better = |a: f64, b: f64| match inst.direction() {
        Direction::Minimize => a < b,
        Direction::Maximize => a > b,
    };
    let mut best = if bad == 0 { Some(obj) } else { None };
    for step in 1u64..(1u64 << free.len()) {
        let v = free[step.trailing_zeros() as usize];
        x[v] = !x[v];
        let sign = if x[v] { 1.0 } else { -1.0 };
        obj += sign * c[v];
        for &(r, a) in &col_rows[v] {
            let was = ok(act[r], &rows[r]);
            act[r] += sign * a;
            let now = ok(act[r], &rows[r]);
            match (was, now) {
                (true, false) => bad += 1,
                (false, true) => bad -= 1,
                _ => {}
            }
        }
        if bad == 0 && best.is_none_or(|b| better(obj, b)) {
            best = Some(obj);
        }
    }
    best
}

/// Random instance with mixed signs, senses and integer data.
pub fn random_instance(n: usize, m: usize, rng: &mut ChaCha8Rng) -> IlpInstance {
    let objective = (0..n).map(|_| rng.random_range(-5..=9) as f64).collect();
    let mut rows = Vec::new();
    for _ in 0..m {
        let k = rng.random_range(1..=n.min(5));
        let cols = rand::seq::index::sample(rng, n, k);
        let terms: Vec<(usize, f64)> =
            cols.iter().map(|i| (i, rng.random_range(-3..=4) as f64)).collect();
        let sense = match rng.random_range(0..6) {
            0 => Sense::Eq,
            1 | 2 => Sense::Ge,
            _ => Sense::Le,
        };
        let rhs = rng.random_range(-2..=4) as f64;
        rows.push(Constraint::new(terms, sense, rhs));
    }
    let dir = if rng.random_bool(0.5) { Direction::Maximize } else { Direction::Minimize };
    IlpInstance::new(objective, dir, rows).unwrap()
}

/// A generated family instance with at most `max_vars` variables.
pub fn small_family_instance(family: Family, max_vars: usize, seed: u64) -> IlpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.random_range(6..=max_vars);
    match family {
        Family::Mis => gen_mis(n, rng.random_range(n / 2..=2 * n), seed).unwrap(),
        Family::Mvc => gen_mvc(n, rng.random_range(n / 2..=2 * n), seed).unwrap(),
        Family::Sc => gen_sc(n, rng.random_range(4..=2 * n), seed).unwrap(),
        Family::Ca => gen_ca(n, rng.random_range(5..=2 * n), seed).unwrap(),
    }
}
