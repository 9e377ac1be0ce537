//! Scores and sampling law written directly from their definitions.

use hyplns::ilp::{Assignment, Direction};
use hyplns::pool::SolutionPool;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Pool of `q` random solutions over `n` variables, with frequent objective ties.
pub fn random_pool(rng: &mut ChaCha8Rng, n: usize, q: usize) -> (SolutionPool, Vec<Vec<bool>>, Vec<f64>) {
    let dir = if rng.random_bool(0.5) { Direction::Minimize } else { Direction::Maximize };
    let mut pool = SolutionPool::new(dir, n);
    let mut xs = Vec::new();
    let mut objs = Vec::new();
    for _ in 0..q {
        let x: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let obj = rng.random_range(0..4) as f64;
        pool.push(Assignment::new(x.clone()), obj).unwrap();
        xs.push(x);
        objs.push(obj);
    }
    (pool, xs, objs)
}

/// Ranks by sorting (objective, discovery index).
pub fn rank_oracle(objs: &[f64], dir: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = match dir {
            Direction::Minimize => (objs[a], objs[b]),
            Direction::Maximize => (-objs[a], -objs[b]),
        };
        ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
    });
    let mut r = vec![0; objs.len()];
    for (pos, &j) in order.iter().enumerate() {
        r[j] = pos + 1;
    }
    r
}

/// Rank-weighted frequency of ones, divided by its maximum.
pub fn confidence_oracle(xs: &[Vec<bool>], ranks: &[usize], n: usize) -> Vec<f64> {
    let mut raw = vec![0.0; n];
    for (x, &r) in xs.iter().zip(ranks) {
        for i in 0..n {
            if x[i] {
                raw[i] += 1.0 / r as f64;
            }
        }
    }
    let top = raw.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return vec![0.0; n];
    }
    raw.iter().map(|v| v / top).collect()
}

/// Deviation from the scores; zeros lifted to the smallest positive deviation;
/// uniform when all deviations coincide.
pub fn probability_oracle(x: &[bool], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut raw: Vec<f64> = x.iter().zip(f).map(|(&xi, &fi)| ((xi as u8 as f64) - fi).abs()).collect();
    let smallest = raw.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if smallest.is_finite() {
        for v in raw.iter_mut() {
            if *v == 0.0 {
                *v = smallest;
            }
        }
    }
    if raw.iter().all(|&v| v == raw[0]) {
        return vec![1.0 / n as f64; n];
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}
