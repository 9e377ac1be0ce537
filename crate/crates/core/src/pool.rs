//! Solution pool, rank-weighted confidence scores and selection probabilities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::ilp::{Assignment, Direction};
use crate::subsolver::SolveResult;

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub assignment: Assignment,
    pub objective: f64,
    pub discovery: usize,
}

/// Every feasible solution found so far, in discovery order.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPool {
    direction: Direction,
    num_vars: usize,
    entries: Vec<PoolEntry>,
    next_discovery: usize,
    cap: Option<usize>,
}

impl SolutionPool {
    pub fn new(direction: Direction, num_vars: usize) -> Self {
        SolutionPool {
            direction,
            num_vars,
            entries: Vec::new(),
            next_discovery: 0,
            cap: None,
        }
    }

    /// Keep at most `cap` best-ranked entries after each update.
    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self.enforce_cap();
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, assignment: Assignment, objective: f64) -> Result<usize> {
        if assignment.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "pool holds {}-variable solutions, got {}",
                self.num_vars,
                assignment.len()
            )));
        }
        let discovery = self.next_discovery;
        self.next_discovery += 1;
        self.entries.push(PoolEntry {
            assignment,
            objective,
            discovery,
        });
        self.enforce_cap();
        Ok(discovery)
    }

    /// Appends every incumbent of `result` with fresh discovery indices.
    pub fn update(&mut self, result: &SolveResult) -> Result<()> {
        for inc in &result.incumbents {
            if inc.assignment.len() != self.num_vars {
                return Err(Error::Dimension(format!(
                    "pool holds {}-variable solutions, got {}",
                    self.num_vars,
                    inc.assignment.len()
                )));
            }
        }
        for inc in &result.incumbents {
            self.push(inc.assignment.clone(), inc.objective)?;
        }
        Ok(())
    }

    pub fn best(&self) -> Option<&PoolEntry> {
        let ranks = rank(self);
        ranks
            .iter()
            .position(|&r| r == 1)
            .map(|pos| &self.entries[pos])
    }

    fn enforce_cap(&mut self) {
        let Some(cap) = self.cap else { return };
        if self.entries.len() <= cap {
            return;
        }
        let ranks = rank(self);
        let mut kept = Vec::with_capacity(cap);
        for (entry, r) in self.entries.drain(..).zip(ranks) {
            if r <= cap {
                kept.push(entry);
            }
        }
        self.entries = kept;
    }
}

/// Strict 1..q ranks, rank 1 = best objective; ties go to the earlier discovery.
pub fn rank(pool: &SolutionPool) -> Vec<usize> {
    let dir = pool.direction;
    let mut order: Vec<usize> = (0..pool.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&pool.entries[a], &pool.entries[b]);
        let by_obj = match dir {
            Direction::Minimize => ea.objective.total_cmp(&eb.objective),
            Direction::Maximize => eb.objective.total_cmp(&ea.objective),
        };
        by_obj.then(ea.discovery.cmp(&eb.discovery))
    });
    let mut ranks = vec![0; order.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    ranks
}

/// Rank-weighted frequency of each variable taking value 1, scaled by the
/// largest such frequency. An all-zero pool yields all-zero scores.
pub fn confidence_scores(pool: &SolutionPool, ranks: &[usize]) -> Result<Vec<f64>> {
    if ranks.len() != pool.len() {
        return Err(Error::Dimension(format!(
            "{} ranks for a pool of {}",
            ranks.len(),
            pool.len()
        )));
    }
    let mut raw = vec![0.0; pool.num_vars];
    for (entry, &r) in pool.entries.iter().zip(ranks) {
        let w = 1.0 / r as f64;
        for (acc, &x) in raw.iter_mut().zip(entry.assignment.values()) {
            if x {
                *acc += w;
            }
        }
    }
    let max = raw.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        raw.iter_mut().for_each(|v| *v /= max);
    }
    Ok(raw)
}

/// Normalized deviation `|x_i - f_i|`; zero deviations take the smallest
/// positive deviation, and equal deviations collapse to the uniform law.
pub fn selection_probabilities(current: &Assignment, scores: &[f64]) -> Result<Vec<f64>> {
    if current.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "assignment of length {} against {} scores",
            current.len(),
            scores.len()
        )));
    }
    let n = scores.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut raw: Vec<f64> = current
        .values()
        .iter()
        .zip(scores)
        .map(|(&x, &f)| ((if x { 1.0 } else { 0.0 }) - f).abs())
        .collect();
    let min_pos = raw
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if min_pos.is_finite() {
        raw.iter_mut().filter(|v| **v == 0.0).for_each(|v| *v = min_pos);
    }
    let first = raw[0];
    if raw.iter().all(|&v| v == first) {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Draws `size` distinct indices without replacement, weighted by `probs`,
/// by keeping the `size` smallest keys `E_i / p_i` with `E_i ~ Exp(1)`.
/// The returned indices are sorted.
pub fn sample_neighborhood(probs: &[f64], size: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_neighborhood_with(probs, size, &mut rng)
}

pub fn sample_neighborhood_with<R: rand::Rng + ?Sized>(
    probs: &[f64],
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = probs.len();
    if size == 0 || size > n {
        return Err(Error::Parameter(format!(
            "neighborhood size {size} outside [1, {n}]"
        )));
    }
    let mut keyed: Vec<(f64, usize)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let e: f64 = Exp1.sample(rng);
            let key = if p > 0.0 { e / p } else { f64::INFINITY };
            (key, i)
        })
        .collect();
    if size < n {
        keyed.select_nth_unstable_by(size - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.truncate(size);
    }
    let mut picked: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsolver::{Incumbent, SolveStatus};

    fn pool_with(direction: Direction, rows: &[(&[u8], f64)]) -> SolutionPool {
        let mut pool = SolutionPool::new(direction, rows[0].0.len());
        for (bits, obj) in rows {
            pool.push(Assignment::from_bits(bits), *obj).unwrap();
        }
        pool
    }

    #[test]
    fn ties_break_by_discovery() {
        let pool = pool_with(
            Direction::Minimize,
            &[(&[0], 5.0), (&[0], 3.0), (&[0], 3.0)],
        );
        assert_eq!(rank(&pool), vec![3, 1, 2]);
        let single = pool_with(Direction::Maximize, &[(&[1], 7.0)]);
        assert_eq!(rank(&single), vec![1]);
    }

    #[test]
    fn confidence_of_two_solution_pool() {
        // var A = [1, 0], var B = [0, 1] across solutions ranked 1 and 2
        let pool = pool_with(Direction::Minimize, &[(&[1, 0], 1.0), (&[0, 1], 2.0)]);
        let ranks = rank(&pool);
        assert_eq!(ranks, vec![1, 2]);
        assert_eq!(confidence_scores(&pool, &ranks).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn unanimous_variable_gives_one_hot_scores() {
        let pool = pool_with(
            Direction::Maximize,
            &[(&[0, 0, 1, 0], 1.0), (&[0, 0, 1, 0], 4.0), (&[0, 0, 1, 0], 2.0)],
        );
        let f = confidence_scores(&pool, &rank(&pool)).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn all_zero_pool_scores_zero() {
        let pool = pool_with(Direction::Maximize, &[(&[0, 0, 0], 0.0)]);
        assert_eq!(confidence_scores(&pool, &rank(&pool)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn zero_deviation_takes_smallest_positive_then_uniform() {
        let p = selection_probabilities(&Assignment::from_bits(&[1, 1]), &[1.0, 0.5]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn binary_scores_matching_current_are_uniform() {
        let p = selection_probabilities(&Assignment::from_bits(&[1, 0, 1]), &[1.0, 0.0, 1.0])
            .unwrap();
        assert_eq!(p, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn plain_normalization() {
        let p = selection_probabilities(&Assignment::zeros(3), &[0.2, 0.4, 0.4]).unwrap();
        for (a, b) in p.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_edge_cases() {
        assert_eq!(sample_neighborhood(&[0.25; 4], 4, 1).unwrap(), vec![0, 1, 2, 3]);
        for seed in 0..50 {
            assert_eq!(sample_neighborhood(&[0.0, 0.0, 1.0], 1, seed).unwrap(), vec![2]);
        }
        assert!(matches!(sample_neighborhood(&[0.5, 0.5], 0, 0), Err(Error::Parameter(_))));
        assert!(matches!(sample_neighborhood(&[0.5, 0.5], 3, 0), Err(Error::Parameter(_))));
        assert_eq!(
            sample_neighborhood(&[0.1, 0.2, 0.3, 0.4], 2, 9).unwrap(),
            sample_neighborhood(&[0.1, 0.2, 0.3, 0.4], 2, 9).unwrap()
        );
    }

    fn result_with(incs: &[(&[u8], f64)]) -> SolveResult {
        SolveResult {
            status: SolveStatus::FeasibleBudgetExhausted,
            best: None,
            incumbents: incs
                .iter()
                .map(|(b, o)| Incumbent {
                    assignment: Assignment::from_bits(b),
                    objective: *o,
                    elapsed: std::time::Duration::ZERO,
                    nodes: 0,
                })
                .collect(),
            nodes: 0,
            elapsed: std::time::Duration::ZERO,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn update_appends_with_fresh_indices() {
        let mut pool = pool_with(
            Direction::Minimize,
            &[(&[1, 1], 4.0), (&[1, 0], 3.0), (&[0, 1], 2.0)],
        );
        pool.update(&result_with(&[(&[0, 0], 1.0), (&[0, 0], 0.0)])).unwrap();
        assert_eq!(pool.len(), 5);
        let idx: Vec<usize> = pool.entries().iter().map(|e| e.discovery).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            pool.update(&result_with(&[(&[0, 0, 0], 1.0)])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cap_keeps_the_best() {
        let mut pool = SolutionPool::new(Direction::Maximize, 1).with_cap(Some(2));
        pool.push(Assignment::from_bits(&[0]), 1.0).unwrap();
        pool.push(Assignment::from_bits(&[1]), 5.0).unwrap();
        pool.push(Assignment::from_bits(&[1]), 3.0).unwrap();
        let objs: Vec<f64> = pool.entries().iter().map(|e| e.objective).collect();
        assert_eq!(objs, vec![5.0, 3.0]);
    }
}
