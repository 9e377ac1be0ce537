//! Dense bounded-variable primal simplex for the LP relaxations.
//!
//! Structural columns live in `[0, u_j]`; slack and artificial columns are
//! added per row. Phase 1 minimizes the artificial sum, phase 2 the real
//! cost. Pricing is Dantzig's rule until a run of degenerate pivots, after
//! which Bland's rule takes over for the rest of the phase.

use crate::ilp::Sense;

const TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min cost·x` subject to `rows`, `0 <= x <= upper`.
#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    pub cost: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    m: usize,
    ncols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    d: Vec<f64>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.t[r * self.ncols..(r + 1) * self.ncols]
    }

    fn value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn price(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.ncols..(r + 1) * self.ncols];
                for (dj, &a) in self.d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, p: usize, q: usize) {
        let n = self.ncols;
        let piv = self.t[p * n + q];
        {
            let prow = &mut self.t[p * n..(p + 1) * n];
            for v in prow.iter_mut() {
                *v /= piv;
            }
        }
        let (before, rest) = self.t.split_at_mut(p * n);
        let (prow, after) = rest.split_at_mut(n);
        for chunk in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = chunk[q];
            if f != 0.0 {
                for (v, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                chunk[q] = 0.0;
            }
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for (dj, &pv) in self.d.iter_mut().zip(prow.iter()) {
                *dj -= dq * pv;
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[p];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[p] = q;
    }

    fn run(&mut self, iterations: &mut usize, cap: usize) -> PhaseEnd {
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter: Option<usize> = None;
            let mut best = TOL;
            for j in 0..self.ncols {
                if self.is_basic[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let dj = self.d[j];
                let gain = if self.at_upper[j] { dj } else { -dj };
                if gain > TOL {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if gain > best {
                        best = gain;
                        enter = Some(j);
                    }
                }
            }
            let Some(q) = enter else {
                return PhaseEnd::Optimal;
            };
            if *iterations >= cap {
                return PhaseEnd::IterationLimit;
            }
            *iterations += 1;

            let delta = if self.at_upper[q] { -1.0 } else { 1.0 };
            let mut theta = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0;
            let mut leave_var = usize::MAX;
            for r in 0..self.m {
                let alpha = self.t[r * self.ncols + q] * delta;
                let b = self.basis[r];
                let (ratio, to_upper) = if alpha > TOL {
                    (self.beta[r].max(0.0) / alpha, false)
                } else if alpha < -TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[r]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let take = if ratio < theta - TOL {
                    true
                } else if ratio <= theta + TOL {
                    match leave {
                        // a tie with the bound flip keeps the flip
                        None => ratio < theta,
                        Some(_) if bland => b < leave_var,
                        Some(_) => alpha.abs() > leave_alpha,
                    }
                } else {
                    false
                };
                if take {
                    theta = ratio;
                    leave = Some((r, to_upper));
                    leave_alpha = alpha.abs();
                    leave_var = b;
                }
            }
            if !theta.is_finite() {
                return PhaseEnd::Unbounded;
            }
            if theta < TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            for r in 0..self.m {
                let a = self.t[r * self.ncols + q];
                if a != 0.0 {
                    self.beta[r] -= a * delta * theta;
                }
            }
            match leave {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((p, to_upper)) => {
                    let leaving = self.basis[p];
                    let entering_value = self.value(q) + delta * theta;
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[q] = false;
                    self.pivot(p, q);
                    self.beta[p] = entering_value;
                }
            }
        }
    }
}

impl LpProblem {
    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    /// Solve with at most `cap` pivots/bound flips across both phases.
    pub fn solve(&self, cap: usize) -> LpOutcome {
        let k = self.num_cols();
        let m = self.rows.len();
        if m == 0 {
            let x: Vec<f64> = self
                .cost
                .iter()
                .zip(&self.upper)
                .map(|(&c, &u)| if c < 0.0 { u } else { 0.0 })
                .collect();
            let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
            return LpOutcome::Optimal { objective, x };
        }

        // start every structural at the bound that leaves fewer rows in need of an artificial
        let start_upper = {
            let bad = |up: bool| {
                self.rows
                    .iter()
                    .filter(|row| {
                        let act: f64 = if up {
                            row.terms.iter().map(|&(j, a)| a * self.upper[j]).sum()
                        } else {
                            0.0
                        };
                        let res = row.rhs - act;
                        match row.sense {
                            Sense::Le => res < 0.0,
                            Sense::Ge => res > 0.0,
                            Sense::Eq => res != 0.0,
                        }
                    })
                    .count()
            };
            bad(true) < bad(false)
        };

        let slack_count = self.rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let mut residual = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        for row in &self.rows {
            let act: f64 = if start_upper {
                row.terms.iter().map(|&(j, a)| a * self.upper[j]).sum()
            } else {
                0.0
            };
            let res = row.rhs - act;
            let ok = match row.sense {
                Sense::Le => res >= 0.0,
                Sense::Ge => res <= 0.0,
                Sense::Eq => false,
            };
            residual.push(res);
            needs_art.push(!ok);
        }
        let art_count = needs_art.iter().filter(|&&b| b).count();
        let ncols = k + slack_count + art_count;

        let mut tab = Tableau {
            m,
            ncols,
            t: vec![0.0; m * ncols],
            beta: vec![0.0; m],
            basis: vec![0; m],
            is_basic: vec![false; ncols],
            at_upper: vec![false; ncols],
            upper: vec![f64::INFINITY; ncols],
            d: vec![0.0; ncols],
        };
        tab.upper[..k].copy_from_slice(&self.upper);
        if start_upper {
            for j in 0..k {
                tab.at_upper[j] = self.upper[j] > 0.0;
            }
        }

        let mut slack_col = k;
        let mut art_col = k + slack_count;
        let mut phase1_cost = vec![0.0; ncols];
        for (r, row) in self.rows.iter().enumerate() {
            let res = residual[r];
            let slack_sign = match row.sense {
                Sense::Le => Some(1.0),
                Sense::Ge => Some(-1.0),
                Sense::Eq => None,
            };
            // scale the row so its basic column has coefficient +1
            let (basic, scale) = if needs_art[r] {
                let s = if res >= 0.0 { 1.0 } else { -1.0 };
                let c = art_col;
                art_col += 1;
                phase1_cost[c] = 1.0;
                tab.t[r * ncols + c] = 1.0;
                (c, s)
            } else {
                (slack_col, slack_sign.unwrap())
            };
            let trow = &mut tab.t[r * ncols..(r + 1) * ncols];
            for &(j, a) in &row.terms {
                trow[j] = a * scale;
            }
            if let Some(ss) = slack_sign {
                trow[slack_col] = ss * scale;
                slack_col += 1;
            }
            tab.basis[r] = basic;
            tab.is_basic[basic] = true;
            tab.beta[r] = res * scale;
        }

        let mut iterations = 0usize;
        if art_count > 0 {
            tab.price(&phase1_cost);
            match tab.run(&mut iterations, cap) {
                PhaseEnd::Optimal => {}
                PhaseEnd::IterationLimit => return LpOutcome::IterationLimit,
                PhaseEnd::Unbounded => return LpOutcome::Unbounded,
            }
            let infeasibility: f64 = (0..m)
                .filter(|&r| tab.basis[r] >= k + slack_count)
                .map(|r| tab.beta[r])
                .sum();
            if infeasibility > 1e-7 {
                return LpOutcome::Infeasible;
            }
            // pin artificials at zero; drive basic ones out where possible
            for c in k + slack_count..ncols {
                tab.upper[c] = 0.0;
                tab.at_upper[c] = false;
            }
            for r in 0..m {
                if tab.basis[r] < k + slack_count {
                    continue;
                }
                let row = tab.row(r);
                if let Some(q) = (0..k + slack_count)
                    .filter(|&j| !tab.is_basic[j])
                    .max_by(|&a, &b| row[a].abs().total_cmp(&row[b].abs()))
                    .filter(|&q| row[q].abs() > 1e-7)
                {
                    let value = tab.value(q);
                    tab.pivot(r, q);
                    tab.beta[r] = value;
                }
            }
        }

        let mut cost = vec![0.0; ncols];
        cost[..k].copy_from_slice(&self.cost);
        tab.price(&cost);
        match tab.run(&mut iterations, cap) {
            PhaseEnd::Optimal => {}
            PhaseEnd::IterationLimit => return LpOutcome::IterationLimit,
            PhaseEnd::Unbounded => return LpOutcome::Unbounded,
        }

        let mut x: Vec<f64> = (0..k).map(|j| tab.value(j)).collect();
        for r in 0..m {
            let b = tab.basis[r];
            if b < k {
                x[b] = tab.beta[r].clamp(0.0, self.upper[b]);
            }
        }
        let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { objective, x }
    }
}
