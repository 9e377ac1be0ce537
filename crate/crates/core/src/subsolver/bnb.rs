//! Depth-first branch-and-bound over the free variables of a binary program.
//!
//! Each node propagates row activities (forcing variables whose other value
//! would violate a row), bounds the remaining subproblem with its LP
//! relaxation and branches on the most fractional variable, exploring the
//! value nearest the relaxation first.

use std::time::Instant;

use super::simplex::{LpOutcome, LpProblem, LpRow};
use super::{Incumbent, SolveBudget, SolveResult, SolveStatus, SolverOptions};
use crate::ilp::{Assignment, IlpInstance, Sense};

const TOL: f64 = 1e-9;
const UNSET: i8 = -1;

struct Row {
    vars: Vec<usize>,
    coefs: Vec<f64>,
    lo: f64,
    hi: f64,
    max_abs: f64,
}

/// The instance restricted to its free columns, in minimization form.
struct Reduced<'a> {
    instance: &'a IlpInstance,
    free: Vec<usize>,
    base: Vec<bool>,
    cost: Vec<f64>,
    rows: Vec<Row>,
    col_rows: Vec<Vec<(usize, f64)>>,
    /// minimization-form objective of the fixed part
    constant: f64,
    integral_cost: bool,
}

impl<'a> Reduced<'a> {
    /// `None` when some fully fixed row is violated.
    fn new(instance: &'a IlpInstance, fixed: &[Option<bool>]) -> Option<Self> {
        let n = instance.num_vars();
        let sign = instance.direction().min_sign();
        let mut local = vec![usize::MAX; n];
        let mut free = Vec::new();
        let mut base = vec![false; n];
        for i in 0..n {
            match fixed[i] {
                Some(v) => base[i] = v,
                None => {
                    local[i] = free.len();
                    free.push(i);
                }
            }
        }
        let cost: Vec<f64> = free.iter().map(|&i| sign * instance.objective()[i]).collect();
        let constant = sign * instance.objective_of(&base);
        let integral_cost = instance.objective().iter().all(|c| c.fract() == 0.0);

        let mut rows = Vec::new();
        let mut col_rows = vec![Vec::new(); free.len()];
        for c in instance.constraints() {
            let mut vars = Vec::new();
            let mut coefs = Vec::new();
            let mut fixed_act = 0.0;
            for &(i, a) in &c.terms {
                if local[i] == usize::MAX {
                    if base[i] {
                        fixed_act += a;
                    }
                } else {
                    vars.push(local[i]);
                    coefs.push(a);
                }
            }
            let rhs = c.rhs - fixed_act;
            if vars.is_empty() {
                if !c.sense.satisfied(fixed_act, c.rhs) {
                    return None;
                }
                continue;
            }
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, rhs),
                Sense::Ge => (rhs, f64::INFINITY),
                Sense::Eq => (rhs, rhs),
            };
            let r = rows.len();
            for (&v, &a) in vars.iter().zip(&coefs) {
                col_rows[v].push((r, a));
            }
            let max_abs = coefs.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            rows.push(Row {
                vars,
                coefs,
                lo,
                hi,
                max_abs,
            });
        }
        Some(Reduced {
            instance,
            free,
            base,
            cost,
            rows,
            col_rows,
            constant,
            integral_cost,
        })
    }

    fn full_assignment(&self, val: &[i8]) -> Vec<bool> {
        let mut x = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = val[k] == 1;
        }
        x
    }

    fn min_objective(&self, val: &[i8]) -> f64 {
        self.constant
            + self
                .cost
                .iter()
                .zip(val)
                .filter(|(_, &v)| v == 1)
                .map(|(c, _)| c)
                .sum::<f64>()
    }
}

/// Assignment state with incremental row activity bounds and an undo trail.
#[derive(Clone)]
struct State {
    val: Vec<i8>,
    min_act: Vec<f64>,
    max_act: Vec<f64>,
    trail: Vec<usize>,
    queue: Vec<usize>,
    queued: Vec<bool>,
}

impl State {
    fn from_values(p: &Reduced, val: Vec<i8>) -> Self {
        let mut min_act = vec![0.0; p.rows.len()];
        let mut max_act = vec![0.0; p.rows.len()];
        for (r, row) in p.rows.iter().enumerate() {
            for (&v, &a) in row.vars.iter().zip(&row.coefs) {
                match val[v] {
                    1 => {
                        min_act[r] += a;
                        max_act[r] += a;
                    }
                    0 => {}
                    _ => {
                        min_act[r] += a.min(0.0);
                        max_act[r] += a.max(0.0);
                    }
                }
            }
        }
        State {
            val,
            min_act,
            max_act,
            trail: Vec::new(),
            queue: Vec::new(),
            queued: vec![false; p.rows.len()],
        }
    }

    fn assign(&mut self, p: &Reduced, v: usize, value: i8) {
        debug_assert_eq!(self.val[v], UNSET);
        self.val[v] = value;
        self.trail.push(v);
        for &(r, a) in &p.col_rows[v] {
            if value == 1 {
                self.min_act[r] += a.max(0.0);
                self.max_act[r] += a.min(0.0);
            } else {
                self.min_act[r] -= a.min(0.0);
                self.max_act[r] -= a.max(0.0);
            }
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push(r);
            }
        }
    }

    fn undo_to(&mut self, p: &Reduced, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().unwrap();
            let value = self.val[v];
            for &(r, a) in &p.col_rows[v] {
                if value == 1 {
                    self.min_act[r] -= a.max(0.0);
                    self.max_act[r] -= a.min(0.0);
                } else {
                    self.min_act[r] += a.min(0.0);
                    self.max_act[r] += a.max(0.0);
                }
            }
            self.val[v] = UNSET;
        }
        self.clear_queue();
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    /// Propagate queued rows to a fixpoint; `false` on conflict.
    fn propagate(&mut self, p: &Reduced) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r] = false;
            let row = &p.rows[r];
            let (mn, mx) = (self.min_act[r], self.max_act[r]);
            if mn > row.hi + TOL || mx < row.lo - TOL {
                self.clear_queue();
                return false;
            }
            if mn + row.max_abs <= row.hi + TOL && mx - row.max_abs >= row.lo - TOL {
                continue;
            }
            for k in 0..row.vars.len() {
                let v = row.vars[k];
                if self.val[v] != UNSET {
                    continue;
                }
                let a = row.coefs[k];
                let (mn, mx) = (self.min_act[r], self.max_act[r]);
                // activity interval if v were set to 1 / to 0
                let (one_lo, one_hi) = (mn + a.max(0.0), mx + a.min(0.0));
                let (zero_lo, zero_hi) = (mn - a.min(0.0), mx - a.max(0.0));
                let one_ok = one_lo <= row.hi + TOL && one_hi >= row.lo - TOL;
                let zero_ok = zero_lo <= row.hi + TOL && zero_hi >= row.lo - TOL;
                match (zero_ok, one_ok) {
                    (true, true) => {}
                    (false, false) => {
                        self.clear_queue();
                        return false;
                    }
                    (true, false) => self.assign(p, v, 0),
                    (false, true) => self.assign(p, v, 1),
                }
            }
        }
        true
    }

    fn redundant(&self, p: &Reduced, r: usize) -> bool {
        let row = &p.rows[r];
        self.min_act[r] >= row.lo - TOL && self.max_act[r] <= row.hi + TOL
    }
}

struct Node {
    val: Vec<i8>,
    decision: Option<(usize, i8)>,
}

pub(crate) struct Search<'a> {
    p: Reduced<'a>,
    opts: &'a SolverOptions,
    start: Instant,
    nodes: u64,
    best_obj: Option<f64>,
    best: Option<Vec<bool>>,
    incumbents: Vec<Incumbent>,
}

impl<'a> Search<'a> {
    fn improves(&self, min_obj: f64) -> bool {
        match self.best_obj {
            None => true,
            Some(b) => min_obj < b - TOL,
        }
    }

    fn offer(&mut self, x: Vec<bool>) {
        let inst = self.p.instance;
        let obj = inst.objective_of(&x);
        let min_obj = inst.direction().min_sign() * obj;
        if !self.improves(min_obj) || !inst.violations_of(&x).is_empty() {
            return;
        }
        self.best_obj = Some(min_obj);
        self.best = Some(x.clone());
        let assignment = inst
            .assignment(x)
            .expect("search assignments have instance length");
        self.incumbents.push(Incumbent {
            assignment,
            objective: obj,
            elapsed: self.start.elapsed(),
            nodes: self.nodes,
        });
    }

    /// A bound that cannot lead to a strictly better solution.
    fn prunable(&self, bound: f64) -> bool {
        match self.best_obj {
            None => false,
            Some(b) => {
                if self.p.integral_cost {
                    (bound - 1e-6).ceil() >= b - TOL
                } else {
                    bound >= b - TOL
                }
            }
        }
    }

    fn relaxation(&self, st: &State) -> (LpProblem, Vec<usize>) {
        let p = &self.p;
        let mut local = vec![usize::MAX; p.free.len()];
        let mut cols = Vec::new();
        for (v, &val) in st.val.iter().enumerate() {
            if val == UNSET {
                local[v] = cols.len();
                cols.push(v);
            }
        }
        let mut rows = Vec::new();
        for (r, row) in p.rows.iter().enumerate() {
            if st.redundant(p, r) {
                continue;
            }
            let mut terms = Vec::new();
            let mut fixed_act = 0.0;
            for (&v, &a) in row.vars.iter().zip(&row.coefs) {
                match st.val[v] {
                    UNSET => terms.push((local[v], a)),
                    1 => fixed_act += a,
                    _ => {}
                }
            }
            if terms.is_empty() {
                continue;
            }
            if row.lo == row.hi {
                rows.push(LpRow { terms, sense: Sense::Eq, rhs: row.hi - fixed_act });
            } else {
                if row.hi.is_finite() {
                    rows.push(LpRow {
                        terms: terms.clone(),
                        sense: Sense::Le,
                        rhs: row.hi - fixed_act,
                    });
                }
                if row.lo.is_finite() {
                    rows.push(LpRow { terms, sense: Sense::Ge, rhs: row.lo - fixed_act });
                }
            }
        }
        let lp = LpProblem {
            cost: cols.iter().map(|&v| p.cost[v]).collect(),
            upper: vec![1.0; cols.len()],
            rows,
        };
        (lp, cols)
    }

    /// Fix variables one at a time toward `guide`, flipping on conflict.
    fn dive(&mut self, st: &State, order: &[(usize, f64)]) {
        let mut st = st.clone();
        for &(v, g) in order {
            if st.val[v] != UNSET {
                continue;
            }
            let first: i8 = if g >= 0.5 { 1 } else { 0 };
            let mark = st.trail.len();
            st.assign(&self.p, v, first);
            if st.propagate(&self.p) {
                continue;
            }
            st.undo_to(&self.p, mark);
            st.assign(&self.p, v, 1 - first);
            if !st.propagate(&self.p) {
                return;
            }
        }
        if st.val.iter().all(|&v| v != UNSET) {
            let x = self.p.full_assignment(&st.val);
            self.offer(x);
        }
    }

    fn dive_order(&self, st: &State, lp_x: Option<(&[usize], &[f64])>) -> Vec<(usize, f64)> {
        let mut order: Vec<(usize, f64)> = match lp_x {
            Some((cols, x)) => cols.iter().copied().zip(x.iter().copied()).collect(),
            None => (0..st.val.len())
                .filter(|&v| st.val[v] == UNSET)
                .map(|v| (v, if self.p.cost[v] < 0.0 { 1.0 } else { 0.0 }))
                .collect(),
        };
        order.sort_by(|a, b| {
            let ca = (a.1 - 0.5).abs();
            let cb = (b.1 - 0.5).abs();
            cb.total_cmp(&ca).then(a.0.cmp(&b.0))
        });
        order
    }

    fn out_of_budget(&self, budget: &SolveBudget) -> bool {
        if let Some(limit) = budget.node_limit {
            if self.nodes >= limit {
                return true;
            }
        }
        if let Some(limit) = budget.time_limit {
            if self.start.elapsed() >= limit {
                return true;
            }
        }
        false
    }

    fn lp_cap(&self, lp: &LpProblem) -> usize {
        self.opts
            .lp_iteration_cap
            .unwrap_or(20 * (lp.num_cols() + lp.rows.len()) + 100)
    }
}

pub(crate) fn run(
    instance: &IlpInstance,
    fixed: &[Option<bool>],
    budget: &SolveBudget,
    warm_start: Option<&Assignment>,
    opts: &SolverOptions,
) -> SolveResult {
    let start = Instant::now();
    let Some(p) = Reduced::new(instance, fixed) else {
        return finish(
            Search {
                p: Reduced {
                    instance,
                    free: Vec::new(),
                    base: Vec::new(),
                    cost: Vec::new(),
                    rows: Vec::new(),
                    col_rows: Vec::new(),
                    constant: 0.0,
                    integral_cost: true,
                },
                opts,
                start,
                nodes: 0,
                best_obj: None,
                best: None,
                incumbents: Vec::new(),
            },
            true,
            warm_start,
        );
    };
    let mut search = Search {
        p,
        opts,
        start,
        nodes: 0,
        best_obj: None,
        best: None,
        incumbents: Vec::new(),
    };
    if let Some(w) = warm_start {
        search.best_obj = Some(instance.direction().min_sign() * instance.objective_of(w.values()));
        search.best = Some(w.values().to_vec());
    }

    let k = search.p.free.len();
    let mut stack = vec![Node {
        val: vec![UNSET; k],
        decision: None,
    }];
    let mut complete = true;
    while let Some(node) = stack.pop() {
        if search.out_of_budget(budget) {
            complete = false;
            break;
        }
        search.nodes += 1;
        let is_root = node.decision.is_none();

        let mut st = State::from_values(&search.p, node.val);
        if let Some((v, value)) = node.decision {
            st.assign(&search.p, v, value);
        } else {
            for r in 0..search.p.rows.len() {
                st.queued[r] = true;
                st.queue.push(r);
            }
        }
        if !st.propagate(&search.p) {
            continue;
        }
        st.trail.clear();

        if st.val.iter().all(|&v| v != UNSET) {
            let x = search.p.full_assignment(&st.val);
            search.offer(x);
            continue;
        }

        let fixed_part = search.p.min_objective(&st.val);
        let (lp, cols) = search.relaxation(&st);
        let outcome = lp.solve(search.lp_cap(&lp));
        let lp_x = match outcome {
            LpOutcome::Infeasible => continue,
            LpOutcome::Optimal { objective, x } => {
                if search.prunable(fixed_part + objective) {
                    continue;
                }
                Some(x)
            }
            LpOutcome::IterationLimit | LpOutcome::Unbounded => {
                let trivial: f64 = lp.cost.iter().map(|c| c.min(0.0)).sum();
                if search.prunable(fixed_part + trivial) {
                    continue;
                }
                None
            }
        };

        if let Some(x) = &lp_x {
            if x.iter().all(|v| (v - v.round()).abs() <= TOL) {
                let mut val = st.val.clone();
                for (&v, &xv) in cols.iter().zip(x) {
                    val[v] = if xv > 0.5 { 1 } else { 0 };
                }
                let full = search.p.full_assignment(&val);
                if instance.violations_of(&full).is_empty() {
                    search.offer(full);
                    continue;
                }
            }
        }

        if opts.rounding_dive && (is_root || search.best_obj.is_none()) {
            let order = search.dive_order(&st, lp_x.as_deref().map(|x| (cols.as_slice(), x)));
            search.dive(&st, &order);
            if let (Some(x), Some(_)) = (&lp_x, search.best_obj) {
                let bound = fixed_part + lp.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
                if search.prunable(bound) {
                    continue;
                }
            }
        }

        // most fractional free column, value nearest the relaxation first
        let (var, guide) = match &lp_x {
            Some(x) => {
                let (pos, _) = x
                    .iter()
                    .enumerate()
                    .map(|(pos, &v)| (pos, (v - v.round()).abs()))
                    .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                (cols[pos], x[pos])
            }
            None => {
                let v = cols[0];
                (v, if search.p.cost[v] < 0.0 { 1.0 } else { 0.0 })
            }
        };
        let first: i8 = if guide >= 0.5 { 1 } else { 0 };
        stack.push(Node {
            val: st.val.clone(),
            decision: Some((var, 1 - first)),
        });
        stack.push(Node {
            val: st.val,
            decision: Some((var, first)),
        });
    }
    if !stack.is_empty() {
        complete = false;
    }
    finish(search, complete, warm_start)
}

fn finish(search: Search, complete: bool, warm_start: Option<&Assignment>) -> SolveResult {
    let instance = search.p.instance;
    let best = match (search.incumbents.last(), warm_start) {
        (Some(inc), _) => Some(inc.assignment.clone()),
        (None, Some(w)) => Some(
            instance
                .assignment(w.values().to_vec())
                .expect("warm start length checked"),
        ),
        (None, None) => None,
    };
    let status = match (complete, best.is_some()) {
        (true, true) => SolveStatus::Optimal,
        (true, false) => SolveStatus::Infeasible,
        (false, true) => SolveStatus::FeasibleBudgetExhausted,
        (false, false) => SolveStatus::NoSolutionFound,
    };
    SolveResult {
        status,
        best,
        incumbents: search.incumbents,
        nodes: search.nodes,
        elapsed: search.start.elapsed(),
        warnings: Vec::new(),
    }
}
