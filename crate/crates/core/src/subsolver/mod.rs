//! Budgeted exact solving of binary programs and of their fixed-variable
//! restrictions. Every strictly improving solution is reported so callers can
//! grow a solution pool from the stream.

mod bnb;
pub mod external;
mod simplex;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{Assignment, IlpInstance};

pub use external::{external_solve, AdapterConfig};

/// Wall-clock and/or node limits. At least one limit must be set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolveBudget {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
}

impl SolveBudget {
    pub fn nodes(limit: u64) -> Self {
        SolveBudget {
            time_limit: None,
            node_limit: Some(limit),
        }
    }

    pub fn seconds(limit: f64) -> Self {
        SolveBudget {
            time_limit: Some(Duration::from_secs_f64(limit)),
            node_limit: None,
        }
    }

    /// No limit at all; only valid for internal exact solves.
    pub fn unlimited() -> Self {
        SolveBudget::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_limit.is_none() && self.node_limit.is_none() {
            return Err(Error::Parameter("solve budget needs a time or node limit".into()));
        }
        if self.time_limit.is_some_and(|t| t.is_zero()) || self.node_limit == Some(0) {
            return Err(Error::Parameter("solve budget limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleBudgetExhausted,
    Infeasible,
    NoSolutionFound,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleBudgetExhausted => "feasible-budget-exhausted",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NoSolutionFound => "no-solution-found",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One improving solution, stamped with when it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub assignment: Assignment,
    pub objective: f64,
    pub elapsed: Duration,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub best: Option<Assignment>,
    /// New solutions only, strictly improving. A warm start is not repeated here.
    pub incumbents: Vec<Incumbent>,
    pub nodes: u64,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn best_objective(&self) -> Option<f64> {
        self.best.as_ref().and_then(|a| a.objective())
    }
}

/// Tuning knobs of the built-in backend.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Simplex iteration cap per node; `None` scales with the node LP size.
    pub lp_iteration_cap: Option<usize>,
    pub rounding_dive: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lp_iteration_cap: None,
            rounding_dive: true,
        }
    }
}

fn check_warm_start(instance: &IlpInstance, warm: &Assignment) -> Result<()> {
    if warm.len() != instance.num_vars() {
        return Err(Error::Dimension(format!(
            "warm start has {} values, instance has {} variables",
            warm.len(),
            instance.num_vars()
        )));
    }
    if !instance.is_feasible(warm) {
        return Err(Error::Precondition("warm start is infeasible".into()));
    }
    Ok(())
}

/// Solve the whole instance by branch-and-bound.
pub fn solve(
    instance: &IlpInstance,
    budget: &SolveBudget,
    warm_start: Option<&Assignment>,
) -> Result<SolveResult> {
    solve_with(instance, budget, warm_start, &SolverOptions::default())
}

pub fn solve_with(
    instance: &IlpInstance,
    budget: &SolveBudget,
    warm_start: Option<&Assignment>,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    if let Some(w) = warm_start {
        check_warm_start(instance, w)?;
    }
    let fixed = vec![None; instance.num_vars()];
    Ok(bnb::run(instance, &fixed, budget, warm_start, opts))
}

/// Solve with the given per-variable fixings and no warm start.
pub fn solve_fixed(
    instance: &IlpInstance,
    fixed: &[Option<bool>],
    budget: &SolveBudget,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    if fixed.len() != instance.num_vars() {
        return Err(Error::Dimension(format!(
            "{} fixings for {} variables",
            fixed.len(),
            instance.num_vars()
        )));
    }
    Ok(bnb::run(instance, fixed, budget, None, opts))
}

/// Convert a fixing map into a dense per-variable vector.
pub fn dense_fixings(num_vars: usize, fixed: &BTreeMap<usize, bool>) -> Result<Vec<Option<bool>>> {
    let mut dense = vec![None; num_vars];
    for (&i, &v) in fixed {
        if i >= num_vars {
            return Err(Error::Dimension(format!(
                "fixed variable {i} out of range for {num_vars} variables"
            )));
        }
        dense[i] = Some(v);
    }
    Ok(dense)
}

/// Re-optimize the free variables with the rest pinned to `fixed`.
/// The incumbent seeds the search, so the result never gets worse.
pub fn solve_sub(
    instance: &IlpInstance,
    fixed: &BTreeMap<usize, bool>,
    budget: &SolveBudget,
    incumbent: &Assignment,
) -> Result<SolveResult> {
    solve_sub_with(instance, fixed, budget, incumbent, &SolverOptions::default())
}

pub fn solve_sub_with(
    instance: &IlpInstance,
    fixed: &BTreeMap<usize, bool>,
    budget: &SolveBudget,
    incumbent: &Assignment,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let dense = dense_fixings(instance.num_vars(), fixed)?;
    check_warm_start(instance, incumbent)?;
    if let Some((&i, _)) = fixed.iter().find(|(&i, &v)| incumbent.get(i) != v) {
        return Err(Error::Precondition(format!(
            "variable {i} is fixed away from the incumbent value"
        )));
    }
    Ok(bnb::run(instance, &dense, budget, Some(incumbent), opts))
}
