use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b` under this direction.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }

    /// Improvement of `new` over `old`, positive when `new` is better.
    pub fn improvement(self, old: f64, new: f64) -> f64 {
        match self {
            Direction::Minimize => old - new,
            Direction::Maximize => new - old,
        }
    }

    /// Objective coefficient multiplier that turns this direction into minimization.
    pub fn min_sign(self) -> f64 {
        match self {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Sense::Le => [1.0, 0.0, 0.0],
            Sense::Ge => [0.0, 1.0, 0.0],
            Sense::Eq => [0.0, 0.0, 1.0],
        }
    }

    /// Signed slack of `lhs` against `rhs`; negative means violated.
    pub fn slack(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => rhs - lhs,
            Sense::Ge => lhs - rhs,
            Sense::Eq => -(lhs - rhs).abs(),
        }
    }

    pub fn satisfied(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Eq => lhs == rhs,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// One sparse row `Σ a_i x_i (sense) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Constraint { terms, sense, rhs }
    }

    pub fn activity(&self, values: &[bool]) -> f64 {
        self.terms
            .iter()
            .filter(|&&(i, _)| values[i])
            .map(|&(_, a)| a)
            .sum()
    }
}

/// A binary integer linear program. Every variable has domain {0, 1}.
///
/// Row terms are kept sorted by column index.
///
/// Coefficients are stored as `f64`. All bundled generators emit small
/// integers, for which activities are computed exactly, so feasibility is
/// checked without tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpInstance {
    num_vars: usize,
    objective: Vec<f64>,
    direction: Direction,
    constraints: Vec<Constraint>,
}

impl IlpInstance {
    pub fn new(
        objective: Vec<f64>,
        direction: Direction,
        constraints: Vec<Constraint>,
    ) -> Result<Self> {
        let num_vars = objective.len();
        if let Some(i) = objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::Model(format!("objective coefficient {i} is not finite")));
        }
        let mut constraints = constraints;
        for (j, row) in constraints.iter_mut().enumerate() {
            row.terms.sort_by_key(|&(i, _)| i);
            if row.terms.is_empty() {
                return Err(Error::Model(format!("constraint {j} is empty")));
            }
            if !row.rhs.is_finite() {
                return Err(Error::Model(format!("rhs of constraint {j} is not finite")));
            }
            if let Some(w) = row.terms.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Model(format!(
                    "constraint {j} lists column {} twice",
                    w[0].0
                )));
            }
            for &(i, a) in &row.terms {
                if i >= num_vars {
                    return Err(Error::Model(format!(
                        "constraint {j} references column {i} but only {num_vars} exist"
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Model(format!(
                        "coefficient of column {i} in constraint {j} is not finite"
                    )));
                }
            }
        }
        Ok(IlpInstance {
            num_vars,
            objective,
            direction,
            constraints,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_cons(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|r| r.terms.len()).sum()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// `Σ c_i x_i`, independent of the objective direction.
    pub fn evaluate_objective(&self, assignment: &Assignment) -> Result<f64> {
        self.check_len(assignment)?;
        Ok(self.objective_of(assignment.values()))
    }

    pub(crate) fn objective_of(&self, values: &[bool]) -> f64 {
        self.objective
            .iter()
            .zip(values)
            .filter(|(_, &x)| x)
            .map(|(c, _)| *c)
            .sum()
    }

    /// Rows violated by `assignment` together with their (negative) slack.
    pub fn check_feasibility(&self, assignment: &Assignment) -> Result<Vec<Violation>> {
        self.check_len(assignment)?;
        Ok(self.violations_of(assignment.values()))
    }

    pub(crate) fn violations_of(&self, values: &[bool]) -> Vec<Violation> {
        self.constraints
            .iter()
            .enumerate()
            .filter_map(|(row, c)| {
                let lhs = c.activity(values);
                (!c.sense.satisfied(lhs, c.rhs)).then(|| Violation {
                    row,
                    slack: c.sense.slack(lhs, c.rhs),
                })
            })
            .collect()
    }

    pub fn is_feasible(&self, assignment: &Assignment) -> bool {
        assignment.len() == self.num_vars
            && self
                .constraints
                .iter()
                .all(|c| c.sense.satisfied(c.activity(assignment.values()), c.rhs))
    }

    /// Builds an assignment with its objective cached.
    pub fn assignment(&self, values: Vec<bool>) -> Result<Assignment> {
        let mut a = Assignment::new(values);
        self.check_len(&a)?;
        a.objective = Some(self.objective_of(a.values()));
        Ok(a)
    }

    fn check_len(&self, assignment: &Assignment) -> Result<()> {
        if assignment.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "assignment has {} values, instance has {} variables",
                assignment.len(),
                self.num_vars
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub row: usize,
    pub slack: f64,
}

/// A 0/1 vector with an optional cached objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<bool>,
    objective: Option<f64>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment {
            values,
            objective: None,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Assignment::new(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Assignment::new(vec![true; n])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Assignment::new(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.values[i]
    }

    pub fn objective(&self) -> Option<f64> {
        self.objective
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()
    }
}
