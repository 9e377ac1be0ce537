use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Assignment, IlpInstance};
use crate::error::{Error, Result};
use crate::pool::{confidence_scores, rank, SolutionPool};

pub const VAR_FEATURES: usize = 5;
pub const CONS_FEATURES: usize = 5;
pub const EDGE_FEATURES: usize = 1;

/// Variable feature columns.
pub mod var_col {
    pub const OBJECTIVE: usize = 0;
    pub const DEGREE: usize = 1;
    pub const CURRENT: usize = 2;
    pub const CONFIDENCE: usize = 3;
    pub const RANDOM: usize = 4;
}

/// Constraint feature columns: rhs, degree, then the sense one-hot (<=, >=, =).
pub mod cons_col {
    pub const RHS: usize = 0;
    pub const DEGREE: usize = 1;
    pub const SENSE: usize = 2;
}

/// Variable/constraint bipartite encoding of an instance, one edge per
/// nonzero coefficient. Feature matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    num_vars: usize,
    num_cons: usize,
    var_features: Vec<f64>,
    cons_features: Vec<f64>,
    edge_vars: Vec<usize>,
    edge_cons: Vec<usize>,
    edge_features: Vec<f64>,
    seed: u64,
}

fn scale_by_max_abs(values: &[f64]) -> Vec<f64> {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| v / max).collect()
    }
}

/// Build the state graph for `current` against the scores derived from `pool`.
pub fn build_bipartite(
    instance: &IlpInstance,
    pool: &SolutionPool,
    current: &Assignment,
    seed: u64,
) -> Result<BipartiteGraph> {
    if pool.is_empty() {
        return Err(Error::Precondition("solution pool is empty".into()));
    }
    if current.len() != instance.num_vars() || pool.num_vars() != instance.num_vars() {
        return Err(Error::Dimension(format!(
            "instance has {} variables, current {} and pool {}",
            instance.num_vars(),
            current.len(),
            pool.num_vars()
        )));
    }
    if !instance.is_feasible(current) {
        return Err(Error::Precondition("current assignment is infeasible".into()));
    }
    let scores = confidence_scores(pool, &rank(pool))?;
    Ok(BipartiteGraph::encode(instance, current, &scores, seed))
}

impl BipartiteGraph {
    fn encode(instance: &IlpInstance, current: &Assignment, scores: &[f64], seed: u64) -> Self {
        let n = instance.num_vars();
        let m = instance.num_cons();
        let nnz = instance.num_nonzeros();

        let mut var_degree = vec![0.0; n];
        let mut edge_vars = Vec::with_capacity(nnz);
        let mut edge_cons = Vec::with_capacity(nnz);
        let mut coefs = Vec::with_capacity(nnz);
        for (j, row) in instance.constraints().iter().enumerate() {
            for &(i, a) in &row.terms {
                var_degree[i] += 1.0;
                edge_vars.push(i);
                edge_cons.push(j);
                coefs.push(a);
            }
        }
        let edge_features = scale_by_max_abs(&coefs);

        let obj = scale_by_max_abs(instance.objective());
        let max_vdeg = var_degree.iter().copied().fold(0.0_f64, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut var_features = Vec::with_capacity(n * VAR_FEATURES);
        for i in 0..n {
            var_features.extend_from_slice(&[
                obj[i],
                if max_vdeg > 0.0 { var_degree[i] / max_vdeg } else { 0.0 },
                if current.get(i) { 1.0 } else { 0.0 },
                scores[i],
                rng.random::<f64>(),
            ]);
        }

        let rhs: Vec<f64> = instance.constraints().iter().map(|r| r.rhs).collect();
        let rhs = scale_by_max_abs(&rhs);
        let max_cdeg = instance
            .constraints()
            .iter()
            .map(|r| r.terms.len())
            .max()
            .unwrap_or(0) as f64;
        let mut cons_features = Vec::with_capacity(m * CONS_FEATURES);
        for (j, row) in instance.constraints().iter().enumerate() {
            let [le, ge, eq] = row.sense.one_hot();
            cons_features.extend_from_slice(&[
                rhs[j],
                row.terms.len() as f64 / max_cdeg,
                le,
                ge,
                eq,
            ]);
        }

        BipartiteGraph {
            num_vars: n,
            num_cons: m,
            var_features,
            cons_features,
            edge_vars,
            edge_cons,
            edge_features,
            seed,
        }
    }

    /// Assemble a graph from raw parts (used for synthetic states).
    pub fn from_parts(
        var_features: Vec<f64>,
        cons_features: Vec<f64>,
        edges: Vec<(usize, usize)>,
        edge_features: Vec<f64>,
    ) -> Result<Self> {
        if var_features.len() % VAR_FEATURES != 0 || cons_features.len() % CONS_FEATURES != 0 {
            return Err(Error::Dimension("feature matrix width mismatch".into()));
        }
        if edge_features.len() != edges.len() * EDGE_FEATURES {
            return Err(Error::Dimension(format!(
                "{} edges but {} edge features",
                edges.len(),
                edge_features.len()
            )));
        }
        let num_vars = var_features.len() / VAR_FEATURES;
        let num_cons = cons_features.len() / CONS_FEATURES;
        if edges.iter().any(|&(i, j)| i >= num_vars || j >= num_cons) {
            return Err(Error::Dimension("edge endpoint out of range".into()));
        }
        if var_features
            .iter()
            .chain(&cons_features)
            .chain(&edge_features)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("graph features".into()));
        }
        let (edge_vars, edge_cons) = edges.into_iter().unzip();
        Ok(BipartiteGraph {
            num_vars,
            num_cons,
            var_features,
            cons_features,
            edge_vars,
            edge_cons,
            edge_features,
            seed: 0,
        })
    }

    /// Overwrite the current-solution and confidence columns in place.
    pub fn update_solution(&mut self, current: &Assignment, scores: &[f64]) -> Result<()> {
        if current.len() != self.num_vars || scores.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "graph has {} variables, got assignment {} and scores {}",
                self.num_vars,
                current.len(),
                scores.len()
            )));
        }
        for i in 0..self.num_vars {
            let row = &mut self.var_features[i * VAR_FEATURES..(i + 1) * VAR_FEATURES];
            row[var_col::CURRENT] = if current.get(i) { 1.0 } else { 0.0 };
            row[var_col::CONFIDENCE] = scores[i];
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_cons(&self) -> usize {
        self.num_cons
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vars.len()
    }

    pub fn var_features(&self) -> &[f64] {
        &self.var_features
    }

    pub fn cons_features(&self) -> &[f64] {
        &self.cons_features
    }

    pub fn var_feature(&self, i: usize, col: usize) -> f64 {
        self.var_features[i * VAR_FEATURES + col]
    }

    pub fn cons_feature(&self, j: usize, col: usize) -> f64 {
        self.cons_features[j * CONS_FEATURES + col]
    }

    pub fn edge_vars(&self) -> &[usize] {
        &self.edge_vars
    }

    pub fn edge_cons(&self) -> &[usize] {
        &self.edge_cons
    }

    pub fn edge_features(&self) -> &[f64] {
        &self.edge_features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}
