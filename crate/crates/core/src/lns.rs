//! The destroy/repair loop: free a sampled subset of variables, re-solve the
//! restricted program seeded with the incumbent, grow the pool, repeat.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{Family, SizeClass};
use crate::ilp::{build_bipartite, Assignment, BipartiteGraph, IlpInstance};
use crate::pool::{confidence_scores, rank, sample_neighborhood, selection_probabilities, SolutionPool};
use crate::size_policy::{SizeDecision, SizePolicy, SizePolicySpec};
use crate::subsolver::{
    external_solve, solve_sub_with, solve_with, AdapterConfig, Incumbent, SolveBudget, SolveResult, SolveStatus,
    SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// budgets are seconds of wall-clock time
    Wall,
    /// budgets are branch-and-bound node counts
    Nodes,
}

impl std::str::FromStr for BudgetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(BudgetMode::Wall),
            "nodes" => Ok(BudgetMode::Nodes),
            other => Err(Error::Parameter(format!("unknown budget mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for BudgetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BudgetMode::Wall => "wall",
            BudgetMode::Nodes => "nodes",
        })
    }
}

/// How variables are weighted when sampling the neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    /// deviation from the rank-weighted pool confidence
    Pool,
    /// every variable equally likely
    Uniform,
}

impl std::fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionRule::Pool => "pool",
            SelectionRule::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LnsConfig {
    pub initial_budget: f64,
    pub step_budget: f64,
    pub total_budget: f64,
    pub max_steps: usize,
    pub budget_mode: BudgetMode,
    pub size_policy: SizePolicySpec,
    pub selection: SelectionRule,
    pub seed: u64,
    pub pool_cap: Option<usize>,
    pub adapter: Option<AdapterConfig>,
}

impl Default for LnsConfig {
    fn default() -> Self {
        LnsConfig {
            initial_budget: 50.0,
            step_budget: 20.0,
            total_budget: 1000.0,
            max_steps: 100,
            budget_mode: BudgetMode::Nodes,
            size_policy: SizePolicySpec::Fixed { ratio: 0.5 },
            selection: SelectionRule::Pool,
            seed: 0,
            pool_cap: None,
            adapter: None,
        }
    }
}

impl LnsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial_budget", self.initial_budget),
            ("step_budget", self.step_budget),
            ("total_budget", self.total_budget),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
            if self.budget_mode == BudgetMode::Nodes && v < 1.0 {
                return Err(Error::Parameter(format!("{name} must be at least one node")));
            }
        }
        self.size_policy.validate()
    }

    fn budget(&self, amount: f64) -> SolveBudget {
        match self.budget_mode {
            BudgetMode::Wall => SolveBudget::seconds(amount),
            BudgetMode::Nodes => SolveBudget::nodes(amount.floor() as u64),
        }
    }

    /// Use the time allocation of a benchmark dataset class.
    pub fn with_allocation(mut self, (t0, tp, total): (f64, f64, f64)) -> Self {
        self.initial_budget = t0;
        self.step_budget = tp;
        self.total_budget = total;
        self
    }
}

/// Seconds `(initial, per step, total)` allotted to one instance of a dataset.
pub fn allocate_budgets(class: SizeClass, family: Family) -> (f64, f64, f64) {
    match (class, family) {
        (SizeClass::Small, Family::Mis) => (8.0, 4.0, 40.0),
        (SizeClass::Small, Family::Ca) => (12.0, 6.0, 60.0),
        (SizeClass::Small, Family::Mvc) => (6.0, 3.0, 30.0),
        (SizeClass::Small, Family::Sc) => (12.0, 6.0, 60.0),
        (SizeClass::Medium, _) => (60.0, 30.0, 300.0),
        (SizeClass::Hard, _) => (600.0, 300.0, 5000.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub elapsed_s: f64,
    pub nodes_used: u64,
    pub step: usize,
    pub objective: f64,
}

/// Every incumbent change of a run, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub points: Vec<TracePoint>,
}

pub const TRACE_HEADER: [&str; 4] = ["elapsed_s", "nodes_used", "step", "objective"];

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Elapsed time never decreases and the objective never gets worse.
    pub fn is_monotone(&self, dir: crate::ilp::Direction) -> bool {
        self.points.windows(2).all(|w| {
            w[1].elapsed_s >= w[0].elapsed_s
                && w[1].nodes_used >= w[0].nodes_used
                && !dir.better(w[0].objective, w[1].objective)
        })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRACE_HEADER).expect("in-memory csv");
        for p in &self.points {
            w.write_record([
                format!("{:.6}", p.elapsed_s),
                p.nodes_used.to_string(),
                p.step.to_string(),
                p.objective.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| Error::parse(1, e.to_string()))?;
        if header.iter().ne(TRACE_HEADER) {
            return Err(Error::parse(1, "unexpected trace header"));
        }
        let mut points = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::parse(line, "missing field"));
            let bad = || Error::parse(line, "bad number");
            points.push(TracePoint {
                elapsed_s: field(0)?.parse().map_err(|_| bad())?,
                nodes_used: field(1)?.parse().map_err(|_| bad())?,
                step: field(2)?.parse().map_err(|_| bad())?,
                objective: field(3)?.parse().map_err(|_| bad())?,
            });
        }
        Ok(ConvergenceTrace { points })
    }
}

/// What happened in one destroy/repair step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub ratio: f64,
    pub size: usize,
    pub status: SolveStatus,
    pub nodes: u64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub new_incumbents: usize,
    /// the sub-solve was discarded or failed; state is unchanged
    pub failed: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LnsOutcome {
    pub best: Assignment,
    pub best_objective: f64,
    pub initial_objective: f64,
    pub trace: ConvergenceTrace,
    pub pool: SolutionPool,
    pub steps: usize,
    pub nodes_used: u64,
    pub elapsed: Duration,
    /// incumbent streams: the initial solve first, then one per step
    pub streams: Vec<Vec<Incumbent>>,
    pub step_log: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial_objective: f64,
    pub best_objective: f64,
    pub steps: usize,
    pub nodes_used: u64,
    pub elapsed_s: f64,
    pub pool_size: usize,
    pub trace_points: usize,
}

impl LnsOutcome {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            initial_objective: self.initial_objective,
            best_objective: self.best_objective,
            steps: self.steps,
            nodes_used: self.nodes_used,
            elapsed_s: self.elapsed.as_secs_f64(),
            pool_size: self.pool.len(),
            trace_points: self.trace.len(),
        }
    }
}

/// Mutable state of one run; also the transition core of the RL environment.
#[derive(Debug, Clone)]
pub struct LnsState {
    instance: Arc<IlpInstance>,
    config: LnsConfig,
    solver: SolverOptions,
    pool: SolutionPool,
    current: Assignment,
    current_obj: f64,
    initial_obj: f64,
    step: usize,
    nodes_used: u64,
    start: Instant,
    exhausted: bool,
    rng: ChaCha8Rng,
    graph_seed: u64,
    graph: Option<BipartiteGraph>,
    trace: ConvergenceTrace,
    streams: Vec<Vec<Incumbent>>,
    step_log: Vec<StepRecord>,
}

/// Solve the full instance under the initial budget of `config`.
pub fn initial_solve(instance: &IlpInstance, config: &LnsConfig) -> Result<SolveResult> {
    solve_with(instance, &config.budget(config.initial_budget), None, &SolverOptions::default())
}

impl LnsState {
    pub fn initialize(instance: Arc<IlpInstance>, config: LnsConfig) -> Result<Self> {
        config.validate()?;
        let init = initial_solve(&instance, &config)?;
        Self::from_initial(instance, config, &init)
    }

    /// Start from an already computed initial solve (its nodes and time are
    /// charged to this run).
    pub fn from_initial(instance: Arc<IlpInstance>, config: LnsConfig, init: &SolveResult) -> Result<Self> {
        config.validate()?;
        let start = Instant::now() - init.elapsed;
        let Some(best) = init.best.clone() else {
            return Err(Error::InitialSolve(init.status.to_string()));
        };
        let mut pool = SolutionPool::new(instance.direction(), instance.num_vars()).with_cap(config.pool_cap);
        pool.update(init)?;
        let trace = ConvergenceTrace {
            points: init
                .incumbents
                .iter()
                .map(|inc| TracePoint {
                    elapsed_s: inc.elapsed.as_secs_f64(),
                    nodes_used: inc.nodes,
                    step: 0,
                    objective: inc.objective,
                })
                .collect(),
        };
        let current_obj = instance.evaluate_objective(&best)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let graph_seed = rng.random();
        Ok(LnsState {
            solver: SolverOptions::default(),
            pool,
            current: best,
            current_obj,
            initial_obj: current_obj,
            step: 0,
            nodes_used: init.nodes,
            start,
            exhausted: false,
            rng,
            graph_seed,
            graph: None,
            trace,
            streams: vec![init.incumbents.clone()],
            step_log: Vec::new(),
            instance,
            config,
        })
    }

    pub fn instance(&self) -> &IlpInstance {
        &self.instance
    }

    pub fn config(&self) -> &LnsConfig {
        &self.config
    }

    pub fn pool(&self) -> &SolutionPool {
        &self.pool
    }

    pub fn current(&self) -> &Assignment {
        &self.current
    }

    pub fn current_objective(&self) -> f64 {
        self.current_obj
    }

    pub fn initial_objective(&self) -> f64 {
        self.initial_obj
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn nodes_used(&self) -> u64 {
        self.nodes_used
    }

    pub fn trace(&self) -> &ConvergenceTrace {
        &self.trace
    }

    fn remaining_nodes(&self) -> u64 {
        (self.config.total_budget.floor() as u64).saturating_sub(self.nodes_used)
    }

    pub fn is_done(&self) -> bool {
        if self.exhausted || self.step >= self.config.max_steps {
            return true;
        }
        match self.config.budget_mode {
            BudgetMode::Nodes => self.remaining_nodes() == 0,
            BudgetMode::Wall => self.start.elapsed().as_secs_f64() >= self.config.total_budget,
        }
    }

    fn scores(&self) -> Result<Vec<f64>> {
        confidence_scores(&self.pool, &rank(&self.pool))
    }

    /// Sampling law over variables for the next step.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let n = self.instance.num_vars();
        match self.config.selection {
            SelectionRule::Uniform => Ok(vec![1.0 / n as f64; n]),
            SelectionRule::Pool => selection_probabilities(&self.current, &self.scores()?),
        }
    }

    /// State graph for the current solution and pool. Random features are
    /// drawn once per run.
    pub fn observe(&mut self) -> Result<&BipartiteGraph> {
        match &mut self.graph {
            Some(g) => {
                let scores = confidence_scores(&self.pool, &rank(&self.pool))?;
                g.update_solution(&self.current, &scores)?;
            }
            None => {
                self.graph = Some(build_bipartite(&self.instance, &self.pool, &self.current, self.graph_seed)?);
            }
        }
        Ok(self.graph.as_ref().expect("graph just set"))
    }

    /// Per-step seed for size sampling; drawn before [`Self::step_with_ratio`].
    pub fn next_seed(&mut self) -> u64 {
        self.rng.random()
    }

    /// One step with the policy deciding the neighborhood size.
    pub fn step(&mut self, policy: &SizePolicy) -> Result<StepRecord> {
        let seed = self.next_seed();
        let n = self.instance.num_vars();
        let decision = if policy.needs_state() {
            let g = self.observe()?.clone();
            policy.decide(Some(&g), n, seed)
        } else {
            policy.decide(None, n, seed)
        }
        .map_err(|e| self.step_err(e))?;
        self.step_with_decision(decision)
    }

    /// One step freeing `round(ratio · n)` variables.
    pub fn step_with_ratio(&mut self, ratio: f64) -> Result<StepRecord> {
        self.step_with_decision(SizeDecision::from_ratio(ratio, self.instance.num_vars()))
    }

    fn step_err(&self, e: Error) -> Error {
        Error::Step {
            step: self.step + 1,
            source: Box::new(e),
        }
    }

    fn step_with_decision(&mut self, decision: SizeDecision) -> Result<StepRecord> {
        if self.is_done() {
            return Err(Error::Precondition("run is finished".into()));
        }
        let step = self.step + 1;
        let sample_seed = self.rng.random();
        let probs = self.probabilities().map_err(|e| self.step_err(e))?;
        let free = sample_neighborhood(&probs, decision.size, sample_seed).map_err(|e| self.step_err(e))?;
        let mut is_free = vec![false; self.instance.num_vars()];
        for &i in &free {
            is_free[i] = true;
        }
        let fixed: BTreeMap<usize, bool> = (0..is_free.len())
            .filter(|&i| !is_free[i])
            .map(|i| (i, self.current.get(i)))
            .collect();

        let budget = match self.config.budget_mode {
            BudgetMode::Nodes => SolveBudget::nodes(self.remaining_nodes().min(self.config.step_budget.floor() as u64)),
            BudgetMode::Wall => SolveBudget::seconds(self.config.step_budget),
        };
        let offset = self.start.elapsed();
        let result = match &self.config.adapter {
            Some(adapter) => external_solve(&self.instance, &fixed, &budget, &self.current, adapter),
            None => solve_sub_with(&self.instance, &fixed, &budget, &self.current, &self.solver),
        }
        .map_err(|e| self.step_err(e))?;

        let before = self.current_obj;
        let mut record = StepRecord {
            step,
            ratio: decision.ratio,
            size: decision.size,
            status: result.status,
            nodes: result.nodes,
            objective_before: before,
            objective_after: before,
            new_incumbents: 0,
            failed: !result.warnings.is_empty(),
            warnings: result.warnings.clone(),
        };
        self.step = step;
        let nodes_before = self.nodes_used;
        self.nodes_used += result.nodes;

        // a step finishing past the total budget is discarded and ends the run
        if self.config.budget_mode == BudgetMode::Wall
            && self.start.elapsed().as_secs_f64() > self.config.total_budget
        {
            self.exhausted = true;
            record.failed = true;
            record.warnings.push("step finished past the total budget; result discarded".into());
            self.streams.push(Vec::new());
            self.step_log.push(record.clone());
            return Ok(record);
        }

        self.pool.update(&result).map_err(|e| self.step_err(e))?;
        for inc in &result.incumbents {
            self.trace.points.push(TracePoint {
                elapsed_s: (offset + inc.elapsed).as_secs_f64(),
                nodes_used: nodes_before + inc.nodes,
                step,
                objective: inc.objective,
            });
        }
        if let Some(last) = result.incumbents.last() {
            self.current = last.assignment.clone();
            self.current_obj = last.objective;
        }
        record.objective_after = self.current_obj;
        record.new_incumbents = result.incumbents.len();
        self.streams.push(result.incumbents);
        self.step_log.push(record.clone());
        Ok(record)
    }

    pub fn into_outcome(self) -> LnsOutcome {
        LnsOutcome {
            best_objective: self.current_obj,
            best: self.current,
            initial_objective: self.initial_obj,
            trace: self.trace,
            pool: self.pool,
            steps: self.step,
            nodes_used: self.nodes_used,
            elapsed: self.start.elapsed(),
            streams: self.streams,
            step_log: self.step_log,
        }
    }
}

/// Run the whole search with the size policy named in `config`.
pub fn run(instance: &IlpInstance, config: &LnsConfig) -> Result<LnsOutcome> {
    let policy = SizePolicy::from_spec(&config.size_policy)?;
    run_with_policy(instance, config, &policy)
}

/// Run with an already constructed (e.g. trained, in-memory) size policy.
pub fn run_with_policy(instance: &IlpInstance, config: &LnsConfig, policy: &SizePolicy) -> Result<LnsOutcome> {
    let mut state = LnsState::initialize(Arc::new(instance.clone()), config.clone())?;
    while !state.is_done() {
        state.step(policy)?;
    }
    Ok(state.into_outcome())
}
