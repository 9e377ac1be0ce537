//! Benchmark suites: many LNS runs over instances × methods × repetitions,
//! written as one CSV row each, plus aggregation into summary tables.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{read_instance, FileFormat, IlpInstance};
use crate::lns::{initial_solve, BudgetMode, ConvergenceTrace, LnsConfig, LnsState, SelectionRule};
use crate::size_policy::{SizePolicy, SizePolicySpec};
use crate::subsolver::SolveResult;

/// A size policy paired with a selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub size_policy: SizePolicySpec,
    #[serde(default = "pool_rule")]
    pub selection: SelectionRule,
}

fn pool_rule() -> SelectionRule {
    SelectionRule::Pool
}

impl Method {
    pub fn new(name: &str, size_policy: SizePolicySpec, selection: SelectionRule) -> Self {
        Method {
            name: name.into(),
            size_policy,
            selection,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub name: String,
    pub instance: Arc<IlpInstance>,
}

impl BenchInstance {
    pub fn new(name: impl Into<String>, instance: IlpInstance) -> Self {
        BenchInstance {
            name: name.into(),
            instance: Arc::new(instance),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let instance = read_instance(path, FileFormat::from_path(path))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(BenchInstance::new(name, instance))
    }
}

#[derive(Debug, Clone)]
pub struct BenchSuite {
    pub instances: Vec<BenchInstance>,
    pub methods: Vec<Method>,
    /// budgets and sub-solver settings shared by every run
    pub lns: LnsConfig,
    pub repetitions: usize,
    pub seed_base: u64,
}

impl BenchSuite {
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() || self.methods.is_empty() || self.repetitions == 0 {
            return Err(Error::Parameter(
                "a suite needs at least one instance, one method and one repetition".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.methods {
            if !seen.insert(&m.name) {
                return Err(Error::Parameter(format!("duplicate method name {:?}", m.name)));
            }
            m.size_policy.validate()?;
        }
        self.lns.validate()
    }

    /// Seed of a run; shared across methods so comparisons are paired.
    pub fn run_seed(&self, instance: usize, rep: usize) -> u64 {
        self.seed_base
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(((instance as u64) << 24) | rep as u64)
    }

    pub fn num_runs(&self) -> usize {
        self.instances.len() * self.methods.len() * self.repetitions
    }
}

pub const RESULTS_HEADER: [&str; 11] = [
    "instance",
    "method",
    "rep",
    "seed",
    "status",
    "budget_mode",
    "initial_objective",
    "objective",
    "elapsed",
    "steps",
    "nodes_used",
];

/// One finished (or failed) run. `elapsed` is in budget units: seconds in
/// wall mode, nodes in node mode, so node-mode files are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub method: String,
    pub rep: usize,
    pub seed: u64,
    pub status: String,
    pub budget_mode: BudgetMode,
    pub initial_objective: Option<f64>,
    pub objective: Option<f64>,
    pub elapsed: f64,
    pub steps: usize,
    pub nodes_used: u64,
}

impl BenchRow {
    fn key(&self) -> (&str, &str, usize) {
        (&self.instance, &self.method, self.rep)
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub row: BenchRow,
    pub trace: Option<ConvergenceTrace>,
}

fn run_one(
    suite: &BenchSuite,
    policies: &[SizePolicy],
    initial: &[Option<SolveResult>],
    (ii, mi, rep): (usize, usize, usize),
) -> BenchRun {
    let inst = &suite.instances[ii];
    let method = &suite.methods[mi];
    let seed = suite.run_seed(ii, rep);
    let config = LnsConfig {
        size_policy: method.size_policy.clone(),
        selection: method.selection,
        seed,
        ..suite.lns.clone()
    };
    let mut row = BenchRow {
        instance: inst.name.clone(),
        method: method.name.clone(),
        rep,
        seed,
        status: String::new(),
        budget_mode: config.budget_mode,
        initial_objective: None,
        objective: None,
        elapsed: 0.0,
        steps: 0,
        nodes_used: 0,
    };
    let result = (|| {
        let mut state = match &initial[ii] {
            Some(init) => LnsState::from_initial(Arc::clone(&inst.instance), config.clone(), init)?,
            None => LnsState::initialize(Arc::clone(&inst.instance), config.clone())?,
        };
        while !state.is_done() {
            state.step(&policies[mi])?;
        }
        Ok::<_, Error>(state.into_outcome())
    })();
    match result {
        Ok(out) => {
            row.status = "ok".into();
            row.initial_objective = Some(out.initial_objective);
            row.objective = Some(out.best_objective);
            row.steps = out.steps;
            row.nodes_used = out.nodes_used;
            row.elapsed = match config.budget_mode {
                BudgetMode::Nodes => out.nodes_used as f64,
                BudgetMode::Wall => out.elapsed.as_secs_f64(),
            };
            BenchRun {
                row,
                trace: Some(out.trace),
            }
        }
        Err(e) => {
            log::warn!("{} / {} / rep {rep}: {e}", inst.name, method.name);
            row.status = format!("error: {e}");
            BenchRun { row, trace: None }
        }
    }
}

/// Execute every run on `jobs` workers; rows come back sorted by
/// (instance, method, rep) whatever the execution order.
pub fn run_suite(suite: &BenchSuite, jobs: usize) -> Result<Vec<BenchRun>> {
    suite.validate()?;
    // learned checkpoints must load before anything runs
    let policies = suite
        .methods
        .iter()
        .map(|m| SizePolicy::from_spec(&m.size_policy))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("worker pool: {e}")))?;
    let cells: Vec<(usize, usize, usize)> = (0..suite.instances.len())
        .flat_map(|i| (0..suite.methods.len()).flat_map(move |m| (0..suite.repetitions).map(move |r| (i, m, r))))
        .collect();
    let mut runs = pool.install(|| {
        // in node mode the initial solve is deterministic, so it is shared
        let initial: Vec<Option<SolveResult>> = if suite.lns.budget_mode == BudgetMode::Nodes {
            suite
                .instances
                .par_iter()
                .map(|b| initial_solve(&b.instance, &suite.lns).ok())
                .collect()
        } else {
            vec![None; suite.instances.len()]
        };
        cells
            .par_iter()
            .map(|&cell| run_one(suite, &policies, &initial, cell))
            .collect::<Vec<_>>()
    });
    runs.sort_by(|a, b| a.row.key().cmp(&b.row.key()));
    Ok(runs)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn results_to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory csv");
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.method.clone(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            r.budget_mode.to_string(),
            fmt_opt(r.initial_objective),
            fmt_opt(r.objective),
            r.elapsed.to_string(),
            r.steps.to_string(),
            r.nodes_used.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn results_from_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::parse(1, e.to_string()))?;
    if header.iter().ne(RESULTS_HEADER) {
        return Err(Error::parse(1, "unexpected results header"));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(line, format!("bad number {s:?}")));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let int = |s: &str| s.parse::<u64>().map_err(|_| Error::parse(line, format!("bad integer {s:?}")));
        rows.push(BenchRow {
            instance: f(0).into(),
            method: f(1).into(),
            rep: int(f(2))? as usize,
            seed: int(f(3))?,
            status: f(4).into(),
            budget_mode: f(5).parse().map_err(|_| Error::parse(line, "bad budget mode"))?,
            initial_objective: opt(f(6))?,
            objective: opt(f(7))?,
            elapsed: num(f(8))?,
            steps: int(f(9))? as usize,
            nodes_used: int(f(10))?,
        });
    }
    Ok(rows)
}

pub const TRACE_LONG_HEADER: [&str; 7] = ["instance", "method", "rep", "elapsed_s", "nodes_used", "step", "objective"];

/// File name of a run's trace inside a trace directory.
pub fn trace_file_name(row: &BenchRow) -> String {
    let clean = |s: &str| s.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_");
    format!("{}__{}__{}.csv", clean(&row.instance), clean(&row.method), row.rep)
}

/// Merge per-run trace files into one long-format table for plotting.
pub fn merge_traces(rows: &[BenchRow], trace_dir: &Path) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_LONG_HEADER).expect("in-memory csv");
    for row in rows {
        let path: PathBuf = trace_dir.join(trace_file_name(row));
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        for p in ConvergenceTrace::from_csv(&text)?.points {
            w.write_record([
                row.instance.clone(),
                row.method.clone(),
                row.rep.to_string(),
                format!("{:.6}", p.elapsed_s),
                p.nodes_used.to_string(),
                p.step.to_string(),
                p.objective.to_string(),
            ])
            .expect("in-memory csv");
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv"))
}

/// Mean and spread of one group of final objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instance: String,
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    /// population convention (divide by n)
    pub std_pop: f64,
    /// sample convention (divide by n - 1); 0 for a single run
    pub std_sample: f64,
}

pub const REPORT_HEADER: [&str; 7] = ["instance", "method", "runs", "failures", "mean", "std_pop", "std_sample"];

/// `(mean, population std, sample std)`.
pub fn mean_std(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let sample = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    (mean, (ss / n as f64).sqrt(), sample)
}

/// Per (instance, method) aggregates, followed by one `all` row per method
/// averaging over every instance.
pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String), (Vec<f64>, usize)> = BTreeMap::new();
    let mut overall: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.instance.clone(), r.method.clone())).or_default();
        let o = overall.entry(r.method.clone()).or_default();
        match r.objective {
            Some(v) if r.status == "ok" => {
                g.0.push(v);
                o.0.push(v);
            }
            _ => {
                g.1 += 1;
                o.1 += 1;
            }
        }
    }
    let make = |instance: String, method: String, (vals, failures): (Vec<f64>, usize)| {
        let (mean, std_pop, std_sample) = mean_std(&vals);
        Aggregate {
            instance,
            method,
            runs: vals.len(),
            failures,
            mean,
            std_pop,
            std_sample,
        }
    };
    let mut out: Vec<Aggregate> = groups.into_iter().map(|((i, m), g)| make(i, m, g)).collect();
    out.extend(overall.into_iter().map(|(m, g)| make("all".into(), m, g)));
    out
}

pub fn report_to_csv(aggs: &[Aggregate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory csv");
    for a in aggs {
        w.write_record([
            a.instance.clone(),
            a.method.clone(),
            a.runs.to_string(),
            a.failures.to_string(),
            a.mean.to_string(),
            a.std_pop.to_string(),
            a.std_sample.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

/// Paired comparison of two methods: for each instance, the mean objective
/// over repetitions; returns `(wins of a, ties, instances compared)` where a
/// win means `a` is strictly better.
pub fn paired_wins(rows: &[BenchRow], a: &str, b: &str, direction: crate::ilp::Direction) -> (usize, usize, usize) {
    let mut per: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for r in rows {
        if let (Some(v), "ok") = (r.objective, r.status.as_str()) {
            per.entry((&r.instance, &r.method)).or_default().push(v);
        }
    }
    let mut instances: Vec<&str> = rows.iter().map(|r| r.instance.as_str()).collect();
    instances.sort_unstable();
    instances.dedup();
    let (mut wins, mut ties, mut n) = (0, 0, 0);
    for inst in instances {
        let (Some(va), Some(vb)) = (per.get(&(inst, a)), per.get(&(inst, b))) else {
            continue;
        };
        let (ma, mb) = (mean_std(va).0, mean_std(vb).0);
        n += 1;
        if direction.better(ma, mb) {
            wins += 1;
        } else if ma == mb {
            ties += 1;
        }
    }
    (wins, ties, n)
}
