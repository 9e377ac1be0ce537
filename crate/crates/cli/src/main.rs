mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hyplns::bench::{self, BenchInstance, BenchSuite, Method};
use hyplns::generators::GenSpec;
use hyplns::ilp::{mps, read_instance, write_instance, FileFormat};
use hyplns::lns::{self, BudgetMode, SelectionRule};
use hyplns::rl::{self, LnsEnvConfig};
use hyplns::size_policy::SizePolicySpec;
use hyplns::subsolver::{external::format_solution, solve_fixed, AdapterConfig, SolveBudget, SolverOptions};

use config::{ConfigError, FileConfig};

#[derive(Parser)]
#[command(name = "hyplns", version, about = "Large neighborhood search for binary integer programs")]
struct Cli {
    /// TOML file with [generate], [lns], [solve], [policy], [ppo], [train] and [bench] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides every seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    budget_mode: Option<BudgetMode>,
    /// worker threads for bench and training rollouts
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn parse_mode(s: &str) -> std::result::Result<BudgetMode, String> {
    s.parse().map_err(|e: hyplns::Error| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<SizePolicySpec, String> {
    s.parse().map_err(|e: hyplns::Error| e.to_string())
}

fn parse_selection(s: &str) -> std::result::Result<SelectionRule, String> {
    match s {
        "pool" => Ok(SelectionRule::Pool),
        "uniform" => Ok(SelectionRule::Uniform),
        _ => Err(format!("unknown selection rule {s:?} (pool or uniform)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded instances of one family
    Generate(GenerateArgs),
    /// Run the search on one instance
    Solve(SolveArgs),
    /// Train a size policy with PPO
    Train(TrainArgs),
    /// Run a benchmark suite into a results CSV
    Bench(BenchArgs),
    /// Aggregate a results CSV
    Report(ReportArgs),
    /// Solve an MPS file with the built-in solver (external adapter protocol)
    MpsSolve(MpsSolveArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: Option<String>,
    /// small, medium or hard dataset sizes
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// write MPS instead of the canonical format
    #[arg(long)]
    mps: bool,
}

#[derive(Args, Default)]
struct LnsArgs {
    #[arg(long)]
    initial_budget: Option<f64>,
    #[arg(long)]
    step_budget: Option<f64>,
    #[arg(long)]
    total_budget: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// fixed:0.5, gaussian[:mean,std], uniform[:low,high], beta[:a,b], learned:<path>
    #[arg(long, value_parser = parse_policy)]
    size_policy: Option<SizePolicySpec>,
    #[arg(long, value_parser = parse_selection)]
    selection: Option<SelectionRule>,
    /// external solver command template, e.g. "solver {mps} {solution_out} {time_limit}"
    #[arg(long)]
    adapter: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    lns: LnsArgs,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, num_args = 1..)]
    instances: Vec<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    lns: LnsArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, num_args = 1..)]
    instances: Vec<PathBuf>,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[command(flatten)]
    lns: LnsArgs,
}

#[derive(Args)]
struct ReportArgs {
    results: PathBuf,
    /// aggregated table (default: print to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// per-run traces written by bench
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// merged long-format trace file
    #[arg(long, requires = "trace_dir")]
    traces_out: Option<PathBuf>,
}

#[derive(Args)]
struct MpsSolveArgs {
    mps: PathBuf,
    solution_out: PathBuf,
    #[arg(long)]
    time_limit: Option<f64>,
    /// 0 means no node limit
    #[arg(long)]
    node_limit: Option<u64>,
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl LnsArgs {
    fn apply(&self, cfg: &mut hyplns::lns::LnsConfig) {
        if let Some(v) = self.initial_budget {
            cfg.initial_budget = v;
        }
        if let Some(v) = self.step_budget {
            cfg.step_budget = v;
        }
        if let Some(v) = self.total_budget {
            cfg.total_budget = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = &self.size_policy {
            cfg.size_policy = v.clone();
        }
        if let Some(v) = self.selection {
            cfg.selection = v;
        }
        if let Some(cmd) = &self.adapter {
            cfg.adapter = Some(AdapterConfig {
                command: cmd.clone(),
                ..cfg.adapter.clone().unwrap_or_default()
            });
        }
    }
}

fn load_config(cli: &Cli) -> Result<FileConfig> {
    let mut cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.generate.seed = seed;
        cfg.lns.seed = seed;
        cfg.ppo.seed = seed;
        cfg.bench.seed_base = seed;
    }
    if let Some(mode) = cli.budget_mode {
        cfg.lns.budget_mode = mode;
    }
    if let Some(jobs) = cli.jobs {
        cfg.bench.jobs = jobs;
    }
    Ok(cfg)
}

fn load_instance(path: &Path) -> Result<hyplns::ilp::IlpInstance> {
    read_instance(path, FileFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn cmd_generate(args: &GenerateArgs, mut cfg: FileConfig) -> Result<()> {
    let g = &mut cfg.generate;
    if let Some(f) = &args.family {
        g.family = f.parse().map_err(|e: hyplns::Error| config_err(e.to_string()))?;
    }
    if let Some(c) = &args.class {
        g.class = Some(c.parse().map_err(|e: hyplns::Error| config_err(e.to_string()))?);
    }
    g.n = args.n.or(g.n);
    g.m = args.m.or(g.m);
    g.count = args.count.unwrap_or(g.count);
    if let Some(d) = &args.out_dir {
        g.out_dir = d.clone();
    }
    g.mps |= args.mps;
    let (dn, dm) = g.family.dataset_size(g.class.unwrap_or(hyplns::generators::SizeClass::Small));
    let (n, m) = (g.n.unwrap_or(dn), g.m.unwrap_or(dm));
    std::fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
    let ext = if g.mps { "mps" } else { "ilp" };
    for k in 0..g.count {
        let seed = g.seed + k as u64;
        let spec = GenSpec {
            family: g.family,
            n,
            m,
            seed,
        };
        let inst = spec.generate().map_err(|e| config_err(e.to_string()))?;
        let path = g.out_dir.join(format!("{}_{n}_{m}_{seed}.{ext}", g.family));
        let format = if g.mps { FileFormat::Mps } else { FileFormat::Canonical };
        write_instance(&inst, &path, format)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs, mut cfg: FileConfig) -> Result<()> {
    args.lns.apply(&mut cfg.lns);
    cfg.lns.validate().map_err(|e| config_err(e.to_string()))?;
    let policy = hyplns::size_policy::SizePolicy::from_spec(&cfg.lns.size_policy)
        .map_err(|e| config_err(format!("size policy: {e}")))?;
    let instance = load_instance(&args.instance)?;
    let out = lns::run_with_policy(&instance, &cfg.lns, &policy)?;
    let summary = serde_json::to_string(&out.summary())?;
    println!("{summary}");
    if let Some(p) = args.trace.as_ref().or(cfg.solve.trace.as_ref()) {
        out.trace.write_csv(p)?;
    }
    if let Some(p) = args.summary.as_ref().or(cfg.solve.summary.as_ref()) {
        std::fs::write(p, format!("{summary}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, mut cfg: FileConfig) -> Result<()> {
    args.lns.apply(&mut cfg.lns);
    if let Some(it) = args.iterations {
        cfg.ppo.iterations = it;
    }
    let paths = if args.instances.is_empty() { &cfg.train.instances } else { &args.instances };
    if paths.is_empty() {
        return Err(config_err("train needs instances (--instances or [train] instances)"));
    }
    cfg.ppo.validate().map_err(|e| config_err(e.to_string()))?;
    cfg.lns.validate().map_err(|e| config_err(e.to_string()))?;
    let instances = paths.iter().map(|p| load_instance(p)).collect::<Result<Vec<_>>>()?;
    let out_dir = args.out_dir.clone().unwrap_or(cfg.train.out_dir.clone());
    let env_cfg = LnsEnvConfig {
        lns: cfg.lns.clone(),
        episode_len: cfg.train.episode_len,
        k_r: cfg.ppo.k_r,
    };
    let out = rl::train_on_instances(instances, &env_cfg, cfg.policy.clone(), &cfg.ppo, Some(&out_dir))?;
    if let Some(last) = out.log.last() {
        println!(
            "trained {} iterations; last return {} ; checkpoint {}",
            last.iter,
            last.return_mean,
            out_dir.join("policy.json").display()
        );
    }
    Ok(())
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::new("fixed50", SizePolicySpec::Fixed { ratio: 0.5 }, SelectionRule::Pool),
        Method::new("fixed50-uniform", SizePolicySpec::Fixed { ratio: 0.5 }, SelectionRule::Uniform),
        Method::new("gaussian", SizePolicySpec::gaussian(), SelectionRule::Pool),
        Method::new("uniform", SizePolicySpec::uniform(), SelectionRule::Pool),
        Method::new("beta", SizePolicySpec::beta(), SelectionRule::Pool),
    ]
}

fn cmd_bench(args: &BenchArgs, mut cfg: FileConfig) -> Result<()> {
    args.lns.apply(&mut cfg.lns);
    let b = &mut cfg.bench;
    if !args.instances.is_empty() {
        b.instances = args.instances.clone();
    }
    if let Some(r) = args.repetitions {
        b.repetitions = r;
    }
    if b.instances.is_empty() {
        return Err(config_err("bench needs instances (--instances or [bench] instances)"));
    }
    let methods = if b.methods.is_empty() { default_methods() } else { b.methods.clone() };
    let instances = b
        .instances
        .iter()
        .map(|p| BenchInstance::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let suite = BenchSuite {
        instances,
        methods,
        lns: cfg.lns.clone(),
        repetitions: b.repetitions,
        seed_base: b.seed_base,
    };
    suite.validate().map_err(|e| config_err(e.to_string()))?;
    let runs = bench::run_suite(&suite, b.jobs).map_err(|e| match e {
        hyplns::Error::Load { .. } | hyplns::Error::Io { .. } => config_err(format!("startup: {e}")),
        other => other.into(),
    })?;
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    let results = args.results.clone().unwrap_or(b.results.clone());
    std::fs::write(&results, bench::results_to_csv(&rows)).with_context(|| format!("writing {}", results.display()))?;
    if let Some(dir) = args.trace_dir.as_ref().or(b.trace_dir.as_ref()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for run in &runs {
            if let Some(t) = &run.trace {
                t.write_csv(&dir.join(bench::trace_file_name(&run.row)))?;
            }
        }
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} runs ({failed} failed) -> {}", rows.len(), results.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.results).with_context(|| format!("reading {}", args.results.display()))?;
    let rows = bench::results_from_csv(&text)?;
    let table = bench::report_to_csv(&bench::aggregate(&rows));
    match &args.out {
        Some(p) => std::fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{table}"),
    }
    if let (Some(dir), Some(out)) = (&args.trace_dir, &args.traces_out) {
        let merged = bench::merge_traces(&rows, dir)?;
        std::fs::write(out, merged).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_mps_solve(args: &MpsSolveArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.mps).with_context(|| format!("reading {}", args.mps.display()))?;
    let problem = mps::parse(&text)?;
    let budget = SolveBudget {
        time_limit: args
            .time_limit
            .filter(|t| *t > 0.0)
            .map(std::time::Duration::from_secs_f64),
        node_limit: args.node_limit.filter(|n| *n > 0),
    };
    let result = solve_fixed(&problem.instance, &problem.fixed, &budget, &SolverOptions::default())?;
    match &result.best {
        Some(best) => {
            let body = format!("# status {}\n{}", result.status, format_solution(best.values()));
            std::fs::write(&args.solution_out, body)
                .with_context(|| format!("writing {}", args.solution_out.display()))?;
            Ok(())
        }
        None => anyhow::bail!("no feasible solution ({})", result.status),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<hyplns::Error>() {
            if matches!(e, hyplns::Error::Parameter(_)) {
                return 2;
            }
        }
    }
    3
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if let Some(jobs) = cli.jobs {
        // best effort: only the first call configures the global pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cfg),
        Command::Solve(a) => cmd_solve(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Bench(a) => cmd_bench(a, cfg),
        Command::Report(a) => cmd_report(a),
        Command::MpsSolve(a) => cmd_mps_solve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
