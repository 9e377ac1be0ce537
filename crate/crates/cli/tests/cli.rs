use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyplns::bench::results_from_csv;
use hyplns::generators::{Family, GenSpec};
use hyplns::ilp::{write_instance, Constraint, Direction, FileFormat, IlpInstance, Sense};
use hyplns::subsolver::{external_solve, solve_sub, AdapterConfig, SolveBudget};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_hyplns");

fn hyplns(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, family: &str, n: usize, m: usize, count: usize) -> Vec<PathBuf> {
    let out = hyplns(&[
        "generate", "--family", family, "--n", &n.to_string(), "--m", &m.to_string(),
        "--count", &count.to_string(), "--out-dir", s(dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().map(PathBuf::from).collect()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), "mis", 60, 150, 2);
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| f.exists()));
    let trace = dir.path().join("trace.csv");
    let out = hyplns(&[
        "--budget-mode", "nodes", "solve", s(&files[0]), "--initial-budget", "5", "--step-budget", "5",
        "--total-budget", "60", "--max-steps", "10", "--trace", s(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["best_objective"].as_f64().unwrap() >= summary["initial_objective"].as_f64().unwrap());
    assert!(summary["nodes_used"].as_u64().unwrap() <= 60);
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.starts_with("elapsed_s,nodes_used,step,objective\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // unknown flag and bad config are configuration errors
    assert_eq!(code(&hyplns(&["solve", "--no-such-flag"])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[lns]\nstep_budget = \"lots\"\n").unwrap();
    assert_eq!(code(&hyplns(&["--config", s(&bad), "solve", "x.ilp"])), 2);
    assert_eq!(code(&hyplns(&["--budget-mode", "sometimes", "solve", "x.ilp"])), 2);
    let files = generate(dir.path(), "mis", 20, 30, 1);
    assert_eq!(code(&hyplns(&["solve", s(&files[0]), "--total-budget", "-1"])), 2);
    // a learned method without a checkpoint fails at startup
    let out = hyplns(&["solve", s(&files[0]), "--size-policy", "learned:/nonexistent/policy.json"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // infeasible instance: the initial solve finds nothing, a runtime failure
    let inst = IlpInstance::new(
        vec![1.0, 1.0],
        Direction::Maximize,
        vec![
            Constraint::new(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 2.0),
            Constraint::new(vec![(0, 1.0)], Sense::Le, 0.0),
        ],
    )
    .unwrap();
    let p = dir.path().join("infeasible.ilp");
    write_instance(&inst, &p, FileFormat::Canonical).unwrap();
    let out = hyplns(&["--budget-mode", "nodes", "solve", s(&p)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial solve"));
    assert_eq!(code(&hyplns(&["solve", "/nonexistent/instance.ilp"])), 3);
}

fn write_bench_config(dir: &Path, instances: &[PathBuf], results: &str) -> PathBuf {
    let list: Vec<String> = instances.iter().map(|p| format!("{:?}", s(p))).collect();
    let text = format!(
        r#"
[lns]
initial_budget = 5
step_budget = 4
total_budget = 40
max_steps = 8
budget_mode = "nodes"

[bench]
instances = [{}]
repetitions = 5
seed_base = 11
results = "{results}"

[[bench.methods]]
name = "fixed50"
size_policy = {{ kind = "fixed", ratio = 0.5 }}

[[bench.methods]]
name = "gaussian"
size_policy = {{ kind = "gaussian", mean = 0.5, std = 0.2 }}

[[bench.methods]]
name = "fixed50-uniform"
size_policy = {{ kind = "fixed", ratio = 0.5 }}
selection = "uniform"
"#,
        list.join(", ")
    );
    let p = dir.join(format!("{results}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn bench_cardinality_determinism_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), "mis", 50, 120, 2);
    let c1 = write_bench_config(dir.path(), &files, "r1.csv");
    let c2 = write_bench_config(dir.path(), &files, "r2.csv");
    let traces = dir.path().join("traces");
    let out = hyplns(&["--config", s(&c1), "--jobs", "2", "bench", "--trace-dir", s(&traces)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = hyplns(&["--config", s(&c2), "--jobs", "1", "bench"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let a = std::fs::read(dir.path().join("r1.csv")).unwrap();
    let b = std::fs::read(dir.path().join("r2.csv")).unwrap();
    assert_eq!(a, b, "results differ between executions");
    let rows = results_from_csv(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 5);
    assert!(rows.iter().all(|r| r.status == "ok"));

    let report = dir.path().join("report.csv");
    let merged = dir.path().join("merged.csv");
    let out = hyplns(&[
        "report", s(&dir.path().join("r1.csv")), "--out", s(&report), "--trace-dir", s(&traces),
        "--traces-out", s(&merged),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(report).unwrap();
    assert!(table.starts_with("instance,method,runs,failures,mean,std_pop,std_sample\n"));
    // 2 instances x 3 methods, plus one overall row per method
    assert_eq!(table.lines().count(), 1 + 6 + 3);
    let merged = std::fs::read_to_string(merged).unwrap();
    assert!(merged.starts_with("instance,method,rep,elapsed_s,nodes_used,step,objective\n"));
    assert!(merged.lines().count() > 30);
}

#[test]
fn train_two_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), "mis", 30, 60, 5);
    let cfg = dir.path().join("train.toml");
    std::fs::write(
        &cfg,
        "[lns]\ninitial_budget = 5\nstep_budget = 5\ntotal_budget = 200\nmax_steps = 4\nbudget_mode = \"nodes\"\n\
         [policy]\nembed_dim = 8\ntrunk = [8]\nhead_hidden = 8\ncritic = [8]\n\
         [ppo]\nrollout_steps = 4\nbatch_size = 20\nminibatch_size = 10\nepochs = 2\n\
         [train]\nepisode_len = 4\n",
    )
    .unwrap();
    let mut args = vec!["--config", s(&cfg), "train", "--iterations", "2", "--out-dir", s(dir.path()), "--instances"];
    args.extend(files.iter().map(|p| s(p)));
    let out = hyplns(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let ck = dir.path().join("policy.json");
    assert!(hyplns::gnn::PolicyNet::load(&ck).is_ok());
    // the checkpoint drives a solve as a learned policy
    let policy = format!("learned:{}", s(&ck));
    let out = hyplns(&[
        "--budget-mode", "nodes", "solve", s(&files[0]), "--size-policy", &policy, "--initial-budget", "5",
        "--step-budget", "5", "--total-budget", "40",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn self_adapter() -> AdapterConfig {
    AdapterConfig {
        command: format!("{BIN} mps-solve {{mps}} {{solution_out}} --node-limit {{node_limit}}"),
        ..Default::default()
    }
}

#[test]
fn self_adapter_matches_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10u64 {
        let family = Family::ALL[k as usize % 4];
        let (n, m) = match family {
            Family::Mis | Family::Mvc => (18, 30),
            Family::Sc => (18, 12),
            Family::Ca => (18, 10),
        };
        let inst = GenSpec { family, n, m, seed: 100 + k }.generate().unwrap();
        // a trivial feasible point, so both solvers have work to do
        let zeros = inst.assignment(vec![false; n]).unwrap();
        let incumbent = if inst.is_feasible(&zeros) { zeros } else { inst.assignment(vec![true; n]).unwrap() };
        assert!(inst.is_feasible(&incumbent));
        let fixed: BTreeMap<usize, bool> = (0..n)
            .filter(|_| rng.random_bool(0.4))
            .map(|i| (i, incumbent.get(i)))
            .collect();
        let budget = SolveBudget::nodes(1_000_000);
        let builtin = solve_sub(&inst, &fixed, &budget, &incumbent).unwrap();
        let external = external_solve(&inst, &fixed, &budget, &incumbent, &self_adapter()).unwrap();
        assert!(external.warnings.is_empty(), "{:?}", external.warnings);
        assert!(!external.incumbents.is_empty() || builtin.incumbents.is_empty());
        assert_eq!(
            builtin.best_objective(),
            external.best_objective(),
            "instance {k} ({family})"
        );
    }
}

#[test]
fn failing_adapters_fall_back_to_the_incumbent() {
    let inst = GenSpec { family: Family::Mis, n: 12, m: 20, seed: 3 }.generate().unwrap();
    let incumbent = inst.assignment(vec![false; 12]).unwrap();
    let fixed: BTreeMap<usize, bool> = (0..6).map(|i| (i, false)).collect();
    for command in ["false", "/nonexistent/solver {mps}", "sh -c exit"] {
        let cfg = AdapterConfig {
            command: command.into(),
            ..Default::default()
        };
        let r = external_solve(&inst, &fixed, &SolveBudget::seconds(5.0), &incumbent, &cfg).unwrap();
        assert_eq!(r.warnings.len(), 1, "{command}");
        assert_eq!(r.best_objective(), Some(0.0));
        assert!(r.incumbents.is_empty());
    }
    // a solver that never returns is killed after the grace period
    let cfg = AdapterConfig {
        command: "sleep 30".into(),
        kill_grace: 0.2,
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let r = external_solve(&inst, &fixed, &SolveBudget::seconds(0.3), &incumbent, &cfg).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0);
    assert!(r.warnings[0].contains("timed out"));
}
