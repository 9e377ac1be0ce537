//! Hand a fixed-variable sub-problem to an external solver process.
//!
//! The sub-problem goes out as MPS with fixings as `FX` bounds. The command
//! template is split on whitespace (no shell) after substituting `{mps}`,
//! `{time_limit}`, `{node_limit}` and `{solution_out}`. The solution file holds
//! `name value` lines; missing columns read as 0.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{check_warm_start, dense_fixings, Incumbent, SolveBudget, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::ilp::{mps, Assignment, IlpInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    /// e.g. `scip -c "read {mps}" ...` style template; tokens split on whitespace
    pub command: String,
    /// seconds passed as `{time_limit}` when the budget has no time limit
    pub default_time_limit: f64,
    /// extra seconds past the time limit before the process is killed
    pub kill_grace: f64,
    /// lines starting with any of these are skipped in the solution file
    pub comment_prefixes: Vec<String>,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            command: String::new(),
            default_time_limit: 60.0,
            kill_grace: 5.0,
            comment_prefixes: vec!["#".into()],
        }
    }
}

fn render(template: &str, mps_path: &Path, sol_path: &Path, time_limit: f64, nodes: Option<u64>) -> Vec<String> {
    let nodes = nodes.map_or_else(|| "0".to_string(), |n| n.to_string());
    template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{mps}", &mps_path.to_string_lossy())
                .replace("{solution_out}", &sol_path.to_string_lossy())
                .replace("{time_limit}", &format!("{time_limit}"))
                .replace("{node_limit}", &nodes)
        })
        .collect()
}

/// Parse `name value` lines into a full assignment.
pub fn parse_solution(text: &str, num_vars: usize, comment_prefixes: &[String]) -> Result<Vec<bool>> {
    let mut values = vec![false; num_vars];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || comment_prefixes.iter().any(|p| line.starts_with(p.as_str())) {
            continue;
        }
        let bad = |msg: &str| Error::Adapter(format!("solution line {}: {msg}: {line:?}", lineno + 1));
        let mut toks = line.split_whitespace();
        let (Some(name), Some(value)) = (toks.next(), toks.next()) else {
            return Err(bad("expected `name value`"));
        };
        let idx = name
            .strip_prefix('x')
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| i < num_vars && mps::column_name(i) == name)
            .ok_or_else(|| bad("unknown column"))?;
        let v: f64 = value.parse().map_err(|_| bad("value is not a number"))?;
        if (v - v.round()).abs() > 1e-6 || !(0.0..=1.0).contains(&v.round()) {
            return Err(bad("value is not binary"));
        }
        values[idx] = v.round() == 1.0;
    }
    Ok(values)
}

/// Format an assignment in the solution-file layout (nonzeros only).
pub fn format_solution(values: &[bool]) -> String {
    let mut out = String::new();
    for (i, _) in values.iter().enumerate().filter(|(_, v)| **v) {
        out.push_str(&mps::column_name(i));
        out.push_str(" 1\n");
    }
    out
}

fn fallback(incumbent: &Assignment, start: Instant, warning: String) -> SolveResult {
    log::warn!("{warning}");
    SolveResult {
        status: SolveStatus::FeasibleBudgetExhausted,
        best: Some(incumbent.clone()),
        incumbents: Vec::new(),
        nodes: 0,
        elapsed: start.elapsed(),
        warnings: vec![warning],
    }
}

/// Solve the sub-problem with an external process, never returning worse
/// than `incumbent`.
pub fn external_solve(
    instance: &IlpInstance,
    fixed: &BTreeMap<usize, bool>,
    budget: &SolveBudget,
    incumbent: &Assignment,
    config: &AdapterConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    let dense = dense_fixings(instance.num_vars(), fixed)?;
    check_warm_start(instance, incumbent)?;
    if config.command.trim().is_empty() {
        return Err(Error::Adapter("empty command template".into()));
    }

    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let mps_path = dir.path().join("sub.mps");
    let sol_path = dir.path().join("sub.sol");
    std::fs::write(&mps_path, mps::write(instance, &dense, "SUBILP"))
        .map_err(|e| Error::io(&mps_path, e))?;

    let time_limit = budget
        .time_limit
        .map_or(config.default_time_limit, |t| t.as_secs_f64());
    let argv = render(&config.command, &mps_path, &sol_path, time_limit, budget.node_limit);
    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return Ok(fallback(incumbent, start, format!("failed to start {:?}: {e}", argv[0]))),
    };

    let deadline = start + Duration::from_secs_f64(time_limit + config.kill_grace);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(fallback(incumbent, start, "external solver timed out".into()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Ok(fallback(incumbent, start, format!("waiting on solver: {e}"))),
        }
    };

    let text = match std::fs::read_to_string(&sol_path) {
        Ok(t) => t,
        Err(_) => {
            return Ok(fallback(
                incumbent,
                start,
                format!("external solver exited with {status} and wrote no solution"),
            ))
        }
    };
    let values = parse_solution(&text, instance.num_vars(), &config.comment_prefixes)?;
    if dense
        .iter()
        .zip(&values)
        .any(|(f, &v)| f.is_some_and(|f| f != v))
    {
        return Ok(fallback(incumbent, start, "external solution ignores fixings".into()));
    }
    let candidate = instance.assignment(values)?;
    if !instance.is_feasible(&candidate) {
        return Ok(fallback(incumbent, start, "external solution is infeasible".into()));
    }

    let dir_ = instance.direction();
    let old = instance.evaluate_objective(incumbent)?;
    let new = candidate.objective().expect("assignment caches objective");
    let mut result = SolveResult {
        status: SolveStatus::FeasibleBudgetExhausted,
        best: Some(instance.assignment(incumbent.values().to_vec())?),
        incumbents: Vec::new(),
        nodes: 0,
        elapsed: Duration::ZERO,
        warnings: Vec::new(),
    };
    if dir_.better(new, old) {
        result.incumbents.push(Incumbent {
            assignment: candidate.clone(),
            objective: new,
            elapsed: start.elapsed(),
            nodes: 0,
        });
        result.best = Some(candidate);
    }
    result.elapsed = start.elapsed();
    Ok(result)
}
