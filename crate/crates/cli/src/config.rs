use std::path::{Path, PathBuf};

use hyplns::bench::Method;
use hyplns::generators::{Family, SizeClass};
use hyplns::gnn::PolicyConfig;
use hyplns::lns::LnsConfig;
use hyplns::rl::PpoConfig;
use serde::Deserialize;

/// Startup problems: bad flags, unreadable or invalid configuration.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub generate: GenerateSection,
    pub lns: LnsConfig,
    pub solve: SolveSection,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub train: TrainSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub family: Family,
    /// dataset size class; overridden by explicit `n`/`m`
    pub class: Option<SizeClass>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub count: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub mps: bool,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            family: Family::Mis,
            class: None,
            n: None,
            m: None,
            count: 1,
            seed: 0,
            out_dir: PathBuf::from("instances"),
            mps: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub instances: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub episode_len: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            instances: Vec::new(),
            out_dir: PathBuf::from("train"),
            episode_len: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub instances: Vec<PathBuf>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub seed_base: u64,
    pub jobs: usize,
    pub results: PathBuf,
    pub trace_dir: Option<PathBuf>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            instances: Vec::new(),
            methods: Vec::new(),
            repetitions: 5,
            seed_base: 0,
            jobs: 1,
            results: PathBuf::from("results.csv"),
            trace_dir: None,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        // every path in the file is relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.train.instances.iter_mut().for_each(fix);
        cfg.bench.instances.iter_mut().for_each(fix);
        fix(&mut cfg.generate.out_dir);
        fix(&mut cfg.train.out_dir);
        fix(&mut cfg.bench.results);
        for p in [&mut cfg.solve.trace, &mut cfg.solve.summary, &mut cfg.bench.trace_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for m in &mut cfg.bench.methods {
            if let hyplns::size_policy::SizePolicySpec::Learned { checkpoint } = &mut m.size_policy {
                fix(checkpoint);
            }
        }
        Ok(cfg)
    }
}
