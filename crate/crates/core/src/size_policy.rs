//! How many variables to free at each step.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{sample_action_with, PolicyNet};
use crate::ilp::BipartiteGraph;

/// Ratios are kept in `[EPSILON, 1 - EPSILON]`.
pub const EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDecision {
    pub ratio: f64,
    pub size: usize,
}

impl SizeDecision {
    /// Clamp `ratio`, then round `ratio · n` half-up into `[1, n]`.
    pub fn from_ratio(ratio: f64, n: usize) -> Self {
        let ratio = ratio.clamp(EPSILON, 1.0 - EPSILON);
        let size = ((ratio * n as f64 + 0.5).floor() as usize).clamp(1, n.max(1));
        SizeDecision { ratio, size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SizePolicySpec {
    Fixed { ratio: f64 },
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Beta { alpha: f64, beta: f64 },
    Learned { checkpoint: PathBuf },
}

impl SizePolicySpec {
    pub fn gaussian() -> Self {
        SizePolicySpec::Gaussian { mean: 0.5, std: 0.2 }
    }

    pub fn uniform() -> Self {
        SizePolicySpec::Uniform { low: 0.01, high: 0.99 }
    }

    pub fn beta() -> Self {
        SizePolicySpec::Beta { alpha: 2.0, beta: 2.0 }
    }

    /// Short label used in result tables.
    pub fn label(&self) -> String {
        match self {
            SizePolicySpec::Fixed { ratio } => format!("fixed{}", (ratio * 100.0).round()),
            SizePolicySpec::Gaussian { .. } => "gaussian".into(),
            SizePolicySpec::Uniform { .. } => "uniform".into(),
            SizePolicySpec::Beta { .. } => "beta".into(),
            SizePolicySpec::Learned { .. } => "learned".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match *self {
            SizePolicySpec::Fixed { ratio } if !(ratio > 0.0 && ratio < 1.0) => {
                bad(format!("fixed ratio {ratio} outside (0, 1)"))
            }
            SizePolicySpec::Gaussian { mean, std } if !(mean.is_finite() && std > 0.0) => {
                bad(format!("gaussian({mean}, {std}) needs finite mean and std > 0"))
            }
            SizePolicySpec::Uniform { low, high } if !(0.0 <= low && low < high && high <= 1.0) => {
                bad(format!("uniform({low}, {high}) needs 0 <= low < high <= 1"))
            }
            SizePolicySpec::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                bad(format!("beta({alpha}, {beta}) needs positive shapes"))
            }
            _ => Ok(()),
        }
    }
}

/// `fixed:0.5`, `gaussian`, `gaussian:0.5,0.2`, `uniform[:low,high]`,
/// `beta[:alpha,beta]` or `learned:<checkpoint>`.
impl std::str::FromStr for SizePolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parameter(format!("bad number {t:?} in size policy {s:?}")))
                })
                .collect()
        };
        let pair = |default: SizePolicySpec, make: fn(f64, f64) -> SizePolicySpec| -> Result<SizePolicySpec> {
            match nums()?.as_slice() {
                [] => Ok(default),
                [a, b] => Ok(make(*a, *b)),
                _ => Err(Error::Parameter(format!("{kind} takes two numbers, got {s:?}"))),
            }
        };
        let spec = match kind.to_ascii_lowercase().as_str() {
            "fixed" => match nums()?.as_slice() {
                [r] => SizePolicySpec::Fixed { ratio: *r },
                _ => return Err(Error::Parameter(format!("fixed takes one ratio, got {s:?}"))),
            },
            "gaussian" => pair(Self::gaussian(), |mean, std| SizePolicySpec::Gaussian { mean, std })?,
            "uniform" => pair(Self::uniform(), |low, high| SizePolicySpec::Uniform { low, high })?,
            "beta" => pair(Self::beta(), |alpha, beta| SizePolicySpec::Beta { alpha, beta })?,
            "learned" if !args.is_empty() => SizePolicySpec::Learned {
                checkpoint: PathBuf::from(args),
            },
            _ => return Err(Error::Parameter(format!("unknown size policy {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A ready-to-use policy: parametric specs as-is, learned ones with their
/// network loaded.
#[derive(Debug, Clone)]
pub enum SizePolicy {
    Fixed(f64),
    Gaussian(Normal<f64>),
    Uniform(Uniform<f64>),
    Beta(Beta<f64>),
    Learned(Box<PolicyNet>),
}

impl SizePolicy {
    pub fn from_spec(spec: &SizePolicySpec) -> Result<Self> {
        spec.validate()?;
        let param = |e: &dyn std::fmt::Display| Error::Parameter(e.to_string());
        Ok(match spec {
            SizePolicySpec::Fixed { ratio } => SizePolicy::Fixed(*ratio),
            SizePolicySpec::Gaussian { mean, std } => {
                SizePolicy::Gaussian(Normal::new(*mean, *std).map_err(|e| param(&e))?)
            }
            SizePolicySpec::Uniform { low, high } => {
                SizePolicy::Uniform(Uniform::new(*low, *high).map_err(|e| param(&e))?)
            }
            SizePolicySpec::Beta { alpha, beta } => {
                SizePolicy::Beta(Beta::new(*alpha, *beta).map_err(|e| param(&e))?)
            }
            SizePolicySpec::Learned { checkpoint } => {
                SizePolicy::Learned(Box::new(PolicyNet::load(checkpoint)?))
            }
        })
    }

    pub fn learned(net: PolicyNet) -> Self {
        SizePolicy::Learned(Box::new(net))
    }

    pub fn needs_state(&self) -> bool {
        matches!(self, SizePolicy::Learned(_))
    }

    pub fn decide(&self, state: Option<&BipartiteGraph>, n: usize, seed: u64) -> Result<SizeDecision> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ratio = match self {
            SizePolicy::Fixed(r) => *r,
            SizePolicy::Gaussian(d) => d.sample(&mut rng),
            SizePolicy::Uniform(d) => d.sample(&mut rng),
            SizePolicy::Beta(d) => d.sample(&mut rng),
            SizePolicy::Learned(net) => {
                let graph = state.ok_or_else(|| {
                    Error::Precondition("learned size policy needs a state graph".into())
                })?;
                let (mean, std) = net.actor_forward(graph)?;
                sample_action_with(mean, std, &mut rng).0
            }
        };
        Ok(SizeDecision::from_ratio(ratio, n))
    }
}

/// One-shot convenience over [`SizePolicy::decide`].
pub fn decide_size(
    spec: &SizePolicySpec,
    state: Option<&BipartiteGraph>,
    n: usize,
    seed: u64,
) -> Result<SizeDecision> {
    SizePolicy::from_spec(spec)?.decide(state, n, seed)
}
