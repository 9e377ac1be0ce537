use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{BipartiteGraph, Direction, IlpInstance};
use crate::lns::{initial_solve, LnsConfig, LnsState};
use crate::subsolver::SolveResult;

/// Weight `e^{-k_r t^2}` of the reward at step `t` (steps count from 1).
pub fn shaping_weight(t: usize, k_r: f64) -> f64 {
    let t = t as f64;
    (-k_r * t * t).exp()
}

/// Direction-aware improvement scaled by the magnitude of the first objective.
pub fn raw_reward(direction: Direction, before: f64, after: f64, initial: f64) -> f64 {
    let scale = if initial == 0.0 { 1.0 } else { initial.abs() };
    direction.improvement(before, after) / scale
}

/// Advantages and returns by generalized advantage estimation.
///
/// `values` holds one entry per reward plus the bootstrap value after the
/// last step; `dones[t]` marks that step `t` ended its episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Dimension(format!(
            "gae needs {n} rewards, {} values and {n} done flags; got {}, {}",
            n + 1,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// One transition.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub state: BipartiteGraph,
    pub action: f64,
    /// shaped reward fed to the learner
    pub reward: f64,
    pub raw_reward: f64,
    pub next_state: BipartiteGraph,
    pub done: bool,
    /// 1-based step index inside the episode
    pub t: usize,
    /// the step did not change the state (sub-solver failure)
    pub failed: bool,
}

pub trait Environment: Send {
    /// Start a new episode and return its first state.
    fn reset(&mut self) -> Result<BipartiteGraph>;
    fn step(&mut self, action: f64) -> Result<EnvStep>;
}

/// Raw rewards of a finished episode and its shaped return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub iteration: usize,
    pub env: usize,
    pub episode: usize,
    pub raw_rewards: Vec<f64>,
    pub shaped_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LnsEnvConfig {
    pub lns: LnsConfig,
    pub episode_len: usize,
    pub k_r: f64,
}

impl Default for LnsEnvConfig {
    fn default() -> Self {
        LnsEnvConfig {
            lns: LnsConfig {
                max_steps: 16,
                ..LnsConfig::default()
            },
            episode_len: 16,
            k_r: 0.01,
        }
    }
}

/// LNS over a set of training instances; each episode picks one at random.
pub struct LnsEnv {
    instances: Vec<Arc<IlpInstance>>,
    initial: Vec<Option<SolveResult>>,
    config: LnsEnvConfig,
    rng: ChaCha8Rng,
    state: Option<LnsState>,
    t: usize,
}

impl LnsEnv {
    pub fn new(instances: Vec<Arc<IlpInstance>>, config: LnsEnvConfig, seed: u64) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Parameter("environment needs at least one instance".into()));
        }
        if config.episode_len == 0 {
            return Err(Error::Parameter("episode length must be positive".into()));
        }
        config.lns.validate()?;
        Ok(LnsEnv {
            initial: vec![None; instances.len()],
            instances,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: None,
            t: 0,
        })
    }

    pub fn state(&self) -> Option<&LnsState> {
        self.state.as_ref()
    }

    fn live(&mut self) -> Result<&mut LnsState> {
        self.state
            .as_mut()
            .ok_or_else(|| Error::Precondition("environment stepped before reset".into()))
    }
}

impl Environment for LnsEnv {
    fn reset(&mut self) -> Result<BipartiteGraph> {
        let k = self.rng.random_range(0..self.instances.len());
        let instance = Arc::clone(&self.instances[k]);
        // the initial solve only depends on the instance, so it is done once
        if self.initial[k].is_none() {
            self.initial[k] = Some(initial_solve(&instance, &self.config.lns)?);
        }
        let init = self.initial[k].as_ref().expect("cached");
        let lns = LnsConfig {
            seed: self.rng.random(),
            ..self.config.lns.clone()
        };
        let mut state = LnsState::from_initial(instance, lns, init)?;
        if state.is_done() {
            return Err(Error::Precondition("budget leaves no room for a step".into()));
        }
        let obs = state.observe()?.clone();
        self.state = Some(state);
        self.t = 0;
        Ok(obs)
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        let k_r = self.config.k_r;
        let episode_len = self.config.episode_len;
        let state = self.live()?;
        let before_graph = state.observe()?.clone();
        let direction = state.instance().direction();
        let initial = state.initial_objective();
        let before = state.current_objective();
        let (raw, failed) = match state.step_with_ratio(action) {
            Ok(rec) if !rec.failed => (raw_reward(direction, before, rec.objective_after, initial), false),
            Ok(_) => (0.0, true),
            Err(e @ Error::Step { .. }) => {
                log::warn!("sub-solve failed, state kept: {e}");
                (0.0, true)
            }
            Err(e) => return Err(e),
        };
        let done_budget = state.is_done();
        let next_state = state.observe()?.clone();
        self.t += 1;
        let t = self.t;
        Ok(EnvStep {
            state: before_graph,
            action,
            reward: shaping_weight(t, k_r) * raw,
            raw_reward: raw,
            next_state,
            done: t >= episode_len || done_budget,
            t,
            failed,
        })
    }
}

/// One-step bandit with reward `-(a - optimum)^2` on a fixed small graph.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub optimum: f64,
    pub k_r: f64,
    graph: BipartiteGraph,
}

impl BanditEnv {
    pub fn new(optimum: f64) -> Self {
        let graph = BipartiteGraph::from_parts(
            vec![
                0.5, 0.4, 1.0, 0.6, 0.2, //
                1.0, 0.8, 0.0, 0.3, 0.7, //
                0.2, 0.4, 1.0, 0.9, 0.5,
            ],
            vec![1.0, 0.6, 1.0, 0.0, 0.0, 0.5, 0.4, 0.0, 1.0, 0.0],
            vec![(0, 0), (1, 0), (2, 0), (1, 1), (2, 1)],
            vec![1.0, 1.0, 1.0, 0.5, 0.5],
        )
        .expect("static graph is valid");
        BanditEnv {
            optimum,
            k_r: 0.01,
            graph,
        }
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }
}

impl Environment for BanditEnv {
    fn reset(&mut self) -> Result<BipartiteGraph> {
        Ok(self.graph.clone())
    }

    fn step(&mut self, action: f64) -> Result<EnvStep> {
        let raw = -(action - self.optimum).powi(2);
        Ok(EnvStep {
            state: self.graph.clone(),
            action,
            reward: shaping_weight(1, self.k_r) * raw,
            raw_reward: raw,
            next_state: self.graph.clone(),
            done: true,
            t: 1,
            failed: false,
        })
    }
}
