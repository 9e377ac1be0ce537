use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{compute_gae, Environment, EpisodeRecord, LnsEnv, LnsEnvConfig};
use crate::error::{Error, Result};
use crate::gnn::{entropy_on_tape, log_prob_on_tape, sample_action_with, PolicyConfig, PolicyNet};
use crate::ilp::{BipartiteGraph, IlpInstance};
use crate::nn::{Adam, GradBuffer, Matrix, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr: f64,
    pub lr_min: f64,
    pub num_envs: usize,
    pub iterations: usize,
    pub rollout_steps: usize,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub k_r: f64,
    pub max_grad_norm: f64,
    /// write a checkpoint every this many iterations (0: only the final one)
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 3e-4,
            lr_min: 1e-5,
            num_envs: 5,
            iterations: 500,
            rollout_steps: 16,
            batch_size: 80,
            minibatch_size: 20,
            epochs: 5,
            gae_lambda: 0.95,
            gamma: 1.0,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.02,
            k_r: 0.01,
            max_grad_norm: 0.5,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.batch_size != self.num_envs * self.rollout_steps {
            return bad(format!(
                "batch {} must equal envs {} x steps {}",
                self.batch_size, self.num_envs, self.rollout_steps
            ));
        }
        if self.minibatch_size == 0 || self.batch_size % self.minibatch_size != 0 {
            return bad(format!(
                "minibatch {} must divide batch {}",
                self.minibatch_size, self.batch_size
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.iterations == 0 {
            return bad("batch, epochs and iterations must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr) {
            return bad(format!("need 0 < lr_min <= lr, got {} and {}", self.lr_min, self.lr));
        }
        if !(self.clip > 0.0 && self.max_grad_norm > 0.0) {
            return bad("clip and max_grad_norm must be positive".into());
        }
        Ok(())
    }

    /// Linear decay from `lr` after `t` finished iterations, floored at `lr_min`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let frac = 1.0 - t as f64 / self.iterations as f64;
        // same as lr * max(frac, lr_min / lr), without rounding at the floor
        (self.lr * frac).max(self.lr_min)
    }
}

/// One stored transition with its advantage target.
#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: Arc<BipartiteGraph>,
    pub action: f64,
    pub old_log_prob: f64,
    pub old_value: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone)]
pub struct MinibatchLoss {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    /// gradient of the mean loss
    pub grads: GradBuffer,
}

/// Clipped-surrogate loss of a minibatch and its gradient.
pub fn minibatch_loss(
    net: &PolicyNet,
    batch: &[&Sample],
    cfg: &PpoConfig,
    normalize_advantages: bool,
) -> Result<MinibatchLoss> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::Dimension("empty minibatch".into()));
    }
    let mut adv: Vec<f64> = batch.iter().map(|s| s.advantage).collect();
    if normalize_advantages {
        let mean = adv.iter().sum::<f64>() / m as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / m as f64;
        let sd = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
    let scale = 1.0 / m as f64;
    let mut grads = GradBuffer::zeros_like(net.params());
    let mut out = MinibatchLoss {
        loss: 0.0,
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_frac: 0.0,
        approx_kl: 0.0,
        grads: GradBuffer::zeros_like(net.params()),
    };
    for (k, (s, &a)) in batch.iter().zip(&adv).enumerate() {
        let mut tape = Tape::new();
        let h = net.forward(&mut tape, &s.graph)?;
        let action = tape.leaf(Matrix::scalar(s.action));
        let logp = log_prob_on_tape(&mut tape, action, h.mean, h.std)?;
        let log_ratio = tape.add_scalar(logp, -s.old_log_prob);
        let ratio = tape.exp(log_ratio);
        let unclipped = tape.scale(ratio, a);
        let clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        let clipped = tape.scale(clipped, a);
        let surrogate = tape.minimum(unclipped, clipped)?;
        let pg = tape.scale(surrogate, -1.0);
        let err = tape.add_scalar(h.value, -s.ret);
        let vloss = tape.square(err);
        let ent = entropy_on_tape(&mut tape, h.std);
        let v_term = tape.scale(vloss, cfg.vf_coef);
        let e_term = tape.scale(ent, -cfg.ent_coef);
        let total = tape.add(pg, v_term)?;
        let total = tape.add(total, e_term)?;

        let loss = tape.value(total).item();
        let r = tape.value(ratio).item();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "ppo loss at sample {k}: mean {} std {} value {} log_prob {} old_log_prob {} advantage {a} return {}",
                tape.value(h.mean).item(),
                tape.value(h.std).item(),
                tape.value(h.value).item(),
                tape.value(logp).item(),
                s.old_log_prob,
                s.ret,
            )));
        }
        tape.backward(total)?.accumulate_into(&mut grads, scale);
        out.loss += scale * loss;
        out.policy_loss += scale * tape.value(pg).item();
        out.value_loss += scale * tape.value(vloss).item();
        out.entropy += scale * tape.value(ent).item();
        out.clip_frac += scale * f64::from((r - 1.0).abs() > cfg.clip);
        out.approx_kl += scale * ((r - 1.0) - r.ln());
    }
    out.grads = grads;
    Ok(out)
}

/// Mean diagnostics over the minibatches of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
}

/// Several epochs of shuffled minibatch Adam steps on one rollout batch.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNet,
    adam: &mut Adam,
    samples: &[Sample],
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mb = cfg.minibatch_size.min(samples.len()).max(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let mut l = minibatch_loss(net, &batch, cfg, true)?;
            if !l.grads.is_finite() {
                return Err(Error::NonFinite("ppo gradient".into()));
            }
            let norm = l.grads.global_norm();
            if norm > cfg.max_grad_norm {
                l.grads.scale(cfg.max_grad_norm / norm);
            }
            adam.step(net.params_mut(), &l.grads, lr);
            stats.policy_loss += l.policy_loss;
            stats.value_loss += l.value_loss;
            stats.entropy += l.entropy;
            stats.clip_frac += l.clip_frac;
            stats.approx_kl += l.approx_kl;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    stats.policy_loss /= c;
    stats.value_loss /= c;
    stats.entropy /= c;
    stats.clip_frac /= c;
    stats.approx_kl /= c;
    Ok(stats)
}

pub const LOG_HEADER: [&str; 9] = [
    "iter",
    "return_mean",
    "return_std",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_frac",
    "approx_kl",
    "lr",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    /// shaped return over episodes finished this iteration (NaN if none)
    pub return_mean: f64,
    pub return_std: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub lr: f64,
}

impl IterationLog {
    fn record(&self) -> [String; 9] {
        [
            self.iter.to_string(),
            self.return_mean.to_string(),
            self.return_std.to_string(),
            self.policy_loss.to_string(),
            self.value_loss.to_string(),
            self.entropy.to_string(),
            self.clip_frac.to_string(),
            self.approx_kl.to_string(),
            self.lr.to_string(),
        ]
    }

    pub fn to_csv(rows: &[IterationLog]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(LOG_HEADER).expect("in-memory csv");
        for r in rows {
            w.write_record(r.record()).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

pub struct TrainOutcome {
    pub net: PolicyNet,
    pub log: Vec<IterationLog>,
    pub episodes: Vec<EpisodeRecord>,
}

struct Worker {
    index: usize,
    env: Box<dyn Environment>,
    rng: ChaCha8Rng,
    obs: Option<Arc<BipartiteGraph>>,
    raw: Vec<f64>,
    shaped: f64,
    episodes: usize,
}

impl Worker {
    fn rollout(&mut self, net: &PolicyNet, cfg: &PpoConfig, iteration: usize) -> Result<(Vec<Sample>, Vec<EpisodeRecord>)> {
        let n = cfg.rollout_steps;
        let mut pending = Vec::with_capacity(n);
        let (mut rewards, mut values, mut dones) = (Vec::new(), Vec::new(), Vec::new());
        let mut finished = Vec::new();
        for _ in 0..n {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => Arc::new(self.env.reset()?),
            };
            let (mean, std, value) = net.evaluate(&obs)?;
            let (action, logp) = sample_action_with(mean, std, &mut self.rng);
            let step = self.env.step(action)?;
            if !step.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward at step {}", step.t)));
            }
            self.raw.push(step.raw_reward);
            self.shaped += step.reward;
            rewards.push(step.reward);
            values.push(value);
            dones.push(step.done);
            pending.push((Arc::clone(&obs), action, logp, value));
            if step.done {
                finished.push(EpisodeRecord {
                    iteration,
                    env: self.index,
                    episode: self.episodes,
                    raw_rewards: std::mem::take(&mut self.raw),
                    shaped_return: std::mem::replace(&mut self.shaped, 0.0),
                });
                self.episodes += 1;
            } else {
                self.obs = Some(Arc::new(step.next_state));
            }
        }
        let bootstrap = match &self.obs {
            Some(o) => net.critic_forward(o)?,
            None => 0.0,
        };
        values.push(bootstrap);
        let (adv, ret) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda)?;
        let samples = pending
            .into_iter()
            .zip(adv.into_iter().zip(ret))
            .map(|((graph, action, old_log_prob, old_value), (advantage, ret))| Sample {
                graph,
                action,
                old_log_prob,
                old_value,
                advantage,
                ret,
            })
            .collect();
        Ok((samples, finished))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train `net` by PPO on one environment per worker.
///
/// With `out_dir` set, the log (`train_log.csv`), every finished episode
/// (`episodes.jsonl`), periodic checkpoints and the final `policy.json` are
/// written there.
pub fn train(
    envs: Vec<Box<dyn Environment>>,
    mut net: PolicyNet,
    cfg: &PpoConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if envs.len() != cfg.num_envs {
        return Err(Error::Parameter(format!(
            "{} environments given, config expects {}",
            envs.len(),
            cfg.num_envs
        )));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut workers: Vec<Worker> = envs
        .into_iter()
        .enumerate()
        .map(|(index, env)| Worker {
            index,
            env,
            rng: ChaCha8Rng::seed_from_u64(seeder.random()),
            obs: None,
            raw: Vec::new(),
            shaped: 0.0,
            episodes: 0,
        })
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeder.random());
    let mut adam = Adam::new(net.params());
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut episodes = Vec::new();
    let mut episode_file = match out_dir {
        Some(dir) => {
            let p = dir.join("episodes.jsonl");
            Some((std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };

    for iter in 1..=cfg.iterations {
        let lr = cfg.lr_at(iter - 1);
        let snapshot = &net;
        let results: Vec<Result<(Vec<Sample>, Vec<EpisodeRecord>)>> = workers
            .par_iter_mut()
            .map(|w| w.rollout(snapshot, cfg, iter))
            .collect();
        let mut samples = Vec::with_capacity(cfg.batch_size);
        let mut finished = Vec::new();
        for r in results {
            let (s, e) = r?;
            samples.extend(s);
            finished.extend(e);
        }

        let before = (net.clone(), adam.clone());
        let stats = match ppo_update(&mut net, &mut adam, &samples, cfg, lr, &mut shuffle_rng) {
            Ok(s) => s,
            Err(Error::NonFinite(msg)) => {
                log::error!("iteration {iter} aborted: {msg}");
                (net, adam) = before;
                UpdateStats {
                    policy_loss: f64::NAN,
                    value_loss: f64::NAN,
                    entropy: f64::NAN,
                    clip_frac: f64::NAN,
                    approx_kl: f64::NAN,
                }
            }
            Err(e) => return Err(e),
        };

        let returns: Vec<f64> = finished.iter().map(|e| e.shaped_return).collect();
        let (return_mean, return_std) = if returns.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let k = returns.len() as f64;
            let mean = returns.iter().sum::<f64>() / k;
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k;
            (mean, var.sqrt())
        };
        let row = IterationLog {
            iter,
            return_mean,
            return_std,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_frac: stats.clip_frac,
            approx_kl: stats.approx_kl,
            lr,
        };
        log::info!(
            "iter {iter}: return {return_mean:.5} policy {:.5} value {:.5} entropy {:.4} clip {:.3} kl {:.2e} lr {lr:.2e}",
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.clip_frac,
            stats.approx_kl
        );
        log.push(row);

        if let Some((f, p)) = &mut episode_file {
            for e in &finished {
                let line = serde_json::to_string(e).expect("episode record serializes");
                writeln!(f, "{line}").map_err(|err| Error::io(&*p, err))?;
            }
        }
        episodes.extend(finished);
        if let Some(dir) = out_dir {
            write_file(&dir.join("train_log.csv"), &IterationLog::to_csv(&log))?;
            if cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 {
                net.save(&dir.join(format!("checkpoint_{iter:04}.json")))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        net.save(&dir.join("policy.json"))?;
    }
    Ok(TrainOutcome { net, log, episodes })
}

/// Train a fresh policy on LNS environments over `instances`.
pub fn train_on_instances(
    instances: Vec<IlpInstance>,
    env_cfg: &LnsEnvConfig,
    policy_cfg: PolicyConfig,
    cfg: &PpoConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if instances.is_empty() {
        return Err(Error::Parameter("training needs at least one instance".into()));
    }
    let shared: Vec<Arc<IlpInstance>> = instances.into_iter().map(Arc::new).collect();
    let env_cfg = LnsEnvConfig {
        k_r: cfg.k_r,
        ..env_cfg.clone()
    };
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_e4f5);
    let envs = (0..cfg.num_envs)
        .map(|_| Ok(Box::new(LnsEnv::new(shared.clone(), env_cfg.clone(), seeder.random())?) as Box<dyn Environment>))
        .collect::<Result<Vec<_>>>()?;
    let net = PolicyNet::new(policy_cfg, cfg.seed)?;
    train(envs, net, cfg, out_dir)
}
