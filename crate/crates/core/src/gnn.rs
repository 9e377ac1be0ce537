//! Actor-critic network over the variable/constraint bipartite graph.
//!
//! Node and edge features are embedded to width `d`, then two rounds of
//! half-convolutions update constraints from variables and variables from
//! constraints with summed edge messages. Variable embeddings are mean-pooled
//! and fed to a Gaussian actor (mean in (0,1), clamped std) and a scalar critic.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{BipartiteGraph, CONS_FEATURES, EDGE_FEATURES, VAR_FEATURES};
use crate::nn::{Activation, Linear, Matrix, Mlp, ParamFile, ParamId, ParamStore, Tape, Var};

pub const ACTION_MIN: f64 = 0.01;
pub const ACTION_MAX: f64 = 0.99;
const MEAN_EPS: f64 = 1e-9;
pub const CHECKPOINT_FORMAT: &str = "hyplns-policy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub rounds: usize,
    pub trunk: Vec<usize>,
    pub head_hidden: usize,
    pub critic: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// std the network starts from
    pub sigma_init: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            embed_dim: 64,
            rounds: 2,
            trunk: vec![64, 32],
            head_hidden: 32,
            critic: vec![64, 32],
            sigma_min: 0.01,
            sigma_max: 0.5,
            sigma_init: 0.3,
        }
    }
}

impl PolicyConfig {
    pub fn with_embed_dim(mut self, d: usize) -> Self {
        self.embed_dim = d;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.head_hidden == 0 || self.trunk.contains(&0) {
            return Err(Error::Parameter("network widths must be positive".into()));
        }
        if !(0.0 < self.sigma_min && self.sigma_min < self.sigma_max) {
            return Err(Error::Parameter("need 0 < sigma_min < sigma_max".into()));
        }
        if !(self.sigma_min..=self.sigma_max).contains(&self.sigma_init) {
            return Err(Error::Parameter("sigma_init outside [sigma_min, sigma_max]".into()));
        }
        Ok(())
    }

    /// Scalar parameter count implied by the widths.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let embed = Mlp::param_count(&[VAR_FEATURES, d])
            + Mlp::param_count(&[CONS_FEATURES, d])
            + Mlp::param_count(&[EDGE_FEATURES, d]);
        // per half-convolution: message (3d -> d) and update (2d -> d)
        let conv = 2 * (Mlp::param_count(&[3 * d, d]) + Mlp::param_count(&[2 * d, d]));
        let trunk_out = *self.trunk.last().unwrap_or(&d);
        let mut trunk = vec![d];
        trunk.extend(&self.trunk);
        let mut critic = vec![d];
        critic.extend(&self.critic);
        critic.push(1);
        embed
            + self.rounds * conv
            + Mlp::param_count(&trunk)
            + 2 * Mlp::param_count(&[trunk_out, self.head_hidden, 1])
            + Mlp::param_count(&critic)
    }
}

/// Message function over concatenated (receiver, sender, edge) embeddings,
/// stored as three projection blocks and one bias.
#[derive(Debug, Clone, PartialEq)]
struct Message {
    w_recv: ParamId,
    w_send: ParamId,
    w_edge: ParamId,
    bias: ParamId,
}

impl Message {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        let fan_in = 3 * d;
        Ok(Message {
            w_recv: store.add_uniform(&format!("{name}.w_recv"), d, d, fan_in, rng)?,
            w_send: store.add_uniform(&format!("{name}.w_send"), d, d, fan_in, rng)?,
            w_edge: store.add_uniform(&format!("{name}.w_edge"), d, d, fan_in, rng)?,
            bias: store.add_uniform(&format!("{name}.b"), 1, d, fan_in, rng)?,
        })
    }

    /// ReLU(recv[r_idx]·Wr + send[s_idx]·Ws + edges·We + b) per edge.
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        recv: Var,
        recv_idx: &[usize],
        send: Var,
        send_idx: &[usize],
        edges: Var,
    ) -> Result<Var> {
        // project per node first, then gather, which is cheaper than per edge
        let wr = tape.param(store, self.w_recv);
        let ws = tape.param(store, self.w_send);
        let we = tape.param(store, self.w_edge);
        let pr = tape.matmul(recv, wr)?;
        let ps = tape.matmul(send, ws)?;
        let pe = tape.matmul(edges, we)?;
        let gr = tape.gather_rows(pr, recv_idx)?;
        let gs = tape.gather_rows(ps, send_idx)?;
        let m = tape.add(gr, gs)?;
        let m = tape.add(m, pe)?;
        let b = tape.param(store, self.bias);
        let m = tape.add_row(m, b)?;
        Ok(tape.relu(m))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HalfConv {
    message: Message,
    update: Linear,
}

impl HalfConv {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> Result<Self> {
        Ok(HalfConv {
            message: Message::new(store, &format!("{name}.g"), d, rng)?,
            update: Linear::new(store, &format!("{name}.f"), 2 * d, d, rng)?,
        })
    }

    /// New receiver embeddings: ReLU(f([h, Σ_edges g(h, sender, e)])).
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        recv: Var,
        recv_idx: &[usize],
        send: Var,
        send_idx: &[usize],
        edges: Var,
    ) -> Result<Var> {
        let msgs = self
            .message
            .forward(tape, store, recv, recv_idx, send, send_idx, edges)?;
        let n = tape.shape(recv).0;
        let agg = tape.scatter_add_rows(msgs, recv_idx, n)?;
        let cat = tape.concat_cols(&[recv, agg])?;
        let out = self.update.forward(tape, store, cat)?;
        Ok(tape.relu(out))
    }
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub mean: Var,
    pub std: Var,
    pub value: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    config: PolicyConfig,
    store: ParamStore,
    var_embed: Mlp,
    cons_embed: Mlp,
    edge_embed: Mlp,
    rounds: Vec<(HalfConv, HalfConv)>,
    trunk: Mlp,
    mean_head: Mlp,
    std_head: Mlp,
    critic: Mlp,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: PolicyConfig,
    params: ParamFile,
}

impl PolicyNet {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let d = config.embed_dim;
        let relu = Activation::Relu;
        let id = Activation::Identity;
        let var_embed = Mlp::new(&mut store, "embed.var", &[VAR_FEATURES, d], relu, relu, &mut rng)?;
        let cons_embed = Mlp::new(&mut store, "embed.cons", &[CONS_FEATURES, d], relu, relu, &mut rng)?;
        let edge_embed = Mlp::new(&mut store, "embed.edge", &[EDGE_FEATURES, d], relu, relu, &mut rng)?;
        let rounds = (0..config.rounds)
            .map(|k| {
                Ok((
                    HalfConv::new(&mut store, &format!("conv{k}.cons"), d, &mut rng)?,
                    HalfConv::new(&mut store, &format!("conv{k}.var"), d, &mut rng)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut widths = vec![d];
        widths.extend(&config.trunk);
        let trunk = Mlp::new(&mut store, "actor.trunk", &widths, relu, relu, &mut rng)?;
        let t_out = *widths.last().unwrap();
        let head = [t_out, config.head_hidden, 1];
        let mean_head = Mlp::new(&mut store, "actor.mean", &head, relu, id, &mut rng)?;
        let std_head = Mlp::new(&mut store, "actor.std", &head, relu, id, &mut rng)?;
        let mut widths = vec![d];
        widths.extend(&config.critic);
        widths.push(1);
        let critic = Mlp::new(&mut store, "critic", &widths, relu, id, &mut rng)?;

        // near-zero output layers: mean starts at 0.5, std at sigma_init
        for head in [&mean_head, &std_head] {
            let last = head.layers.last().unwrap();
            store.get_mut(last.weight).scale_assign(0.01);
            store.get_mut(last.bias).scale_assign(0.0);
        }
        let std_bias = std_head.layers.last().unwrap().bias;
        let inv_softplus = config.sigma_init.exp_m1().ln();
        store.get_mut(std_bias).data_mut()[0] = inv_softplus;

        Ok(PolicyNet {
            config,
            store,
            var_embed,
            cons_embed,
            edge_embed,
            rounds,
            trunk,
            mean_head,
            std_head,
            critic,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Parameters of the critic decoder.
    pub fn critic_params(&self) -> Vec<ParamId> {
        self.critic
            .layers
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }

    /// Parameters only the actor heads read.
    pub fn actor_params(&self) -> Vec<ParamId> {
        [&self.trunk, &self.mean_head, &self.std_head]
            .into_iter()
            .flat_map(|m| m.layers.iter().flat_map(|l| [l.weight, l.bias]))
            .collect()
    }

    /// Parameters shared by actor and critic.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for m in [&self.var_embed, &self.cons_embed, &self.edge_embed] {
            ids.extend(m.layers.iter().flat_map(|l| [l.weight, l.bias]));
        }
        for (c, v) in &self.rounds {
            for h in [c, v] {
                let m = &h.message;
                ids.extend([m.w_recv, m.w_send, m.w_edge, m.bias, h.update.weight, h.update.bias]);
            }
        }
        ids
    }

    /// Variable embeddings `[n × d]` after all message-passing rounds.
    pub fn encode(&self, tape: &mut Tape, graph: &BipartiteGraph) -> Result<Var> {
        let s = &self.store;
        let vf = tape.leaf(Matrix::from_vec(graph.num_vars(), VAR_FEATURES, graph.var_features().to_vec()));
        let cf = tape.leaf(Matrix::from_vec(graph.num_cons(), CONS_FEATURES, graph.cons_features().to_vec()));
        let ef = tape.leaf(Matrix::from_vec(graph.num_edges(), EDGE_FEATURES, graph.edge_features().to_vec()));
        let mut v = self.var_embed.forward(tape, s, vf)?;
        let mut c = self.cons_embed.forward(tape, s, cf)?;
        let e = self.edge_embed.forward(tape, s, ef)?;
        let (vi, ci) = (graph.edge_vars(), graph.edge_cons());
        for (to_cons, to_var) in &self.rounds {
            c = to_cons.forward(tape, s, c, ci, v, vi, e)?;
            v = to_var.forward(tape, s, v, vi, c, ci, e)?;
        }
        Ok(v)
    }

    /// Actor and critic heads on a shared encoding.
    pub fn forward(&self, tape: &mut Tape, graph: &BipartiteGraph) -> Result<HeadVars> {
        let s = &self.store;
        let v = self.encode(tape, graph)?;
        let pooled = tape.mean_rows(v);
        let h = self.trunk.forward(tape, s, pooled)?;
        let m = self.mean_head.forward(tape, s, h)?;
        let m = tape.tanh(m);
        let m = tape.add_scalar(m, 1.0);
        let m = tape.scale(m, 0.5);
        // tanh rounds to ±1 for large inputs; keep the mean strictly inside (0, 1)
        let mean = tape.clamp(m, MEAN_EPS, 1.0 - MEAN_EPS);
        let sd = self.std_head.forward(tape, s, h)?;
        let sd = tape.softplus(sd);
        let std = tape.clamp(sd, self.config.sigma_min, self.config.sigma_max);
        let value = self.critic.forward(tape, s, pooled)?;
        Ok(HeadVars { mean, std, value })
    }

    /// `(mean, std, value)` for one state.
    pub fn evaluate(&self, graph: &BipartiteGraph) -> Result<(f64, f64, f64)> {
        let mut tape = Tape::new();
        let h = self.forward(&mut tape, graph)?;
        Ok((
            tape.value(h.mean).item(),
            tape.value(h.std).item(),
            tape.value(h.value).item(),
        ))
    }

    pub fn actor_forward(&self, graph: &BipartiteGraph) -> Result<(f64, f64)> {
        let (m, s, _) = self.evaluate(graph)?;
        Ok((m, s))
    }

    pub fn critic_forward(&self, graph: &BipartiteGraph) -> Result<f64> {
        Ok(self.evaluate(graph)?.2)
    }

    pub fn to_checkpoint_json(&self) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            params: self.store.to_file(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let load = |msg: String| Error::Load { what: "policy checkpoint", msg };
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| load(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(load(format!("format {:?}, expected {CHECKPOINT_FORMAT:?}", ck.format)));
        }
        let stored = ParamStore::from_file(ck.params)?;
        let mut net = PolicyNet::new(ck.config, stored.seed())?;
        net.store.assign_from(&stored)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_json(&text)
    }
}

/// Gaussian log-density.
pub fn gaussian_log_prob(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

pub fn gaussian_entropy(std: f64) -> f64 {
    0.5 + 0.5 * (2.0 * PI).ln() + std.ln()
}

/// Tape version of [`gaussian_log_prob`] for columns of actions, means and stds.
pub fn log_prob_on_tape(tape: &mut Tape, actions: Var, mean: Var, std: Var) -> Result<Var> {
    let diff = tape.sub(actions, mean)?;
    let z = tape.div(diff, std)?;
    let z2 = tape.square(z);
    let quad = tape.scale(z2, -0.5);
    let log_std = tape.ln(std);
    let lp = tape.sub(quad, log_std)?;
    Ok(tape.add_scalar(lp, -0.5 * (2.0 * PI).ln()))
}

/// Tape version of [`gaussian_entropy`].
pub fn entropy_on_tape(tape: &mut Tape, std: Var) -> Var {
    let log_std = tape.ln(std);
    tape.add_scalar(log_std, 0.5 + 0.5 * (2.0 * PI).ln())
}

/// Draw from N(mean, std), clamp into the action range and score the clamped
/// value under the unclamped density.
pub fn sample_action_with<R: Rng + ?Sized>(mean: f64, std: f64, rng: &mut R) -> (f64, f64) {
    let z: f64 = StandardNormal.sample(rng);
    let a = (mean + std * z).clamp(ACTION_MIN, ACTION_MAX);
    (a, gaussian_log_prob(a, mean, std))
}

pub fn sample_action(mean: f64, std: f64, seed: u64) -> (f64, f64) {
    sample_action_with(mean, std, &mut ChaCha8Rng::seed_from_u64(seed))
}
