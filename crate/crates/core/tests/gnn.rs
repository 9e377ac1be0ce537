use hyplns::gnn::{gaussian_log_prob, sample_action, PolicyConfig, PolicyNet};
use hyplns::ilp::{BipartiteGraph, CONS_FEATURES, VAR_FEATURES};
use hyplns::nn::{Matrix, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::graphs::{finite_difference_check, five_by_three, permuted, random_graph};

/// Straight-line evaluation of the network from its named parameters,
/// computing every message per edge from concatenated inputs.
struct Reference<'a> {
    net: &'a PolicyNet,
}

impl Reference<'_> {
    fn p(&self, name: &str) -> &Matrix {
        let s = self.net.params();
        s.get(s.id(name).unwrap_or_else(|| panic!("missing {name}")))
    }

    fn affine(&self, x: &[f64], w: &Matrix, b: &Matrix) -> Vec<f64> {
        (0..w.cols())
            .map(|c| b.get(0, c) + (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum::<f64>())
            .collect()
    }

    fn layer(&self, name: &str, x: &[f64]) -> Vec<f64> {
        self.affine(x, self.p(&format!("{name}.w")), self.p(&format!("{name}.b")))
    }

    fn relu(v: Vec<f64>) -> Vec<f64> {
        v.into_iter().map(|x| x.max(0.0)).collect()
    }

    fn mlp(&self, name: &str, layers: usize, x: &[f64], last_relu: bool) -> Vec<f64> {
        let mut h = x.to_vec();
        for k in 0..layers {
            h = self.layer(&format!("{name}.{k}"), &h);
            if k + 1 < layers || last_relu {
                h = Self::relu(h);
            }
        }
        h
    }

    fn message(&self, name: &str, recv: &[f64], send: &[f64], edge: &[f64]) -> Vec<f64> {
        let cat: Vec<f64> = recv.iter().chain(send).chain(edge).copied().collect();
        let d = recv.len();
        let mut w = Matrix::zeros(3 * d, d);
        for (blk, part) in ["w_recv", "w_send", "w_edge"].iter().enumerate() {
            let src = self.p(&format!("{name}.{part}"));
            for r in 0..d {
                for c in 0..d {
                    w.set(blk * d + r, c, src.get(r, c));
                }
            }
        }
        Self::relu(self.affine(&cat, &w, self.p(&format!("{name}.b"))))
    }

    fn half_conv(&self, name: &str, recv: &[Vec<f64>], send: &[Vec<f64>], edges: &[(usize, usize)], e: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = recv[0].len();
        let mut agg = vec![vec![0.0; d]; recv.len()];
        for (k, &(r, s)) in edges.iter().enumerate() {
            let msg = self.message(&format!("{name}.g"), &recv[r], &send[s], &e[k]);
            for c in 0..d {
                agg[r][c] += msg[c];
            }
        }
        recv.iter()
            .zip(&agg)
            .map(|(h, a)| {
                let cat: Vec<f64> = h.iter().chain(a).copied().collect();
                Self::relu(self.layer(&format!("{name}.f"), &cat))
            })
            .collect()
    }

    fn eval(&self, g: &BipartiteGraph) -> (f64, f64, f64) {
        let cfg = self.net.config();
        let rows = |data: &[f64], w: usize| -> Vec<Vec<f64>> { data.chunks(w).map(|c| c.to_vec()).collect() };
        let mut v: Vec<Vec<f64>> = rows(g.var_features(), VAR_FEATURES)
            .iter()
            .map(|x| self.mlp("embed.var", 1, x, true))
            .collect();
        let mut c: Vec<Vec<f64>> = rows(g.cons_features(), CONS_FEATURES)
            .iter()
            .map(|x| self.mlp("embed.cons", 1, x, true))
            .collect();
        let e: Vec<Vec<f64>> = g.edge_features().iter().map(|&x| self.mlp("embed.edge", 1, &[x], true)).collect();
        let to_cons: Vec<(usize, usize)> = g.edge_cons().iter().copied().zip(g.edge_vars().iter().copied()).collect();
        let to_var: Vec<(usize, usize)> = to_cons.iter().map(|&(j, i)| (i, j)).collect();
        for k in 0..cfg.rounds {
            c = self.half_conv(&format!("conv{k}.cons"), &c, &v, &to_cons, &e);
            v = self.half_conv(&format!("conv{k}.var"), &v, &c, &to_var, &e);
        }
        let d = cfg.embed_dim;
        let mut pooled = vec![0.0; d];
        for row in &v {
            for k in 0..d {
                pooled[k] += row[k] / v.len() as f64;
            }
        }
        let h = self.mlp("actor.trunk", cfg.trunk.len(), &pooled, true);
        let mean = ((self.mlp("actor.mean", 2, &h, false)[0].tanh() + 1.0) / 2.0).clamp(1e-9, 1.0 - 1e-9);
        let z = self.mlp("actor.std", 2, &h, false)[0];
        let sp = z.max(0.0) + (-z.abs()).exp().ln_1p();
        let std = sp.clamp(cfg.sigma_min, cfg.sigma_max);
        let value = self.mlp("critic", cfg.critic.len() + 1, &pooled, false)[0];
        (mean, std, value)
    }
}

#[test]
fn matches_reference_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let cfg = PolicyConfig::default().with_embed_dim(8 + seed as usize);
        let net = PolicyNet::new(cfg, seed).unwrap();
        let g = random_graph(&mut rng, 6, 4);
        let (m, s, v) = net.evaluate(&g).unwrap();
        let (rm, rs, rv) = Reference { net: &net }.eval(&g);
        assert!((m - rm).abs() < 1e-12 && (s - rs).abs() < 1e-12 && (v - rv).abs() < 1e-12);
    }
}

#[test]
fn single_edge_unrolls_by_hand() {
    let net = PolicyNet::new(PolicyConfig::default(), 5).unwrap();
    let g = BipartiteGraph::from_parts(vec![0.2, 1.0, 1.0, 0.7, 0.4], vec![1.0, 1.0, 0.0, 1.0, 0.0], vec![(0, 0)], vec![-1.0]).unwrap();
    let (m, _, v) = net.evaluate(&g).unwrap();
    let (rm, _, rv) = Reference { net: &net }.eval(&g);
    assert!((m - rm).abs() < 1e-12 && (v - rv).abs() < 1e-12);
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = PolicyNet::new(PolicyConfig::default(), 11).unwrap();
    for _ in 0..100 {
        let g = random_graph(&mut rng, 12, 8);
        let p = permuted(&g, &mut rng);
        let a = net.evaluate(&g).unwrap();
        let b = net.evaluate(&p).unwrap();
        assert!((a.0 - b.0).abs() <= 1e-9 && (a.1 - b.1).abs() <= 1e-9 && (a.2 - b.2).abs() <= 1e-9);
    }
}

#[test]
fn edgeless_embeddings_ignore_constraints() {
    let net = PolicyNet::new(PolicyConfig::default().with_embed_dim(16), 3).unwrap();
    let vf = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.3, 0.4, 0.5];
    let a = BipartiteGraph::from_parts(vf.clone(), vec![1.0, 0.0, 1.0, 0.0, 0.0], vec![], vec![]).unwrap();
    let b = BipartiteGraph::from_parts(vf, vec![-1.0, 0.5, 0.0, 0.0, 1.0], vec![], vec![]).unwrap();
    let enc = |g: &BipartiteGraph| {
        let mut t = Tape::new();
        let v = net.encode(&mut t, g).unwrap();
        t.value(v).clone()
    };
    let (ea, eb) = (enc(&a), enc(&b));
    assert_eq!(ea, eb);
    assert_eq!(ea.row(0), ea.row(1));
}

#[test]
fn duplicated_isolated_nodes_keep_the_mean() {
    let net = PolicyNet::new(PolicyConfig::default(), 4).unwrap();
    let vf = vec![0.3, 0.1, 1.0, 0.5, 0.9, -0.2, 0.4, 0.0, 0.1, 0.2];
    let cf = vec![0.5, 1.0, 0.0, 1.0, 0.0];
    let once = BipartiteGraph::from_parts(vf.clone(), cf.clone(), vec![], vec![]).unwrap();
    let twice_vf: Vec<f64> = vf.iter().chain(&vf).copied().collect();
    let twice = BipartiteGraph::from_parts(twice_vf, cf, vec![], vec![]).unwrap();
    let (a, _) = net.actor_forward(&once).unwrap();
    let (b, _) = net.actor_forward(&twice).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn head_ranges_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..10_000u64 {
        let mut net = PolicyNet::new(PolicyConfig::default().with_embed_dim(8), k % 50).unwrap();
        // inflate weights sometimes to reach saturation
        if k % 3 == 0 {
            let store = net.params_mut();
            for id in store.ids().collect::<Vec<_>>() {
                store.get_mut(id).scale_assign(8.0);
            }
        }
        let g = random_graph(&mut rng, 4, 3);
        let (m, s, v) = net.evaluate(&g).unwrap();
        assert!(m > 0.0 && m < 1.0, "{m}");
        assert!((0.01..=0.5).contains(&s), "{s}");
        assert!(v.is_finite());
    }
}

#[test]
fn zero_decoder_gives_zero_value() {
    let mut net = PolicyNet::new(PolicyConfig::default(), 6).unwrap();
    for id in net.critic_params() {
        net.params_mut().get_mut(id).scale_assign(0.0);
    }
    let g = random_graph(&mut ChaCha8Rng::seed_from_u64(0), 5, 3);
    assert_eq!(net.critic_forward(&g).unwrap(), 0.0);
}

#[test]
fn value_gradient_reaches_the_encoder() {
    let net = PolicyNet::new(PolicyConfig::default(), 8).unwrap();
    let g = random_graph(&mut ChaCha8Rng::seed_from_u64(4), 5, 3);
    let mut t = Tape::new();
    let h = net.forward(&mut t, &g).unwrap();
    let grads = t.backward(h.value).unwrap();
    let norm: f64 = net
        .encoder_params()
        .into_iter()
        .filter_map(|id| grads.param(id))
        .map(|g| g.sum_sq())
        .sum();
    assert!(norm > 0.0);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let net = PolicyNet::new(PolicyConfig::default().with_embed_dim(12), 21).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    net.save(&path).unwrap();
    let back = PolicyNet::load(&path).unwrap();
    assert_eq!(back, net);
    let g = random_graph(&mut ChaCha8Rng::seed_from_u64(9), 6, 4);
    assert_eq!(net.evaluate(&g).unwrap(), back.evaluate(&g).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(PolicyNet::load(&path).is_err());
}

#[test]
fn sampling_at_minimum_std_concentrates() {
    let close = (0..10_000u64)
        .filter(|&s| (sample_action(0.5, 0.01, s).0 - 0.5).abs() < 0.05)
        .count();
    assert!(close >= 9_900);
    let (a, lp) = sample_action(0.5, 0.2, 3);
    assert_eq!(lp, gaussian_log_prob(a, 0.5, 0.2));
}

#[test]
fn finite_differences_small_network_all_parameters() {
    let mut net = PolicyNet::new(PolicyConfig::default().with_embed_dim(16), 31).unwrap();
    let (checked, worst) = finite_difference_check(&mut net, &five_by_three(), 1);
    assert_eq!(checked, net.params().num_scalars());
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn finite_differences_default_network_sampled_parameters() {
    let mut net = PolicyNet::new(PolicyConfig::default(), 32).unwrap();
    let (checked, worst) = finite_difference_check(&mut net, &five_by_three(), 13);
    assert!(checked > 5_000);
    assert!(worst <= 1e-4, "worst relative error {worst}");
}
