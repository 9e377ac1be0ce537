use hyplns::gnn::{entropy_on_tape, log_prob_on_tape, PolicyNet};
use hyplns::ilp::{BipartiteGraph, CONS_FEATURES, VAR_FEATURES};
use hyplns::nn::{Matrix, Tape, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_graph(rng: &mut ChaCha8Rng, max_vars: usize, max_cons: usize) -> BipartiteGraph {
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(1..=max_cons);
    let vf: Vec<f64> = (0..n * VAR_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cf: Vec<f64> = (0..m * CONS_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random_bool(0.4) {
                edges.push((i, j));
            }
        }
    }
    edges.shuffle(rng);
    let ef = (0..edges.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    BipartiteGraph::from_parts(vf, cf, edges, ef).unwrap()
}

pub fn permuted(g: &BipartiteGraph, rng: &mut ChaCha8Rng) -> BipartiteGraph {
    let (n, m) = (g.num_vars(), g.num_cons());
    let mut pv: Vec<usize> = (0..n).collect();
    let mut pc: Vec<usize> = (0..m).collect();
    pv.shuffle(rng);
    pc.shuffle(rng);
    let mut vf = vec![0.0; n * VAR_FEATURES];
    for i in 0..n {
        vf[pv[i] * VAR_FEATURES..(pv[i] + 1) * VAR_FEATURES]
            .copy_from_slice(&g.var_features()[i * VAR_FEATURES..(i + 1) * VAR_FEATURES]);
    }
    let mut cf = vec![0.0; m * CONS_FEATURES];
    for j in 0..m {
        cf[pc[j] * CONS_FEATURES..(pc[j] + 1) * CONS_FEATURES]
            .copy_from_slice(&g.cons_features()[j * CONS_FEATURES..(j + 1) * CONS_FEATURES]);
    }
    let mut order: Vec<usize> = (0..g.num_edges()).collect();
    order.shuffle(rng);
    let edges = order
        .iter()
        .map(|&k| (pv[g.edge_vars()[k]], pc[g.edge_cons()[k]]))
        .collect();
    let ef = order.iter().map(|&k| g.edge_features()[k]).collect();
    BipartiteGraph::from_parts(vf, cf, edges, ef).unwrap()
}

/// Actor-critic style scalar loss touching every head.
pub fn full_loss(net: &PolicyNet, g: &BipartiteGraph, tape: &mut Tape) -> Var {
    let h = net.forward(tape, g).unwrap();
    let a = tape.leaf(Matrix::scalar(0.37));
    let lp = log_prob_on_tape(tape, a, h.mean, h.std).unwrap();
    let adv = tape.leaf(Matrix::scalar(-1.3));
    let pg = tape.mul(lp, adv).unwrap();
    let ret = tape.leaf(Matrix::scalar(0.8));
    let err = tape.sub(h.value, ret).unwrap();
    let sq = tape.square(err);
    let vf = tape.scale(sq, 0.5);
    let ent = entropy_on_tape(tape, h.std);
    let ent = tape.scale(ent, -0.02);
    let l = tape.add(pg, vf).unwrap();
    tape.add(l, ent).unwrap()
}

pub fn finite_difference_check(net: &mut PolicyNet, g: &BipartiteGraph, stride: usize) -> (usize, f64) {
    let mut tape = Tape::new();
    let loss = full_loss(net, g, &mut tape);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Matrix> = net
        .params()
        .ids()
        .map(|id| {
            grads.param(id).cloned().unwrap_or_else(|| {
                let (r, c) = net.params().get(id).shape();
                Matrix::zeros(r, c)
            })
        })
        .collect();
    let eval = |net: &PolicyNet| {
        let mut t = Tape::new();
        let l = full_loss(net, g, &mut t);
        t.value(l).item()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let ids: Vec<_> = net.params().ids().collect();
    let mut counter = 0usize;
    for (k, id) in ids.into_iter().enumerate() {
        for i in 0..net.params().get(id).len() {
            counter += 1;
            if counter % stride != 0 {
                continue;
            }
            let orig = net.params().get(id).data()[i];
            net.params_mut().get_mut(id).data_mut()[i] = orig + h;
            let up = eval(net);
            net.params_mut().get_mut(id).data_mut()[i] = orig - h;
            let down = eval(net);
            net.params_mut().get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic[k].data()[i];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (checked, worst)
}

pub fn five_by_three() -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let vf = (0..5 * VAR_FEATURES).map(|_| rng.random_range(0.0..1.0)).collect();
    let cf = (0..3 * CONS_FEATURES).map(|_| rng.random_range(0.0..1.0)).collect();
    let edges = vec![(0, 0), (1, 0), (1, 1), (2, 1), (3, 2), (4, 2), (0, 2)];
    let ef = (0..edges.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    BipartiteGraph::from_parts(vf, cf, edges, ef).unwrap()
}
