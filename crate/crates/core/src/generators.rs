//! Seeded generators for the four benchmark families.
//!
//! | family | variables | constraints |
//! |--------|-----------|-------------|
//! | MIS    | nodes     | edges, `x_u + x_v <= 1` |
//! | MVC    | nodes     | edges, `x_u + x_v >= 1` |
//! | SC     | sets      | items, covered at least once |
//! | CA     | bids      | items, sold at most once |

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{Constraint, Direction, IlpInstance, Sense};

pub const SC_SET_SIZE: usize = 4;
pub const CA_BID_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mis,
    Mvc,
    Sc,
    Ca,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mis, Family::Mvc, Family::Sc, Family::Ca];

    /// `(n, m)` of the small and medium benchmark datasets.
    pub fn dataset_size(self, class: SizeClass) -> (usize, usize) {
        let scale = match class {
            SizeClass::Small => 1,
            SizeClass::Medium => 10,
            SizeClass::Hard => 100,
        };
        let (n, m) = match self {
            Family::Mis | Family::Mvc => (10_000, 30_000),
            Family::Ca => (10_000, 10_000),
            Family::Sc => (20_000, 20_000),
        };
        (n * scale, m * scale)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Mis => "mis",
            Family::Mvc => "mvc",
            Family::Sc => "sc",
            Family::Ca => "ca",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mis" => Ok(Family::Mis),
            "mvc" => Ok(Family::Mvc),
            "sc" => Ok(Family::Sc),
            "ca" => Ok(Family::Ca),
            other => Err(Error::Parameter(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Hard,
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "hard" => Ok(SizeClass::Hard),
            other => Err(Error::Parameter(format!("unknown size class {other:?}"))),
        }
    }
}

/// Family, primary size `n` (variables), secondary size `m` (constraints), seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn generate(&self) -> Result<IlpInstance> {
        if self.n < 2 || self.m < 1 {
            return Err(Error::Parameter(format!(
                "need n >= 2 and m >= 1, got n={} m={}",
                self.n, self.m
            )));
        }
        match self.family {
            Family::Mis => gen_mis(self.n, self.m, self.seed),
            Family::Mvc => gen_mvc(self.n, self.m, self.seed),
            Family::Sc => gen_sc(self.n, self.m, self.seed),
            Family::Ca => gen_ca(self.n, self.m, self.seed),
        }
    }
}

/// `n_edges` distinct unordered pairs, in sampling order.
fn random_graph(n_nodes: usize, n_edges: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let max_edges = n_nodes.saturating_mul(n_nodes.saturating_sub(1)) / 2;
    if n_edges > max_edges {
        return Err(Error::Parameter(format!(
            "{n_edges} edges requested but a simple graph on {n_nodes} nodes has at most {max_edges}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n_edges * 2 > max_edges {
        // dense: choose among all pairs directly
        let all: Vec<(usize, usize)> = (0..n_nodes)
            .flat_map(|u| (u + 1..n_nodes).map(move |v| (u, v)))
            .collect();
        let picks = index::sample(&mut rng, all.len(), n_edges);
        return Ok(picks.into_iter().map(|k| all[k]).collect());
    }
    let mut seen = HashSet::with_capacity(n_edges * 2);
    let mut edges = Vec::with_capacity(n_edges);
    while edges.len() < n_edges {
        let u = rng.random_range(0..n_nodes);
        let v = rng.random_range(0..n_nodes);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    Ok(edges)
}

fn edge_rows(edges: &[(usize, usize)], sense: Sense) -> Vec<Constraint> {
    edges
        .iter()
        .map(|&(u, v)| Constraint::new(vec![(u, 1.0), (v, 1.0)], sense, 1.0))
        .collect()
}

/// Maximum independent set on a random simple graph.
pub fn gen_mis(n_nodes: usize, n_edges: usize, seed: u64) -> Result<IlpInstance> {
    let edges = random_graph(n_nodes, n_edges, seed)?;
    IlpInstance::new(
        vec![1.0; n_nodes],
        Direction::Maximize,
        edge_rows(&edges, Sense::Le),
    )
}

/// Minimum vertex cover on the same graph construction as [`gen_mis`].
pub fn gen_mvc(n_nodes: usize, n_edges: usize, seed: u64) -> Result<IlpInstance> {
    let edges = random_graph(n_nodes, n_edges, seed)?;
    IlpInstance::new(
        vec![1.0; n_nodes],
        Direction::Minimize,
        edge_rows(&edges, Sense::Ge),
    )
}

/// Give every item at least one owner by moving surplus slots of
/// multiply-owned items onto uncovered ones.
fn patch_coverage(owners: &mut [Vec<usize>], n_items: usize, rng: &mut ChaCha8Rng) {
    let mut count = vec![0usize; n_items];
    for list in owners.iter() {
        for &it in list {
            count[it] += 1;
        }
    }
    for item in 0..n_items {
        if count[item] > 0 {
            continue;
        }
        // pigeonhole: total slots >= n_items, so some slot holds a surplus item
        let mut placed = false;
        for _ in 0..64 {
            let s = rng.random_range(0..owners.len());
            let candidates: Vec<usize> = (0..owners[s].len())
                .filter(|&k| count[owners[s][k]] > 1)
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let k = candidates[rng.random_range(0..candidates.len())];
            count[owners[s][k]] -= 1;
            owners[s][k] = item;
            count[item] = 1;
            placed = true;
            break;
        }
        if !placed {
            'scan: for list in owners.iter_mut() {
                for slot in list.iter_mut() {
                    if count[*slot] > 1 {
                        count[*slot] -= 1;
                        *slot = item;
                        count[item] = 1;
                        break 'scan;
                    }
                }
            }
        }
    }
}

fn item_rows(owners: &[Vec<usize>], n_items: usize, sense: Sense) -> Vec<Constraint> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_items];
    for (var, list) in owners.iter().enumerate() {
        for &it in list {
            rows[it].push((var, 1.0));
        }
    }
    rows.into_iter()
        .filter(|t| !t.is_empty())
        .map(|t| Constraint::new(t, sense, 1.0))
        .collect()
}

/// Set covering: `n_sets` variables, `n_items` covering rows, each set
/// holding 4 distinct items. The all-ones vector is always feasible.
pub fn gen_sc(n_sets: usize, n_items: usize, seed: u64) -> Result<IlpInstance> {
    if n_items < SC_SET_SIZE {
        return Err(Error::Parameter(format!(
            "set covering needs at least {SC_SET_SIZE} items, got {n_items}"
        )));
    }
    if n_sets * SC_SET_SIZE < n_items {
        return Err(Error::Parameter(format!(
            "{n_sets} sets of {SC_SET_SIZE} items cannot cover {n_items} items"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut owners: Vec<Vec<usize>> = (0..n_sets)
        .map(|_| index::sample(&mut rng, n_items, SC_SET_SIZE).into_vec())
        .collect();
    patch_coverage(&mut owners, n_items, &mut rng);
    IlpInstance::new(
        vec![1.0; n_sets],
        Direction::Minimize,
        item_rows(&owners, n_items, Sense::Ge),
    )
}

/// Combinatorial auction: `n_bids` variables over `n_items` items, each bid
/// asking for 5 distinct items. Prices add per-item base values drawn from
/// 1..=100 plus per-bid noise in 0..=10. Uncovered items are patched in when
/// `5 * n_bids >= n_items`; otherwise their (empty) rows are dropped.
pub fn gen_ca(n_bids: usize, n_items: usize, seed: u64) -> Result<IlpInstance> {
    if n_items < CA_BID_SIZE {
        return Err(Error::Parameter(format!(
            "combinatorial auction needs at least {CA_BID_SIZE} items, got {n_items}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<u32> = (0..n_items).map(|_| rng.random_range(1..=100)).collect();
    let mut owners: Vec<Vec<usize>> = (0..n_bids)
        .map(|_| index::sample(&mut rng, n_items, CA_BID_SIZE).into_vec())
        .collect();
    if n_bids * CA_BID_SIZE >= n_items {
        patch_coverage(&mut owners, n_items, &mut rng);
    }
    let prices: Vec<f64> = owners
        .iter()
        .map(|items| {
            let value: u32 = items.iter().map(|&it| base[it]).sum();
            let noise: u32 = rng.random_range(0..=10);
            f64::from(value + noise)
        })
        .collect();
    IlpInstance::new(
        prices,
        Direction::Maximize,
        item_rows(&owners, n_items, Sense::Le),
    )
}
