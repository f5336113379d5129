use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{EntityClass, TransactionGraph};
use crate::error::{Error, Result};
use crate::rng;

/// Per-hop fan-out caps, hops numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, usize>", into = "BTreeMap<usize, usize>")]
pub struct FanoutSpec {
    fanouts: Vec<usize>,
}

impl FanoutSpec {
    pub fn new(fanouts: Vec<usize>) -> Result<Self> {
        if fanouts.iter().any(|&f| f == 0) {
            return Err(Error::invalid("fan-outs must be positive"));
        }
        Ok(Self { fanouts })
    }

    /// `{1:5, 2:10}`
    pub fn depth2() -> Self {
        Self {
            fanouts: vec![5, 10],
        }
    }

    /// `{1:5, 2:10, 3:8}`
    pub fn depth3() -> Self {
        Self {
            fanouts: vec![5, 10, 8],
        }
    }

    pub fn depth(&self) -> usize {
        self.fanouts.len()
    }

    /// Fan-out at a 1-based hop.
    pub fn fanout(&self, hop: usize) -> usize {
        self.fanouts[hop - 1]
    }

    /// `1 + sum_k prod_{j<=k} fanout_j`.
    pub fn node_bound(&self) -> usize {
        let mut total = 1;
        let mut layer = 1;
        for &f in &self.fanouts {
            layer *= f;
            total += layer;
        }
        total
    }
}

impl TryFrom<BTreeMap<usize, usize>> for FanoutSpec {
    type Error = Error;

    fn try_from(map: BTreeMap<usize, usize>) -> Result<Self> {
        for (i, k) in map.keys().enumerate() {
            if *k != i + 1 {
                return Err(Error::invalid(format!(
                    "hop keys must be contiguous from 1, found {k} at position {}",
                    i + 1
                )));
            }
        }
        FanoutSpec::new(map.into_values().collect())
    }
}

impl From<FanoutSpec> for BTreeMap<usize, usize> {
    fn from(spec: FanoutSpec) -> Self {
        spec.fanouts
            .into_iter()
            .enumerate()
            .map(|(i, f)| (i + 1, f))
            .collect()
    }
}

impl fmt::Display for FanoutSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .fanouts
            .iter()
            .enumerate()
            .map(|(i, x)| format!("{}:{x}", i + 1))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Parses `1:5,2:10` (braces and spaces optional).
impl FromStr for FanoutSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches('{').trim_end_matches('}');
        let mut map = BTreeMap::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad fan-out entry `{part}`")))?;
            let k = k.trim().parse().map_err(|_| Error::invalid(format!("bad hop `{k}`")))?;
            let v = v.trim().parse().map_err(|_| Error::invalid(format!("bad fan-out `{v}`")))?;
            map.insert(k, v);
        }
        FanoutSpec::try_from(map)
    }
}

/// Seed-centered sample: the seed is always local node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoSubgraph {
    pub seed: usize,
    /// Original node ids, seed first.
    pub nodes: Vec<usize>,
    /// Hop at which each node was first reached.
    pub hop: Vec<u32>,
    /// Local endpoints of every original directed edge among `nodes`.
    pub edges: Vec<(u32, u32)>,
    /// Row-major `nodes.len() x feature_dim`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub seed_mask: Vec<bool>,
    pub label: Option<EntityClass>,
}

impl EgoSubgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn seed_index(&self) -> usize {
        self.seed_mask
            .iter()
            .position(|&m| m)
            .expect("exactly one seed position")
    }
}

/// Breadth-wise fixed fan-out expansion around `seed`.
///
/// At hop `k` each frontier node draws up to `fanout_k` not-yet-visited
/// neighbors uniformly without replacement from the union of its in- and
/// out-neighbors. All original directed edges among the drawn nodes are then
/// induced, duplicates included.
pub fn sample_ego(graph: &TransactionGraph, seed: usize, spec: &FanoutSpec, rng: &mut impl Rng) -> Result<EgoSubgraph> {
    if seed >= graph.node_count() {
        return Err(Error::invalid(format!("seed {seed} is not a node")));
    }
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut nodes = vec![seed];
    let mut hop = vec![0u32];
    local.insert(seed, 0);
    let mut frontier = vec![seed];
    for k in 1..=spec.depth() {
        let mut next = Vec::new();
        for &f in &frontier {
            let candidates: Vec<usize> = graph
                .neighbors(f)
                .iter()
                .copied()
                .filter(|u| !local.contains_key(u))
                .collect();
            let take = spec.fanout(k).min(candidates.len());
            let mut picked: Vec<usize> = if take == candidates.len() {
                candidates
            } else {
                sample(rng, candidates.len(), take)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect()
            };
            picked.sort_unstable();
            for u in picked {
                local.insert(u, nodes.len());
                nodes.push(u);
                hop.push(k as u32);
                next.push(u);
            }
        }
        frontier = next;
    }

    let mut edges = Vec::new();
    for (i, &v) in nodes.iter().enumerate() {
        for &u in graph.out_neighbors(v) {
            if let Some(&j) = local.get(&u) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let dim = graph.feature_dim();
    let mut features = Vec::with_capacity(nodes.len() * dim);
    for &v in &nodes {
        features.extend_from_slice(graph.features(v));
    }
    let mut seed_mask = vec![false; nodes.len()];
    seed_mask[0] = true;
    Ok(EgoSubgraph {
        seed,
        label: graph.label(seed),
        nodes,
        hop,
        edges,
        features,
        feature_dim: dim,
        seed_mask,
    })
}

/// One subgraph per seed. Each seed draws from its own stream keyed by
/// `(master_seed, node id)`, so results do not depend on scheduling.
pub fn sample_all_seeds(
    graph: &TransactionGraph,
    seeds: &[usize],
    spec: &FanoutSpec,
    master_seed: u64,
) -> Result<Vec<EgoSubgraph>> {
    seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng::stream(master_seed, &[s as u64]);
            sample_ego(graph, s, spec, &mut r)
        })
        .collect()
}
