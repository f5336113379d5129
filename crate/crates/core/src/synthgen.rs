//! Synthetic branching transaction graphs.
//!
//! Every labeled seed roots a tree grown hop by hop with class-specific
//! branching. Node features are log-normal around a class profile. Extra
//! edges come from within-tree cross links and random inter-tree links.
//! Output uses the ordinary graph file formats.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featpipe::{FIRST_TS, LAST_TS, RECEIVED_COUNT, SENT_COUNT, TOTAL_RECEIVED, TOTAL_SENT};
use crate::graphstore::{EntityClass, TransactionGraph};
use crate::rng;

/// Raw columns written by the generator, in file order.
pub const RAW_COLUMNS: [&str; 6] = [TOTAL_SENT, TOTAL_RECEIVED, SENT_COUNT, RECEIVED_COUNT, FIRST_TS, LAST_TS];

const EPOCH_START: f64 = 1.3e9;
const EPOCH_SPAN: f64 = 3.0e7;

/// Generation parameters of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub class: EntityClass,
    pub seeds: usize,
    /// Inclusive child-count range per hop; its length is the tree depth.
    pub branching: Vec<[usize; 2]>,
    /// Log-scale centers of total sent, total received, sent count,
    /// received count and lifetime in seconds.
    pub log_mean: [f64; 5],
    /// Standard deviation of the log-normal noise; zero is deterministic.
    pub noise: f64,
    /// Chance that a non-root node gains an extra edge inside its tree.
    pub cross_link: f64,
    /// Chance that a tree edge points away from the root.
    pub out_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: Vec<ClassProfile>,
    /// Chance that a node gains an edge to a node of another tree.
    pub inter_tree: f64,
    pub seed: u64,
}

/// Generated graph plus its labeled seeds in generation order.
#[derive(Debug, Clone)]
pub struct SynthGraph {
    pub graph: TransactionGraph,
    pub seeds: Vec<(usize, EntityClass)>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if !(0.0..=1.0).contains(&self.inter_tree) {
            return bad(format!("inter_tree {} outside [0, 1]", self.inter_tree));
        }
        for (i, p) in self.classes.iter().enumerate() {
            if self.classes[..i].iter().any(|q| q.class == p.class) {
                return bad(format!("class {} listed twice", p.class));
            }
            if p.branching.is_empty() {
                return bad(format!("class {} has depth 0", p.class));
            }
            if let Some(r) = p.branching.iter().find(|r| r[0] < 1 || r[0] > r[1]) {
                return bad(format!("class {} branching range {r:?} invalid", p.class));
            }
            for (name, x) in [("cross_link", p.cross_link), ("out_prob", p.out_prob)] {
                if !(0.0..=1.0).contains(&x) {
                    return bad(format!("class {} {name} {x} outside [0, 1]", p.class));
                }
            }
            if !(p.noise >= 0.0 && p.noise.is_finite()) || p.log_mean.iter().any(|m| !m.is_finite()) {
                return bad(format!("class {} feature profile must be finite with noise >= 0", p.class));
            }
        }
        Ok(())
    }

    /// Seven classes separated jointly by branching shape and feature
    /// profile, with overlapping heavy-tailed features.
    pub fn branching(seeds_per_class: usize, depth: usize, seed: u64) -> Self {
        // (hop-1 range, deeper range, volume center, count center, out_prob)
        let table: [([usize; 2], [usize; 2], f64, f64, f64); 7] = [
            ([8, 12], [2, 4], 24.0, 4.0, 0.5),
            ([4, 8], [1, 3], 21.0, 3.0, 0.7),
            ([5, 9], [3, 5], 22.0, 3.5, 0.4),
            ([1, 2], [6, 10], 23.0, 2.0, 0.9),
            ([3, 5], [3, 5], 20.0, 3.0, 0.3),
            ([2, 4], [2, 3], 21.5, 2.5, 0.5),
            ([6, 8], [1, 2], 19.5, 3.5, 0.6),
        ];
        let classes = EntityClass::ALL
            .iter()
            .zip(table)
            .map(|(&class, (first, deeper, vol, cnt, out))| ClassProfile {
                class,
                seeds: seeds_per_class,
                branching: (0..depth).map(|h| if h == 0 { first } else { deeper }).collect(),
                log_mean: [vol, vol + 0.3, cnt, cnt + 0.2, 16.0],
                noise: 1.2,
                cross_link: 0.05,
                out_prob: out,
            })
            .collect();
        Self {
            classes,
            inter_tree: 0.01,
            seed,
        }
    }

    /// Two classes with disjoint feature centers and no noise.
    pub fn separable(seeds_per_class: usize, seed: u64) -> Self {
        let profile = |class, vol: f64| ClassProfile {
            class,
            seeds: seeds_per_class,
            branching: vec![[2, 3], [1, 2]],
            log_mean: [vol, vol, vol / 6.0, vol / 6.0, 16.0],
            noise: 0.0,
            cross_link: 0.0,
            out_prob: 0.5,
        };
        Self {
            classes: vec![profile(EntityClass::Exchange, 12.0), profile(EntityClass::Ponzi, 24.0)],
            inter_tree: 0.0,
            seed,
        }
    }

    /// Seven classes on deep trees with the given mean branching; classes
    /// differ in how branching is distributed over hops and, weakly, in
    /// features.
    pub fn tree(seeds_per_class: usize, depth: usize, branching: usize, seed: u64) -> Self {
        let b = branching.max(2);
        let classes = EntityClass::ALL
            .iter()
            .enumerate()
            .map(|(k, &class)| {
                let ranges = (0..depth)
                    .map(|h| {
                        // alternate wide-then-narrow patterns per class
                        let tilt = ((k + h) % 3) as isize - 1;
                        let centre = (b as isize + tilt * (k as isize % 2 + 1)).max(1) as usize;
                        [centre.saturating_sub(1).max(1), centre + 1]
                    })
                    .collect();
                ClassProfile {
                    class,
                    seeds: seeds_per_class,
                    branching: ranges,
                    log_mean: [
                        20.0 + 0.4 * k as f64,
                        20.5 - 0.3 * k as f64,
                        3.0 + 0.1 * k as f64,
                        3.0,
                        16.0,
                    ],
                    noise: 1.0,
                    cross_link: 0.0,
                    out_prob: 0.3 + 0.1 * k as f64,
                }
            })
            .collect();
        Self {
            classes,
            inter_tree: 0.0,
            seed,
        }
    }
}

struct Tree {
    /// Edges in local ids; node 0 is the root.
    edges: Vec<(usize, usize)>,
    features: Vec<f64>,
    size: usize,
}

fn grow(p: &ClassProfile, r: &mut impl Rng) -> Tree {
    let mut edges = Vec::new();
    let mut parent = vec![usize::MAX];
    let mut frontier = vec![0usize];
    for range in &p.branching {
        let mut next = Vec::new();
        for &v in &frontier {
            let k = r.random_range(range[0]..=range[1]);
            for _ in 0..k {
                let child = parent.len();
                parent.push(v);
                edges.push(if r.random::<f64>() < p.out_prob { (v, child) } else { (child, v) });
                next.push(child);
            }
        }
        frontier = next;
    }
    let size = parent.len();
    if p.cross_link > 0.0 && size > 2 {
        for v in 1..size {
            if r.random::<f64>() < p.cross_link {
                let u = r.random_range(0..size);
                if u != v && u != parent[v] {
                    edges.push((v, u));
                }
            }
        }
    }
    let mut features = Vec::with_capacity(size * RAW_COLUMNS.len());
    for _ in 0..size {
        let mut draw = |m: f64| {
            let z: f64 = r.sample(StandardNormal);
            (m + p.noise * z).exp()
        };
        let sent = draw(p.log_mean[0]);
        let received = draw(p.log_mean[1]);
        let sent_count = draw(p.log_mean[2]).round().max(1.0);
        let received_count = draw(p.log_mean[3]).round().max(1.0);
        let lifetime = draw(p.log_mean[4]);
        let first = EPOCH_START + r.random::<f64>() * EPOCH_SPAN;
        features.extend([sent, received, sent_count, received_count, first.floor(), (first + lifetime).floor()]);
    }
    Tree { edges, features, size }
}

/// Generates the graph; identical specs give identical graphs.
pub fn generate(spec: &SynthSpec) -> Result<SynthGraph> {
    spec.validate()?;
    let jobs: Vec<(usize, &ClassProfile)> = spec
        .classes
        .iter()
        .flat_map(|p| std::iter::repeat_n(p, p.seeds))
        .enumerate()
        .collect();
    let trees: Vec<Tree> = jobs
        .par_iter()
        .map(|&(i, p)| grow(p, &mut rng::stream(spec.seed, &[0, i as u64])))
        .collect();
    let mut offsets = Vec::with_capacity(trees.len());
    let mut n = 0;
    for t in &trees {
        offsets.push(n);
        n += t.size;
    }
    let mut edges = Vec::new();
    let mut features = Vec::with_capacity(n * RAW_COLUMNS.len());
    let mut labels = vec![None; n];
    let mut seeds = Vec::with_capacity(trees.len());
    for ((t, &off), &(_, p)) in trees.iter().zip(&offsets).zip(&jobs) {
        edges.extend(t.edges.iter().map(|&(a, b)| (a + off, b + off)));
        features.extend_from_slice(&t.features);
        labels[off] = Some(p.class);
        seeds.push((off, p.class));
    }
    if spec.inter_tree > 0.0 && trees.len() > 1 {
        let mut r = rng::stream(spec.seed, &[1]);
        let tree_of = |v: usize| offsets.partition_point(|&o| o <= v) - 1;
        for v in 0..n {
            if r.random::<f64>() < spec.inter_tree {
                let u = r.random_range(0..n);
                if tree_of(u) != tree_of(v) {
                    edges.push((v, u));
                }
            }
        }
    }
    let names = RAW_COLUMNS.iter().map(|s| s.to_string()).collect();
    let graph = TransactionGraph::new(n, edges, names, features, labels)?;
    Ok(SynthGraph { graph, seeds })
}
