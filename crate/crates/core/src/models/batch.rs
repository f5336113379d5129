use std::collections::BTreeSet;
use std::sync::Arc;

use crate::diffcore::{Segments, Tensor};
use crate::error::{Error, Result};
use crate::graphstore::EgoSubgraph;

/// Message-passing pairs `(target, source)` grouped by target.
#[derive(Debug, Clone)]
pub struct MessageEdges {
    pub targets: Arc<Vec<usize>>,
    pub sources: Arc<Vec<usize>>,
    pub segments: Arc<Segments>,
}

impl MessageEdges {
    fn new(mut pairs: Vec<(usize, usize)>, nodes: usize) -> Result<Self> {
        pairs.sort_unstable();
        let targets: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let sources: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        Ok(Self {
            segments: Arc::new(Segments::new(targets.clone(), nodes)?),
            targets: Arc::new(targets),
            sources: Arc::new(sources),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Disjoint union of subgraphs prepared for a forward pass.
///
/// Propagation uses the symmetrized adjacency: every directed edge links
/// both endpoints, parallel edges collapse, and original self-loops are
/// dropped before self-inclusion is decided per layer type.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Tensor,
    /// Neighbors plus the node itself.
    pub with_self: MessageEdges,
    /// Neighbors only.
    pub neighbors: MessageEdges,
    /// `1/sqrt(d_t d_s)` for every `with_self` pair, with `d = |N(v)| + 1`.
    pub gcn_coeff: Tensor,
    /// Row of each subgraph's seed.
    pub seed_rows: Arc<Vec<usize>>,
    /// Seed label index per subgraph.
    pub labels: Vec<Option<usize>>,
    pub node_count: usize,
}

impl GraphBatch {
    pub fn from_subgraphs(subgraphs: &[&EgoSubgraph]) -> Result<Self> {
        let dim = subgraphs.first().map_or(0, |s| s.feature_dim);
        let mut features = Vec::new();
        let mut undirected: Vec<(usize, usize)> = Vec::new();
        let mut seed_rows = Vec::with_capacity(subgraphs.len());
        let mut labels = Vec::with_capacity(subgraphs.len());
        let mut offset = 0;
        for s in subgraphs {
            if s.feature_dim != dim {
                return Err(Error::invalid("subgraphs in a batch must share feature width"));
            }
            if s.seed_mask.iter().filter(|&&m| m).count() != 1 {
                return Err(Error::invalid(format!("subgraph of seed {} needs exactly one seed", s.seed)));
            }
            features.extend_from_slice(&s.features);
            let set: BTreeSet<(usize, usize)> = s
                .edges
                .iter()
                .filter(|(a, b)| a != b)
                .map(|&(a, b)| (a.min(b) as usize, a.max(b) as usize))
                .collect();
            undirected.extend(set.into_iter().map(|(a, b)| (a + offset, b + offset)));
            seed_rows.push(offset + s.seed_index());
            labels.push(s.label.map(|c| c.index()));
            offset += s.len();
        }
        let n = offset;
        let mut degree = vec![1usize; n];
        let mut pairs = Vec::with_capacity(2 * undirected.len());
        for &(a, b) in &undirected {
            pairs.push((a, b));
            pairs.push((b, a));
            degree[a] += 1;
            degree[b] += 1;
        }
        let neighbors = MessageEdges::new(pairs.clone(), n)?;
        pairs.extend((0..n).map(|v| (v, v)));
        let with_self = MessageEdges::new(pairs, n)?;
        let coeff = with_self
            .targets
            .iter()
            .zip(with_self.sources.iter())
            .map(|(&t, &s)| 1.0 / ((degree[t] * degree[s]) as f64).sqrt())
            .collect();
        let gcn_coeff = Tensor::matrix(with_self.len(), 1, coeff)?;
        let features = if n == 0 {
            Tensor::zeros(&[0, dim])
        } else {
            Tensor::matrix(n, dim, features)?
        };
        Ok(Self {
            features,
            with_self,
            neighbors,
            gcn_coeff,
            seed_rows: Arc::new(seed_rows),
            labels,
            node_count: n,
        })
    }

    pub fn len(&self) -> usize {
        self.seed_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seed_rows.is_empty()
    }
}
