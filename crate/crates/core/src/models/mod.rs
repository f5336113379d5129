//! Euclidean and tangent-space hyperbolic GCN, GraphSAGE and GAT
//! classifiers with seed-masked heads.

mod batch;
mod checkpoint;
mod config;
pub mod layers;


use std::sync::Arc;

use rand::RngCore;

pub use batch::{GraphBatch, MessageEdges};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{Architecture, Geometry, ModelConfig};

use crate::diffcore::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use layers::{Activation, HeadParams};

/// A configured classifier and its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub params: ParamStore,
}

fn layer_dims(config: &ModelConfig, input_dim: usize) -> Vec<(usize, usize)> {
    (0..config.layers)
        .map(|l| {
            let fan_in = if l == 0 { input_dim } else { config.hidden_dim };
            let fan_out = if l + 1 == config.layers { config.classes } else { config.hidden_dim };
            (fan_in, fan_out)
        })
        .collect()
}

/// Attention heads of layer `l`: `(count, width)`.
fn head_layout(config: &ModelConfig, l: usize) -> (usize, usize) {
    if l + 1 == config.layers {
        (1, config.classes)
    } else {
        (config.heads, config.head_dim)
    }
}

impl Model {
    /// Glorot-initialized model, seeded.
    pub fn new(config: ModelConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let mut r = rng::stream(seed, &[0x1417]);
        let mut params = ParamStore::new();
        for (l, (fan_in, fan_out)) in layer_dims(&config, input_dim).into_iter().enumerate() {
            match config.architecture {
                Architecture::Gcn => {
                    params.insert_glorot(format!("layer{l}.w"), fan_in, fan_out, &mut r)?;
                }
                Architecture::Sage => {
                    params.insert_glorot(format!("layer{l}.w1"), fan_in, fan_out, &mut r)?;
                    params.insert_glorot(format!("layer{l}.w2"), fan_in, fan_out, &mut r)?;
                }
                Architecture::Gat => {
                    let (count, width) = head_layout(&config, l);
                    for h in 0..count {
                        params.insert_glorot(format!("layer{l}.head{h}.w1"), fan_in, width, &mut r)?;
                        params.insert_glorot(format!("layer{l}.head{h}.w2"), fan_in, width, &mut r)?;
                        if config.geometry == Geometry::Euclidean {
                            params.insert_glorot(format!("layer{l}.head{h}.a"), width, 1, &mut r)?;
                        }
                    }
                }
            }
        }
        Ok(Self {
            config,
            input_dim,
            params,
        })
    }

    /// Logits for every batch node; `rng = Some` enables dropout.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, rng: Option<&mut dyn RngCore>) -> Result<Var> {
        forward_with(&self.config, &self.params, tape, batch, rng)
    }

    /// Seed-row class predictions, one per subgraph, dropout off.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, batch, None)?;
        let seeds = tape.gather_rows(logits, &batch.seed_rows)?;
        let z = tape.value(seeds);
        Ok((0..z.rows())
            .map(|i| {
                z.row(i)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                    .0
            })
            .collect())
    }
}

fn param(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Var> {
    let id = store
        .id(name)
        .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))?;
    Ok(tape.param(store, id))
}

/// Forward pass of `config` using the parameters in `store`.
pub fn forward_with(
    config: &ModelConfig,
    store: &ParamStore,
    tape: &mut Tape,
    batch: &GraphBatch,
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let mut act = Activation {
        dropout: config.dropout,
        rng,
    };
    let c = config.curvature.map(|c| c.value());
    let x = tape.constant(batch.features.clone());
    let mut h = match c {
        Some(c) => layers::to_ball(tape, x, c),
        None => x,
    };
    for l in 0..config.layers {
        let last = l + 1 == config.layers;
        let a = if last { None } else { Some(&mut act) };
        h = match (config.architecture, c) {
            (Architecture::Gcn, None) => {
                let w = param(tape, store, &format!("layer{l}.w"))?;
                layers::gcn_layer(tape, batch, h, w, a)?
            }
            (Architecture::Gcn, Some(c)) => {
                let w = param(tape, store, &format!("layer{l}.w"))?;
                layers::hgcn_layer(tape, batch, h, w, c, a)?
            }
            (Architecture::Sage, c) => {
                let w1 = param(tape, store, &format!("layer{l}.w1"))?;
                let w2 = param(tape, store, &format!("layer{l}.w2"))?;
                match c {
                    None => layers::sage_layer(tape, batch, h, w1, w2, a)?,
                    Some(c) => layers::hsage_layer(tape, batch, h, w1, w2, c, a)?,
                }
            }
            (Architecture::Gat, c) => {
                let (count, _) = head_layout(config, l);
                let mut heads = Vec::with_capacity(count);
                for k in 0..count {
                    heads.push(HeadParams {
                        w1: param(tape, store, &format!("layer{l}.head{k}.w1"))?,
                        w2: param(tape, store, &format!("layer{l}.head{k}.w2"))?,
                        a: match c {
                            None => Some(param(tape, store, &format!("layer{l}.head{k}.a"))?),
                            Some(_) => None,
                        },
                    });
                }
                match c {
                    None => layers::gat_layer(tape, batch, h, &heads, a)?.out,
                    Some(c) => layers::hgat_layer(tape, batch, h, &heads, c, a)?.out,
                }
            }
        };
    }
    Ok(h)
}

/// Mean cross-entropy over the seed row of each subgraph. Context nodes
/// never enter the loss.
pub fn seed_masked_loss(tape: &mut Tape, logits: Var, batch: &GraphBatch) -> Result<Var> {
    let labels: Vec<usize> = batch
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::invalid(format!("subgraph {i} has an unlabeled seed"))))
        .collect::<Result<_>>()?;
    let seeds = tape.gather_rows(logits, &batch.seed_rows)?;
    tape.cross_entropy(seeds, &Arc::new(labels))
}
