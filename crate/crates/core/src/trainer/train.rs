use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig};
use super::metrics::MetricsReport;
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::graphstore::EgoSubgraph;
use crate::manifold::CURVATURE_GRID;
use crate::models::{seed_masked_loss, GraphBatch, Model, ModelConfig};
use crate::rng;

/// Subgraphs per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_grid: Vec<f64>,
    pub curvature_grid: Vec<f64>,
    pub max_epochs: usize,
    /// Epochs without a validation macro-F1 improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Per-class size of the oversampled training set.
    pub oversample_target: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_grid: vec![1e-4, 3e-4, 1e-3, 3e-3],
            curvature_grid: CURVATURE_GRID.to_vec(),
            max_epochs: 200,
            patience: 20,
            batch_size: 32,
            seed: 0,
            oversample_target: 300,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lr_grid.is_empty() || self.curvature_grid.is_empty() {
            return bad("learning-rate and curvature grids must be non-empty".into());
        }
        if let Some(lr) = self.lr_grid.iter().chain([&self.learning_rate]).find(|lr| !(**lr > 0.0 && lr.is_finite())) {
            return bad(format!("learning rate {lr} must be positive"));
        }
        if let Some(c) = self.curvature_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return bad(format!("curvature {c} must be positive"));
        }
        if self.patience >= self.max_epochs {
            return bad(format!("patience {} must be below max_epochs {}", self.patience, self.max_epochs));
        }
        if self.batch_size == 0 || self.oversample_target == 0 {
            return bad("batch_size and oversample_target must be positive".into());
        }
        Ok(())
    }
}

/// How a training run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    EarlyStopped,
    MaxEpochs,
    Diverged { epoch: usize, reason: String },
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            RunStatus::EarlyStopped => "early_stopped".into(),
            RunStatus::MaxEpochs => "max_epochs".into(),
            RunStatus::Diverged { epoch, reason } => format!("failed: epoch {epoch}: {reason}"),
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, RunStatus::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best validation macro-F1.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Zero means the initial weights were never improved on.
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    /// Epochs actually run, including a diverged one.
    pub epochs: usize,
    pub status: RunStatus,
}

/// Seed-level predictions against true labels.
pub fn evaluate(model: &Model, set: &[&EgoSubgraph]) -> Result<MetricsReport> {
    let mut pairs = Vec::with_capacity(set.len());
    for chunk in set.chunks(EVAL_CHUNK) {
        let batch = GraphBatch::from_subgraphs(chunk)?;
        let predicted = model.predict(&batch)?;
        for (s, p) in chunk.iter().zip(predicted) {
            let truth = s
                .label
                .ok_or_else(|| Error::invalid(format!("evaluation seed {} has no label", s.seed)))?;
            pairs.push((truth.index(), p));
        }
    }
    Ok(MetricsReport::from_pairs(pairs))
}

/// Validation macro-F1 and mean seed cross-entropy from one inference pass.
fn validation_scores(model: &Model, set: &[&EgoSubgraph]) -> Result<(f64, f64)> {
    let mut pairs = Vec::with_capacity(set.len());
    let mut loss = 0.0;
    for chunk in set.chunks(EVAL_CHUNK) {
        let batch = GraphBatch::from_subgraphs(chunk)?;
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &batch, None)?;
        let seeds = tape.gather_rows(logits, &batch.seed_rows)?;
        let z = tape.value(seeds);
        for (i, s) in chunk.iter().enumerate() {
            let truth = s
                .label
                .ok_or_else(|| Error::invalid(format!("validation seed {} has no label", s.seed)))?;
            let predicted = z
                .row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0;
            pairs.push((truth.index(), predicted));
        }
        let ce = seed_masked_loss(&mut tape, logits, &batch)?;
        loss += tape.value(ce).data()[0] * chunk.len() as f64;
    }
    Ok((MetricsReport::from_pairs(pairs).macro_f1, loss / set.len() as f64))
}

fn step_loss(model: &mut Model, batch: &GraphBatch, lr: f64, adam: AdamConfig, rng: &mut dyn RngCore) -> Result<f64> {
    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, batch, Some(rng))?;
    let loss = seed_masked_loss(&mut tape, logits, batch)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFiniteGradient(format!("loss is {value}")));
    }
    model.params.zero_grad();
    tape.backward_into(loss, &mut model.params)?;
    adam_step(&mut model.params, lr, adam)?;
    Ok(value)
}

/// Mini-batch training with early stopping on validation macro-F1.
///
/// Patience restarts only when macro-F1 strictly improves. The retained
/// weights are those with the best macro-F1, ties going to the lower
/// validation loss, so a plateau reached early does not pin a barely
/// trained checkpoint. `train` is the already-oversampled multiset. Divergence ends the run
/// with a failed status and the best weights seen so far.
pub fn train_model(
    config: &ModelConfig,
    tcfg: &TrainConfig,
    train: &[&EgoSubgraph],
    val: &[&EgoSubgraph],
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let first = train.first().ok_or_else(|| Error::invalid("empty training set"))?;
    if val.is_empty() {
        return Err(Error::invalid("empty validation set"));
    }
    let mut model = Model::new(config.clone(), first.feature_dim, rng::derive_seed(tcfg.seed, &[1]))?;
    let mut dropout_rng = rng::stream(tcfg.seed, &[3]);
    let mut best = model.params.snapshot();
    let (mut best_f1, mut best_loss) = validation_scores(&model, val)?;
    let mut best_epoch = 0;
    let mut last_gain = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut status = RunStatus::MaxEpochs;
    let mut epochs = 0;
    'epochs: for epoch in 1..=tcfg.max_epochs {
        epochs = epoch;
        order.sort_unstable();
        order.shuffle(&mut rng::stream(tcfg.seed, &[2, epoch as u64]));
        let mut total = 0.0;
        for idx in order.chunks(tcfg.batch_size) {
            let subs: Vec<&EgoSubgraph> = idx.iter().map(|&i| train[i]).collect();
            let batch = GraphBatch::from_subgraphs(&subs)?;
            match step_loss(&mut model, &batch, tcfg.learning_rate, tcfg.adam, &mut dropout_rng) {
                Ok(l) => total += l * subs.len() as f64,
                Err(Error::NonFiniteGradient(reason)) => {
                    log::warn!("{} diverged at epoch {epoch}: {reason}", config.label());
                    status = RunStatus::Diverged { epoch, reason };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let (f1, loss) = validation_scores(&model, val)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_macro_f1: f1,
            val_loss: loss,
        });
        if f1 > best_f1 || (f1 == best_f1 && loss < best_loss) {
            if f1 > best_f1 {
                last_gain = epoch;
            }
            best_f1 = f1;
            best_loss = loss;
            best_epoch = epoch;
            best = model.params.snapshot();
        }
        if epoch - last_gain >= tcfg.patience {
            status = RunStatus::EarlyStopped;
            break;
        }
    }
    model.params.load_values(&best)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_macro_f1: best_f1,
        epochs,
        status,
    })
}
