use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{evaluate, train_model, TrainConfig};
use crate::error::{Error, Result};
use crate::graphstore::EgoSubgraph;
use crate::manifold::Curvature;
use crate::models::{Geometry, ModelConfig};

/// Read-only inputs shared by every grid cell.
#[derive(Debug, Clone, Copy)]
pub struct GridData<'a> {
    /// Oversampled training multiset.
    pub train: &'a [&'a EgoSubgraph],
    pub validation: &'a [&'a EgoSubgraph],
    pub test: &'a [&'a EgoSubgraph],
}

/// One training run of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub curvature: Option<f64>,
    pub lr: f64,
    pub seed: u64,
    pub val_macro_f1: f64,
    pub test_macro_f1: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub status: String,
    pub failed: bool,
}

/// Median over seeds of one `(curvature, lr)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub curvature: Option<f64>,
    pub lr: f64,
    pub val_macro_f1: f64,
    pub test_macro_f1: f64,
    pub epochs: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub runs: Vec<CellRun>,
    pub cells: Vec<CellSummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    a.map(f64::to_bits) == b.map(f64::to_bits)
}

impl GridResult {
    /// Distinct curvatures in grid order (`None` for Euclidean runs).
    pub fn curvatures(&self) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> = Vec::new();
        for c in self.cells.iter().map(|c| c.curvature) {
            if !out.iter().any(|o| same(*o, c)) {
                out.push(c);
            }
        }
        out
    }

    /// Validation macro-F1 spread (max minus min over learning rates),
    /// computed per seed and then reduced by the median.
    pub fn spread(&self, curvature: Option<f64>) -> f64 {
        let mut seeds: Vec<u64> = self.runs.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let spreads: Vec<f64> = seeds
            .iter()
            .filter_map(|&s| {
                let f1: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|r| r.seed == s && same(r.curvature, curvature))
                    .map(|r| r.val_macro_f1)
                    .collect();
                let hi = f1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = f1.iter().cloned().fold(f64::INFINITY, f64::min);
                (!f1.is_empty()).then_some(hi - lo)
            })
            .collect();
        median(&spreads)
    }

    /// Best median validation macro-F1 over learning rates.
    pub fn best(&self, curvature: Option<f64>) -> f64 {
        self.cells
            .iter()
            .filter(|c| same(c.curvature, curvature))
            .map(|c| c.val_macro_f1)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trains one independent model per `(curvature, lr, seed)` cell.
///
/// Euclidean configurations sweep learning rate only. Every cell of one
/// seed starts from the same initial weights and batch order, so cells do
/// not depend on execution order. `workers` bounds parallel cells.
pub fn grid_search(
    base: &ModelConfig,
    tcfg: &TrainConfig,
    data: GridData<'_>,
    seeds: &[u64],
    workers: usize,
) -> Result<GridResult> {
    tcfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("grid search needs at least one seed".into()));
    }
    let curvatures: Vec<Option<f64>> = match base.geometry {
        Geometry::Hyperbolic => tcfg.curvature_grid.iter().map(|c| Some(*c)).collect(),
        Geometry::Euclidean => vec![None],
    };
    let mut jobs = Vec::new();
    for &c in &curvatures {
        for &lr in &tcfg.lr_grid {
            for &seed in seeds {
                jobs.push((c, lr, seed));
            }
        }
    }
    let run = |&(c, lr, seed): &(Option<f64>, f64, u64)| -> Result<CellRun> {
        let mut cfg = base.clone();
        cfg.curvature = c.map(Curvature::new).transpose()?;
        let mut t = tcfg.clone();
        t.learning_rate = lr;
        t.seed = seed;
        let out = train_model(&cfg, &t, data.train, data.validation)?;
        let test = evaluate(&out.model, data.test)?;
        log::info!(
            "cell c={c:?} lr={lr} seed={seed}: val {:.4} test {:.4} ({})",
            out.best_val_macro_f1,
            test.macro_f1,
            out.status.label()
        );
        Ok(CellRun {
            curvature: c,
            lr,
            seed,
            val_macro_f1: out.best_val_macro_f1,
            test_macro_f1: test.macro_f1,
            epochs: out.epochs,
            best_epoch: out.best_epoch,
            status: out.status.label(),
            failed: out.status.failed(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let runs: Vec<CellRun> = pool.install(|| jobs.par_iter().map(run).collect::<Result<_>>())?;
    let mut cells = Vec::new();
    for &c in &curvatures {
        for &lr in &tcfg.lr_grid {
            let group: Vec<&CellRun> = runs.iter().filter(|r| same(r.curvature, c) && r.lr == lr).collect();
            let failed = group.iter().filter(|r| r.failed).count();
            let col = |f: fn(&CellRun) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            cells.push(CellSummary {
                curvature: c,
                lr,
                val_macro_f1: col(|r| r.val_macro_f1),
                test_macro_f1: col(|r| r.test_macro_f1),
                epochs: col(|r| r.epochs as f64),
                status: if failed == 0 {
                    "ok".into()
                } else {
                    format!("failed {failed}/{}", group.len())
                },
            });
        }
    }
    Ok(GridResult { runs, cells })
}
