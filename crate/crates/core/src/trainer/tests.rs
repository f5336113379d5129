use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graphstore::{EgoSubgraph, EntityClass};
use crate::models::{Architecture, Geometry, ModelConfig};

/// Star subgraphs whose features carry the class: class 0 lives near
/// (1, 0, .), class 3 near (0, 1, .).
fn toy(n: usize, seed: u64) -> Vec<EgoSubgraph> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = if i % 2 == 0 { EntityClass::Exchange } else { EntityClass::Ponzi };
            let size = 1 + r.random_range(0..5);
            let mut features = Vec::new();
            for _ in 0..size {
                let noise = r.random_range(0.0..0.2);
                match class {
                    EntityClass::Exchange => features.extend([1.0, 0.0, noise]),
                    _ => features.extend([0.0, 1.0, noise]),
                }
            }
            let mut mask = vec![false; size];
            mask[0] = true;
            EgoSubgraph {
                seed: i,
                nodes: (0..size).map(|k| 1000 * i + k).collect(),
                hop: (0..size).map(|k| (k > 0) as u32).collect(),
                edges: (1..size as u32).map(|k| (0, k)).collect(),
                features,
                feature_dim: 3,
                seed_mask: mask,
                label: Some(class),
            }
        })
        .collect()
}

fn small(arch: Architecture, geometry: Geometry) -> ModelConfig {
    ModelConfig::new(arch, geometry, 2).with_hidden(8, 2).with_dropout(0.0)
}

fn tcfg(lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_reaches_low_loss() {
    let data = toy(40, 1);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let mut t = tcfg(0.01);
    t.patience = 199;
    let out = train_model(&small(Architecture::Gcn, Geometry::Euclidean), &t, &refs, &refs).unwrap();
    let last = out.history.last().unwrap();
    assert!(last.train_loss < 0.05, "final loss {}", last.train_loss);
    assert_eq!(evaluate(&out.model, &refs).unwrap().macro_f1, 1.0);
}

#[test]
fn identical_seeds_identical_histories() {
    let data = toy(24, 2);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let cfg = small(Architecture::Sage, Geometry::Hyperbolic).with_dropout(0.1);
    let mut t = tcfg(0.003);
    t.max_epochs = 6;
    t.patience = 5;
    let a = train_model(&cfg, &t, &refs, &refs).unwrap();
    let b = train_model(&cfg, &t, &refs, &refs).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(
        crate::models::layers::Activation::eval().dropout,
        0.0,
    );
    t.seed = 9;
    let c = train_model(&cfg, &t, &refs, &refs).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn patience_stops_a_plateau() {
    let data = toy(20, 3);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    // a vanishing learning rate keeps validation F1 flat
    let mut t = tcfg(1e-12);
    t.max_epochs = 50;
    t.patience = 4;
    let out = train_model(&small(Architecture::Gat, Geometry::Euclidean), &t, &refs, &refs).unwrap();
    assert_eq!(out.status, RunStatus::EarlyStopped);
    // F1 never beats its initial value, so patience runs from epoch 0 even
    // when a later tie with lower validation loss becomes the retained one.
    assert_eq!(out.epochs, 4);
    assert!(out.best_epoch <= out.epochs);
}

#[test]
fn ties_keep_the_lower_validation_loss() {
    let data = toy(20, 5);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let mut t = tcfg(1e-2);
    t.max_epochs = 30;
    t.patience = 10;
    let out = train_model(&small(Architecture::Gcn, Geometry::Euclidean), &t, &refs, &refs).unwrap();
    let best = &out.history[out.best_epoch - 1];
    assert_eq!(best.val_macro_f1, out.best_val_macro_f1);
    for h in &out.history {
        assert!(h.val_macro_f1 <= best.val_macro_f1);
        if h.val_macro_f1 == best.val_macro_f1 {
            assert!(h.val_loss >= best.val_loss);
        }
    }
}

#[test]
fn divergence_is_recorded_not_raised() {
    let data = toy(20, 4);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let mut t = tcfg(1e300);
    t.max_epochs = 5;
    t.patience = 3;
    let out = train_model(&small(Architecture::Gcn, Geometry::Euclidean), &t, &refs, &refs).unwrap();
    assert!(out.status.failed(), "{:?}", out.status);
    assert!(out.model.params.iter().all(|(_, p)| p.value().is_finite()));
}

#[test]
fn evaluation_has_no_side_effects() {
    let data = toy(20, 5);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let model = crate::models::Model::new(small(Architecture::Gat, Geometry::Hyperbolic), 3, 1).unwrap();
    assert_eq!(evaluate(&model, &refs).unwrap(), evaluate(&model, &refs).unwrap());
}

#[test]
fn config_validation() {
    let mut t = TrainConfig::default();
    t.validate().unwrap();
    t.patience = 200;
    assert!(t.validate().is_err());
    let mut t = TrainConfig::default();
    t.lr_grid.clear();
    assert!(t.validate().is_err());
    let mut t = TrainConfig::default();
    t.curvature_grid.push(-1.0);
    assert!(t.validate().is_err());
}

fn quick_grid(workers: usize, lrs: Vec<f64>) -> GridResult {
    let data = toy(16, 6);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let mut t = tcfg(1e-3);
    t.max_epochs = 2;
    t.patience = 1;
    t.lr_grid = lrs;
    let grid = GridData {
        train: &refs,
        validation: &refs,
        test: &refs,
    };
    grid_search(&small(Architecture::Sage, Geometry::Hyperbolic), &t, grid, &[0], workers).unwrap()
}

#[test]
fn grid_cardinality_and_outputs() {
    let g = quick_grid(4, vec![1e-4, 3e-4, 1e-3, 3e-3]);
    assert_eq!(g.cells.len(), 28);
    let csv = String::from_utf8(grid_csv(&g).unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "curvature,lr,val_macro_f1,test_macro_f1,epochs,status");
    assert_eq!(lines.count(), 28);
    let svg = grid_svg(&g, "hyperbolic sage");
    assert!(svg.contains(">learning rate<") && svg.contains(">macro-F1<"));
    assert_eq!(svg.matches("<polyline").count(), 7);
    assert!(svg.contains("c = 1.25"));
    assert!(g.spread(Some(0.1)) >= 0.0);
}

#[test]
fn grid_cells_are_order_independent() {
    let a = quick_grid(1, vec![1e-3, 3e-3]);
    let b = quick_grid(3, vec![3e-3, 1e-3]);
    for run in &a.runs {
        let twin = b
            .runs
            .iter()
            .find(|r| r.lr == run.lr && r.curvature == run.curvature && r.seed == run.seed)
            .unwrap();
        assert_eq!(run, twin);
    }
}

#[test]
fn euclidean_grid_sweeps_lr_only() {
    let data = toy(12, 7);
    let refs: Vec<&EgoSubgraph> = data.iter().collect();
    let mut t = tcfg(1e-3);
    t.max_epochs = 2;
    t.patience = 1;
    let grid = GridData {
        train: &refs,
        validation: &refs,
        test: &refs,
    };
    let g = grid_search(&small(Architecture::Gcn, Geometry::Euclidean), &t, grid, &[0, 1], 2).unwrap();
    assert_eq!(g.cells.len(), 4);
    assert_eq!(g.runs.len(), 8);
    assert!(g.cells.iter().all(|c| c.curvature.is_none()));
}

#[test]
fn metrics_csv_and_report() {
    let report = MetricsReport::from_pairs([(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 5), (6, 0)]);
    let key = RunKey {
        arch: "sage".into(),
        geometry: "hyperbolic".into(),
        layers: 3,
        subgraph_depth: 2,
        curvature: Some(1.25),
        lr: 1e-3,
        seed: 0,
        split: "test".into(),
    };
    let rows = metrics_rows(&key, &report);
    assert_eq!(rows.len(), 8);
    let bytes = metrics_csv(&rows).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "arch,geometry,layers,subgraph_depth,curvature,lr,seed,split,class,precision,recall,f1,macro_f1"
    );
    assert_eq!(read_metrics_csv(&bytes).unwrap(), rows);
    let table = render_report(&rows);
    assert_eq!(table.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| class")).count(), 8);
    assert!(table.contains("| macro |"));
}

#[test]
fn medians() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}
