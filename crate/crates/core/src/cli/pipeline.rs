//! Pipeline stages. Each stage reads its inputs from the output tree (or
//! the configured data files), writes atomically, and records a manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::config::{keys, RunConfig};
use super::manifest::{FileDigest, RunManifest};
use crate::error::{Error, Result};
use crate::featpipe::{
    apply_to_cache, build_feature_table, fit_on_cache, oversample_train, stratified_split, RateTable, Split, SplitAssignment,
};
use crate::graphstore::{
    read_cache, sample_all_seeds, write_atomic, write_cache, EgoSubgraph, EntityClass, SubgraphCache,
    TransactionGraph,
};
use crate::models::{load_checkpoint, save_checkpoint, Model};
use crate::rng;
use crate::synthgen;
use crate::trainer::{
    evaluate, grid_csv, grid_runs_csv, grid_search, grid_svg, metrics_csv, metrics_rows, read_metrics_csv,
    render_report, train_model, GridData, MetricsReport, RunKey,
};

/// Paths inside the output tree.
pub struct Layout<'a>(pub &'a Path);

impl Layout<'_> {
    pub fn raw_cache(&self, split: Split) -> PathBuf {
        self.0.join("subgraphs").join(format!("{split}.bin"))
    }

    pub fn norm_cache(&self, split: Split) -> PathBuf {
        self.0.join("subgraphs").join(format!("{split}.norm.bin"))
    }

    pub fn split_file(&self) -> PathBuf {
        self.0.join("subgraphs").join("split.csv")
    }

    pub fn stats(&self) -> PathBuf {
        self.0.join("stats").join("normalization.json")
    }

    pub fn checkpoint(&self, label: &str) -> PathBuf {
        self.0.join("checkpoints").join(format!("{label}.ckpt"))
    }

    pub fn metrics(&self, name: &str) -> PathBuf {
        self.0.join("metrics").join(name)
    }

    pub fn chart(&self, name: &str) -> PathBuf {
        self.0.join("charts").join(name)
    }
}

fn finish(mut manifest: RunManifest<'_>, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    manifest.inputs = inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?;
    manifest.outputs = outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?;
    let mut all = outputs.to_vec();
    all.push(manifest.write()?);
    Ok(all)
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn csv_bytes<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::format("csv", e))?;
    }
    w.into_inner().map_err(|e| Error::format("csv", e))
}

/// Generates the configured synthetic graph into `<out>/data`.
pub fn synth(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let spec = config.synth_spec();
    let generated = synthgen::generate(&spec)?;
    let dir = config.data_dir();
    generated.graph.write_files(&dir)?;
    let outputs = ["edges.tsv", "features.csv", "labels.csv"].map(|f| dir.join(f));
    log::info!(
        "synth: {} nodes, {} edges, {} labeled seeds",
        generated.graph.node_count(),
        generated.graph.edges().len(),
        generated.seeds.len()
    );
    let mut m = RunManifest::new("synth", config);
    m.seeds.push(("synth", spec.seed));
    finish(m, &[], &outputs)
}

fn write_split(path: &Path, assignment: &SplitAssignment) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Row {
        node_id: usize,
        class: EntityClass,
        split: Split,
    }
    let bytes = csv_bytes(
        assignment
            .entries()
            .map(|(node_id, class, split)| Row { node_id, class, split }),
    )?;
    write_atomic(path, &bytes)
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    #[derive(serde::Deserialize)]
    struct Row {
        node_id: usize,
        class: EntityClass,
        split: Split,
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path.display().to_string(), e))?;
    let rows = r
        .deserialize::<Row>()
        .map(|row| {
            row.map(|x| (x.node_id, x.class, x.split))
                .map_err(|e| Error::format(path.display().to_string(), e))
        })
        .collect::<Result<Vec<_>>>()?;
    SplitAssignment::from_entries(rows)
}

/// Loads the graph, derives features, splits the labeled seeds and samples
/// one ego subgraph per seed.
pub fn sample(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut inputs = vec![config.edges_path(), config.features_path(), config.labels_path()];
    let mut graph = TransactionGraph::load(&inputs[0], Some(&inputs[1]), Some(&inputs[2]))?;
    let rates = match &config.data.rates {
        Some(p) => {
            inputs.push(p.clone());
            Some(RateTable::load(p)?)
        }
        None => None,
    };
    let (names, data) = build_feature_table(&graph, rates.as_ref(), &config.data.value_features);
    graph.set_features(names.clone(), data)?;
    let labeled: Vec<(usize, EntityClass)> = graph
        .labeled_nodes()
        .into_iter()
        .map(|v| (v, graph.label(v).expect("labeled")))
        .collect();
    if labeled.is_empty() {
        return Err(Error::invalid("the graph has no labeled nodes"));
    }
    let split_seed = config.derived_seed(keys::SPLIT);
    let sample_seed = config.derived_seed(keys::SAMPLE);
    let assignment = stratified_split(&labeled, split_seed);
    let layout = Layout(&config.out);
    let pool = pool(config)?;
    let mut outputs = Vec::new();
    for split in Split::ALL {
        let seeds = assignment.seeds(split);
        let subgraphs = pool.install(|| sample_all_seeds(&graph, &seeds, &config.sampling.fanouts, sample_seed))?;
        let largest = subgraphs.iter().map(EgoSubgraph::len).max().unwrap_or(0);
        log::info!("sample: {split}: {} subgraphs, largest {largest} nodes", subgraphs.len());
        let path = layout.raw_cache(split);
        write_cache(
            &path,
            &SubgraphCache {
                feature_names: names.clone(),
                subgraphs,
            },
        )?;
        outputs.push(path);
    }
    let split_path = layout.split_file();
    write_split(&split_path, &assignment)?;
    outputs.push(split_path);
    let mut m = RunManifest::new("sample", config);
    m.seeds.extend([("split", split_seed), ("sample", sample_seed)]);
    finish(m, &inputs, &outputs)
}

/// Fits normalization on the train cache and applies it to every split.
///
/// Fitting on any other split is refused, as is a train cache containing
/// seeds that the split file places elsewhere.
pub fn normalize(config: &RunConfig, fit_on: Split) -> Result<Vec<PathBuf>> {
    if fit_on != Split::Train {
        return Err(Error::Config(format!(
            "normalization statistics may only be fit on the train split, not {fit_on}"
        )));
    }
    let layout = Layout(&config.out);
    let split_path = layout.split_file();
    let assignment = read_split(&split_path)?;
    let train_path = layout.raw_cache(Split::Train);
    let train = read_cache(&train_path)?;
    if let Some(s) = train
        .subgraphs
        .iter()
        .find(|s| assignment.split_of(s.seed) != Some(Split::Train))
    {
        return Err(Error::invalid(format!(
            "train cache contains seed {} which is not a train seed; refusing to fit",
            s.seed
        )));
    }
    let stats = fit_on_cache(&train, &config.data.value_features)?;
    let stats_path = layout.stats();
    stats.save(&stats_path)?;
    let mut inputs = vec![split_path];
    let mut outputs = vec![stats_path];
    for split in Split::ALL {
        let src = layout.raw_cache(split);
        let cache = if split == Split::Train { train.clone() } else { read_cache(&src)? };
        let (normalized, report) = apply_to_cache(&cache, &stats)?;
        if report.negatives > 0 {
            log::warn!("normalize: {split}: {} negative values clamped", report.negatives);
        }
        let dst = layout.norm_cache(split);
        write_cache(&dst, &normalized)?;
        inputs.push(src);
        outputs.push(dst);
    }
    finish(RunManifest::new("normalize", config), &inputs, &outputs)
}

/// Normalized caches plus the split file, as used by training.
struct Prepared {
    train: SubgraphCache,
    validation: SubgraphCache,
    test: SubgraphCache,
    assignment: SplitAssignment,
    inputs: Vec<PathBuf>,
}

impl Prepared {
    fn load(config: &RunConfig) -> Result<Self> {
        let layout = Layout(&config.out);
        let load = |split| {
            let p = layout.norm_cache(split);
            if !p.exists() {
                return Err(Error::Config(format!(
                    "{} not found; run `sample` and `normalize` first",
                    p.display()
                )));
            }
            read_cache(&p)
        };
        Ok(Self {
            train: load(Split::Train)?,
            validation: load(Split::Validation)?,
            test: load(Split::Test)?,
            assignment: read_split(&layout.split_file())?,
            inputs: Split::ALL
                .iter()
                .map(|&s| layout.norm_cache(s))
                .chain([layout.split_file()])
                .collect(),
        })
    }

    /// Oversampled training multiset as references into the train cache.
    fn oversampled(&self, config: &RunConfig) -> Result<Vec<&EgoSubgraph>> {
        let index: HashMap<usize, &EgoSubgraph> = self.train.subgraphs.iter().map(|s| (s.seed, s)).collect();
        let mut r = rng::stream(config.derived_seed(keys::OVERSAMPLE), &[]);
        let set = oversample_train(&self.assignment, config.train.oversample_target, &mut r)?;
        set.entries
            .iter()
            .map(|n| {
                index
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("train seed {n} missing from the train cache")))
            })
            .collect()
    }
}

fn run_key(config: &RunConfig, model: &Model, lr: f64, split: Split) -> RunKey {
    RunKey {
        arch: model.config.architecture.to_string(),
        geometry: model.config.geometry.to_string(),
        layers: model.config.layers,
        subgraph_depth: config.sampling.fanouts.depth(),
        curvature: model.config.curvature.map(|c| c.value()),
        lr,
        seed: config.seed,
        split: split.to_string(),
    }
}

fn report_line(label: &str, split: Split, report: &MetricsReport) {
    log::info!(
        "{label} {split}: macro-F1 {:.4}, accuracy {:.4}",
        report.macro_f1,
        report.accuracy
    );
}

/// Trains the configured model, keeping the best-validation weights.
pub fn train(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = Prepared::load(config)?;
    let train_set = data.oversampled(config)?;
    let validation: Vec<&EgoSubgraph> = data.validation.subgraphs.iter().collect();
    let test: Vec<&EgoSubgraph> = data.test.subgraphs.iter().collect();
    let tcfg = config.train_config();
    let label = config.run_label();
    let outcome = pool(config)?.install(|| train_model(&config.model, &tcfg, &train_set, &validation))?;
    log::info!(
        "train {label}: {} epochs, best epoch {}, validation macro-F1 {:.4} ({})",
        outcome.epochs,
        outcome.best_epoch,
        outcome.best_val_macro_f1,
        outcome.status.label()
    );
    let layout = Layout(&config.out);
    let ckpt = layout.checkpoint(&label);
    save_checkpoint(&outcome.model, &ckpt)?;
    let mut rows = Vec::new();
    for (split, set) in [(Split::Validation, &validation), (Split::Test, &test)] {
        let report = evaluate(&outcome.model, set)?;
        report_line(&label, split, &report);
        rows.extend(metrics_rows(&run_key(config, &outcome.model, tcfg.learning_rate, split), &report));
    }
    let metrics = layout.metrics(&format!("{label}.metrics.csv"));
    write_atomic(&metrics, &metrics_csv(&rows)?)?;
    let history = layout.metrics(&format!("{label}.history.csv"));
    write_atomic(&history, &csv_bytes(&outcome.history)?)?;
    let mut m = RunManifest::new("train", config);
    m.seeds.extend([
        ("oversample", config.derived_seed(keys::OVERSAMPLE)),
        ("train", tcfg.seed),
    ]);
    finish(m, &data.inputs, &[ckpt, metrics, history])
}

/// Scores a checkpoint on one split.
pub fn eval(config: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<Vec<PathBuf>> {
    let layout = Layout(&config.out);
    let ckpt = checkpoint.map_or_else(|| layout.checkpoint(&config.run_label()), Path::to_path_buf);
    let model = load_checkpoint(&ckpt)?;
    let cache_path = layout.norm_cache(split);
    let cache = read_cache(&cache_path)?;
    if cache.feature_names.len() != model.input_dim {
        return Err(Error::invalid(format!(
            "checkpoint expects {} features, cache has {}",
            model.input_dim,
            cache.feature_names.len()
        )));
    }
    let set: Vec<&EgoSubgraph> = cache.subgraphs.iter().collect();
    let report = evaluate(&model, &set)?;
    let stem = ckpt.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    report_line(&stem, split, &report);
    let rows = metrics_rows(&run_key(config, &model, config.train.learning_rate, split), &report);
    let out = layout.metrics(&format!("{stem}.eval-{split}.metrics.csv"));
    write_atomic(&out, &metrics_csv(&rows)?)?;
    let name = format!("eval-{stem}-{split}");
    finish(RunManifest::new(&name, config), &[ckpt, cache_path], &[out])
}

/// Curvature x learning-rate study over replicate seeds.
pub fn grid(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = Prepared::load(config)?;
    let train_set = data.oversampled(config)?;
    let validation: Vec<&EgoSubgraph> = data.validation.subgraphs.iter().collect();
    let test: Vec<&EgoSubgraph> = data.test.subgraphs.iter().collect();
    let seeds = config.grid_seeds();
    let result = grid_search(
        &config.model,
        &config.train,
        GridData {
            train: &train_set,
            validation: &validation,
            test: &test,
        },
        &seeds,
        config.worker_count(),
    )?;
    for c in result.curvatures() {
        log::info!(
            "grid c={}: best median validation macro-F1 {:.4}, lr spread {:.4}",
            c.map_or("-".into(), |c| c.to_string()),
            result.best(c),
            result.spread(c)
        );
    }
    let label = config.run_label();
    let layout = Layout(&config.out);
    let summary = layout.metrics(&format!("grid-{label}.csv"));
    write_atomic(&summary, &grid_csv(&result)?)?;
    let runs = layout.metrics(&format!("grid-{label}.runs.csv"));
    write_atomic(&runs, &grid_runs_csv(&result)?)?;
    let chart = layout.chart(&format!("grid-{label}.svg"));
    write_atomic(&chart, grid_svg(&result, &label).as_bytes())?;
    let mut m = RunManifest::new("grid", config);
    m.seeds.push(("oversample", config.derived_seed(keys::OVERSAMPLE)));
    m.seeds.extend(seeds.iter().map(|&s| ("replicate", s)));
    finish(m, &data.inputs, &[summary, runs, chart])
}

/// Every `*.metrics.csv` under `<out>/metrics`, sorted by name.
pub fn metrics_files(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = config.out.join("metrics");
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.to_str().is_some_and(|p| p.ends_with(".metrics.csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Per-class tables from metrics CSVs into `<out>/metrics/report.md`.
pub fn report(config: &RunConfig, inputs: &[PathBuf]) -> Result<(String, Vec<PathBuf>)> {
    let inputs = if inputs.is_empty() { metrics_files(config)? } else { inputs.to_vec() };
    if inputs.is_empty() {
        return Err(Error::Config("no metrics files to report on".into()));
    }
    let mut rows = Vec::new();
    for p in &inputs {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        rows.extend(read_metrics_csv(&bytes)?);
    }
    let text = render_report(&rows);
    let out = Layout(&config.out).metrics("report.md");
    write_atomic(&out, text.as_bytes())?;
    let paths = finish(RunManifest::new("report", config), &inputs, &[out])?;
    Ok((text, paths))
}

