use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featpipe::DEFAULT_VALUE_FEATURES;
use crate::graphstore::FanoutSpec;
use crate::models::{Architecture, Geometry, ModelConfig};
use crate::rng;
use crate::synthgen::SynthSpec;
use crate::trainer::TrainConfig;

/// Input graph files. Unset paths default to the graph written by `synth`
/// under `<out>/data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Optional `date,usd_per_btc` table for value conversion.
    pub rates: Option<PathBuf>,
    pub value_features: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            edges: None,
            features: None,
            labels: None,
            rates: None,
            value_features: DEFAULT_VALUE_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub fanouts: FanoutSpec,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            fanouts: FanoutSpec::depth2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthPreset {
    Branching,
    Separable,
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub preset: SynthPreset,
    pub seeds_per_class: usize,
    pub depth: usize,
    /// Mean branching of the `tree` preset.
    pub branching: usize,
    /// Full spec; overrides the preset when present.
    pub spec: Option<SynthSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            preset: SynthPreset::Branching,
            seeds_per_class: 50,
            depth: 2,
            branching: 4,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Replicate indices; each gets its own derived seed.
    pub replicates: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { replicates: 3 }
    }
}

/// Everything one pipeline run needs, loaded from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Parallel workers; 0 means one per available core.
    pub workers: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelConfig::new(Architecture::Sage, Geometry::Hyperbolic, 2),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

/// Stream keys under the master seed.
pub(crate) mod keys {
    pub const SYNTH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const OVERSAMPLE: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const GRID: u64 = 6;
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.grid.replicates == 0 {
            return Err(Error::Config("grid.replicates must be positive".into()));
        }
        if self.synth.spec.is_none() && (self.synth.seeds_per_class == 0 || self.synth.depth == 0) {
            return Err(Error::Config("synth.seeds_per_class and synth.depth must be positive".into()));
        }
        if let Some(spec) = &self.synth.spec {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn worker_count(&self) -> usize {
        match self.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    pub fn derived_seed(&self, key: u64) -> u64 {
        rng::derive_seed(self.seed, &[key])
    }

    /// Training seed of the single `train` run.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.derived_seed(keys::TRAIN),
            ..self.train.clone()
        }
    }

    pub fn grid_seeds(&self) -> Vec<u64> {
        (0..self.grid.replicates as u64)
            .map(|r| rng::derive_seed(self.seed, &[keys::GRID, r]))
            .collect()
    }

    pub fn synth_spec(&self) -> SynthSpec {
        if let Some(spec) = &self.synth.spec {
            return spec.clone();
        }
        let s = &self.synth;
        let seed = self.derived_seed(keys::SYNTH);
        match s.preset {
            SynthPreset::Branching => SynthSpec::branching(s.seeds_per_class, s.depth, seed),
            SynthPreset::Separable => SynthSpec::separable(s.seeds_per_class, seed),
            SynthPreset::Tree => SynthSpec::tree(s.seeds_per_class, s.depth, s.branching, seed),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }

    pub fn edges_path(&self) -> PathBuf {
        self.data.edges.clone().unwrap_or_else(|| self.data_dir().join("edges.tsv"))
    }

    pub fn features_path(&self) -> PathBuf {
        self.data.features.clone().unwrap_or_else(|| self.data_dir().join("features.csv"))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.data.labels.clone().unwrap_or_else(|| self.data_dir().join("labels.csv"))
    }

    /// `hyperbolic-sage-2-depth2`
    pub fn run_label(&self) -> String {
        format!("{}-depth{}", self.model.label(), self.sampling.fanouts.depth())
    }
}
