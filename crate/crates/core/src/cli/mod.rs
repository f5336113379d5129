//! Command-line front end: synth, sample, normalize, train, eval, grid and
//! report over one output tree.
//!
//! Errors are printed to stderr as one JSON line
//! (`{"error":{"kind":..,"message":..}}`) followed by a plain-text line.
//! Exit status is 2 for configuration and usage errors, 1 otherwise.

mod config;
mod manifest;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{DataConfig, GridConfig, RunConfig, SamplingConfig, SynthConfig, SynthPreset};
pub use manifest::{FileDigest, RunManifest};

use crate::error::{Error, Result};
use crate::featpipe::Split;

#[derive(Debug, Parser)]
#[command(name = "geognn", version, about = "Euclidean and hyperbolic GNN pipeline for transaction graphs")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parallel workers (0 = all cores). Overrides the config.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed. Overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled transaction graph into <out>/data.
    Synth {
        /// Preset to use instead of the configured one.
        #[arg(long, value_enum)]
        preset: Option<SynthPreset>,
    },
    /// Split labeled seeds and sample one ego subgraph per seed.
    Sample,
    /// Fit normalization on the train split and apply it to every split.
    Normalize {
        /// Split to fit on; anything but `train` is refused.
        #[arg(long, default_value = "train", value_parser = parse_split)]
        fit_on: Split,
    },
    /// Train the configured model and write checkpoint and metrics.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval {
        /// Checkpoint path; defaults to the configured model's checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Run the curvature x learning-rate grid.
    Grid,
    /// Render per-class tables from metrics CSVs.
    Report {
        /// Metrics files; defaults to every *.metrics.csv under <out>/metrics.
        inputs: Vec<PathBuf>,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse::<Split>().map_err(|e| e.to_string())
}

impl Cli {
    /// Loads the config file and applies flag overrides, then validates.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.common.seed {
            config.seed = s;
        }
        if let Some(w) = self.common.workers {
            config.workers = w;
        }
        if let Some(o) = &self.common.out {
            config.out = o.clone();
        }
        if let Command::Synth { preset: Some(p) } = self.command {
            config.synth.preset = p;
            config.synth.spec = None;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Runs one parsed command.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let config = cli.resolve()?;
    match &cli.command {
        Command::Synth { .. } => pipeline::synth(&config),
        Command::Sample => pipeline::sample(&config),
        Command::Normalize { fit_on } => pipeline::normalize(&config, *fit_on),
        Command::Train => pipeline::train(&config),
        Command::Eval { checkpoint, split } => pipeline::eval(&config, checkpoint.as_deref(), *split),
        Command::Grid => pipeline::grid(&config),
        Command::Report { inputs } => {
            let (text, paths) = pipeline::report(&config, inputs)?;
            print!("{text}");
            Ok(paths)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// One-line machine-readable error.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}}).to_string()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let kind = serde_json::json!({"error": {"kind": "usage", "message": e.kind().to_string()}});
            eprintln!("{kind}");
            let _ = e.print();
            return 2;
        }
    };
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
