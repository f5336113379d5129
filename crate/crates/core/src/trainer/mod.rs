//! Optimization, evaluation metrics and the curvature x learning-rate grid.

mod adam;
mod grid;
mod metrics;
mod output;
mod train;

#[cfg(test)]
mod tests;

pub use adam::{adam_step, AdamConfig};
pub use grid::{grid_search, median, CellRun, CellSummary, GridData, GridResult};
pub use metrics::{ClassMetrics, MetricsReport};
pub use output::{
    grid_csv, grid_runs_csv, grid_svg, metrics_csv, metrics_rows, read_metrics_csv, render_report, MetricsRow, RunKey,
};
pub use train::{evaluate, train_model, EpochRecord, RunStatus, TrainConfig, TrainOutcome};
