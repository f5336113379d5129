//! Geometry-aware graph neural networks for transaction-graph node
//! classification.
//!
//! The crate bundles everything needed to go from a directed transaction
//! graph to trained Euclidean or tangent-space hyperbolic classifiers:
//!
//! - [`manifold`]: Poincaré-ball and Klein-model maps at the origin.
//! - [`diffcore`]: dense tensors and a reverse-mode tape.
//! - [`graphstore`]: graph ingestion and fixed fan-out ego sampling.
//! - [`featpipe`]: power-law feature normalization, splits, oversampling.
//! - [`models`]: GCN, GraphSAGE and GAT in both geometries.
//! - [`trainer`]: Adam, metrics, early stopping and the curvature/lr grid.
//! - [`synthgen`]: synthetic branching transaction graphs.
//! - [`cli`]: the pipeline front end used by the `geognn` binary.

pub mod cli;
pub mod diffcore;
pub mod error;
pub mod featpipe;
pub mod graphstore;
pub mod manifold;
pub mod models;
pub mod rng;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
