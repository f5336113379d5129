//! Directed transaction graphs, their file formats, and fixed fan-out ego
//! sampling around labeled seeds.

mod cache;
mod graph;
mod sample;

pub use cache::{read_cache, write_cache, SubgraphCache, CACHE_VERSION};
pub use graph::{write_atomic, EntityClass, TransactionGraph};
pub use sample::{sample_all_seeds, sample_ego, EgoSubgraph, FanoutSpec};
