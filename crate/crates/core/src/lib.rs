//! LEAP: edge property prediction from aggregated paths.
//!
//! A pair `(u, v)` is described by the bounded-length simple paths between
//! its endpoints. Each set of equal-length paths is vectorized from node
//! embeddings and reduced by an aggregator; the endpoint vectors and the
//! aggregated blocks feed a small feed-forward network that predicts either
//! link existence or a signed edge weight.

pub mod aggregators;
pub mod baselines;
pub mod config;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod paths;
mod seed;
pub mod split;
pub mod tensor;

pub use aggregators::{AggregatorKind, AggregatorParams, AggregatorWidths, VectorizedPathSet};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use graph::{load_edge_list, Delimiter, Edge, Graph, LoadOptions, NodeId};
pub use model::{LeapModel, ModelConfig, NodeInputs, TrainConfig};
pub use paths::{assemble, enumerate_paths, order_paths, AssemblerConfig, Path, PathSet};
pub use split::{sample_negative_pairs, split_edges, LabeledPairSet, SplitResult, Task};
