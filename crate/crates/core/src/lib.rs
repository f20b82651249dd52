//! Simulation library for fairness-aware federated learning on overlapping
//! client subgraphs.
//!
//! Clients hold overlapping pieces of one graph, train a two-layer GCN
//! locally, and upload LDP-sanitized mini-batches. The server estimates how
//! much each pair of clients overlaps and down-weights heavily overlapping
//! clients when aggregating, with an extra pull toward the worst-off client.

pub mod error;
pub mod estimator;
pub mod federation;
pub mod gcn;
pub mod graph;
pub mod ldp;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
pub use estimator::{EstimatorMode, MatchResult, OverlapState, RoundEstimates};
pub use federation::{
    run_experiment, Algorithm, ClientReport, ExperimentConfig, ExperimentOutput, FedConfig, LdpConfig,
};
pub use gcn::{GcnModel, GradientSet, NormalizedAdjacency};
pub use graph::{Adjacency, ClientSubgraph, GlobalGraph, OverlapProfile, PartitionSpec, SbmParams};
pub use ldp::{Encoder, LdpParams, LinkMatrix, PermanentCache, SanitizedBatch};
pub use metrics::RoundRecord;
