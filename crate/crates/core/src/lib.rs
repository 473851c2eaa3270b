//! Neighbourhood sketching and real-time local community detection.
//!
//! Every account in a large graph is compressed into a fixed-length minhash
//! signature of its neighbour set. Signatures are indexed with banded LSH so
//! that a handful of seed accounts can be expanded into a ranked community
//! (by fixed-centre or agglomerative ranking), and the expanded set can be
//! partitioned with Walktrap on the estimated Jaccard similarity graph.
//!
//! The pipeline, bottom up:
//!
//! * [`ingest`]: edge lists, the binary dataset cache, planted-partition data.
//! * [`sketch`]: hash families, signatures, Jaccard estimates and coverage.
//! * [`lsh`]: banded candidate index.
//! * [`expansion`]: MS / AC ranking and stopping rules.
//! * [`community`]: weighted similarity subgraph, Walktrap, modularity.
//! * [`eval`]: goodness metrics, personalised PageRank baseline, recall/AUC
//!   and the estimator experiments.
//! * [`engine`]: request/response types shared by the CLI and HTTP service.

pub mod community;
pub mod engine;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod ingest;
pub mod lsh;
mod par;
pub mod sketch;

pub use error::{Error, Result};
pub use ingest::{AccountId, Dataset, NeighborSet};
pub use sketch::{HashFamily, Signature, SignatureMatrix};
pub use par::available_workers;
