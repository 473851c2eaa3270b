//! Evaluation: community metrics, the PageRank baseline, recall and the
//! experiment drivers.

pub mod experiments;
pub mod metrics;
pub mod ppr;
pub mod recall;

pub use crate::ingest::GroundTruth;
pub use experiments::{
    estimator_error_experiment, estimator_error_on_pairs, rank_correlation_experiment, recall_experiment, spearman,
    ErrorRow, MethodSummary, RankCorrelation, RecallConfig, RecallMethod, RecallReport, RecallRun,
};
pub use metrics::{
    cohesiveness, community_metrics, conductance, conductance_ratio, density, internal_external_weights,
    separability, weighted_clustering, CommunityMetrics,
};
pub use ppr::{personalized_pagerank, ppr_ranking, PprParams, SparseGraph};
pub use recall::{auc, recall_curve};
