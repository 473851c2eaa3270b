//! Query engine shared by the CLI and the HTTP service.
//!
//! An [`Engine`] owns a signature matrix and its band index; both are
//! immutable after construction, so one engine can serve concurrent queries.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::community::{build_weighted_subgraph, walktrap, CommunityMapJson, DEFAULT_EDGE_THRESHOLD, DEFAULT_WALK_LENGTH, MAX_SUBGRAPH_MEMBERS};
use crate::error::Result;
use crate::expansion::{make_stopping_rule, rank_ac, rank_ms, resolve_seeds, Method, RankedAccount, SeedSet, StopKind, StopReason};
use crate::ingest::AccountId;
use crate::lsh::{build_index, BandingConfig, LshIndex};
use crate::sketch::{load_store, SignatureMatrix};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_SEEDS: usize = 1000;
pub const DEFAULT_PREFIX_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    pub kind: StopKind,
    pub value: f64,
}

impl Default for StopSpec {
    fn default() -> Self {
        StopSpec {
            kind: StopKind::FixedCount,
            value: 100.0,
        }
    }
}

fn default_method() -> Method {
    Method::Ms
}

fn default_threshold() -> f64 {
    DEFAULT_EDGE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub seeds: Vec<AccountId>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub community_detection: bool,
    #[serde(default = "default_threshold")]
    pub edge_threshold: f64,
}

impl QueryRequest {
    pub fn new(seeds: Vec<AccountId>) -> Self {
        QueryRequest {
            seeds,
            method: Method::Ms,
            stop: StopSpec::default(),
            community_detection: false,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub lsh_ms: f64,
    pub rank_ms: f64,
    pub community_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub schema_version: u32,
    pub ranked: Vec<RankedAccount>,
    /// Estimated unique-neighbour count after each ranked account.
    pub coverage: Vec<f64>,
    pub stop_reason: StopReason,
    pub candidates: usize,
    pub community: Option<CommunityMapJson>,
    pub timings: Timings,
    pub warnings: Vec<String>,
    pub unindexed_seeds: Vec<AccountId>,
}

/// Client-facing error. `status` is the HTTP status it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestError {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip)]
    pub status: u16,
}

impl RequestError {
    pub fn bad_request(code: &str, message: impl Into<String>, field: Option<&str>) -> Self {
        RequestError {
            code: code.to_string(),
            message: message.into(),
            field: field.map(str::to_string),
            status: 400,
        }
    }

    pub fn too_large(message: impl Into<String>, field: &str) -> Self {
        RequestError {
            code: "too_many_seeds".to_string(),
            message: message.into(),
            field: Some(field.to_string()),
            status: 413,
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        RequestError {
            code: "internal".to_string(),
            message: message.into(),
            field: None,
            status: 500,
        }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{} ({field}): {}", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

impl std::error::Error for RequestError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountSummary {
    pub id: AccountId,
    pub degree: u64,
}

#[derive(Debug)]
pub struct Engine {
    matrix: SignatureMatrix,
    index: LshIndex,
    workers: usize,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Engine {
    pub fn new(matrix: SignatureMatrix, banding: BandingConfig, workers: usize) -> Result<Self> {
        let index = build_index(&matrix, banding, workers)?;
        Ok(Engine { matrix, index, workers })
    }

    /// Loads a signature store and indexes it with [`BandingConfig::for_k`].
    pub fn open(store: impl AsRef<Path>, workers: usize) -> Result<Self> {
        let matrix = load_store(store, None)?;
        let banding = BandingConfig::for_k(matrix.k())?;
        Self::new(matrix, banding, workers)
    }

    pub fn matrix(&self) -> &SignatureMatrix {
        &self.matrix
    }

    pub fn index(&self) -> &LshIndex {
        &self.index
    }

    pub fn query(&self, req: &QueryRequest) -> std::result::Result<QueryResponse, RequestError> {
        if req.seeds.is_empty() {
            return Err(RequestError::bad_request("invalid_request", "at least one seed is required", Some("seeds")));
        }
        if req.seeds.len() > MAX_SEEDS {
            return Err(RequestError::too_large(
                format!("{} seeds given, at most {MAX_SEEDS} allowed", req.seeds.len()),
                "seeds",
            ));
        }
        if !(0.0..=1.0).contains(&req.edge_threshold) {
            return Err(RequestError::bad_request(
                "invalid_request",
                format!("edge_threshold {} is outside [0, 1]", req.edge_threshold),
                Some("edge_threshold"),
            ));
        }
        let stop = make_stopping_rule(req.stop.kind, req.stop.value)
            .map_err(|e| RequestError::bad_request("invalid_request", e.to_string(), Some("stop")))?;
        let seeds = SeedSet::new(req.seeds.iter().copied())
            .map_err(|e| RequestError::bad_request("invalid_request", e.to_string(), Some("seeds")))?;

        let t = Instant::now();
        let resolved = resolve_seeds(&self.matrix, &seeds);
        if resolved.skipped.len() == seeds.len() {
            return Err(RequestError::bad_request(
                "unknown_seeds",
                "none of the seeds is an indexed account",
                Some("seeds"),
            ));
        }
        let pool = self
            .index
            .candidate_rows(&self.matrix, &resolved.rows)
            .map_err(|e| RequestError::internal(e.to_string()))?;
        let lsh_ms = ms_since(t);

        let t = Instant::now();
        let result = match req.method {
            Method::Ms => rank_ms(&self.matrix, &resolved, &pool, stop, self.workers),
            Method::Ac => rank_ac(&self.matrix, &resolved, &pool, stop, self.workers),
        };
        let rank_ms_elapsed = ms_since(t);

        let mut warnings: Vec<String> = resolved
            .skipped
            .iter()
            .map(|id| format!("seed {id} is unknown or has no neighbours"))
            .collect();

        let t = Instant::now();
        let community = if req.community_detection {
            let mut members: Vec<AccountId> = resolved
                .rows
                .iter()
                .filter(|&&r| !self.matrix.is_empty_row(r))
                .map(|&r| self.matrix.id(r))
                .collect();
            let room = MAX_SUBGRAPH_MEMBERS.saturating_sub(members.len());
            if result.ranked.len() > room {
                warnings.push(format!(
                    "community map limited to {MAX_SUBGRAPH_MEMBERS} accounts; {} ranked accounts left out",
                    result.ranked.len() - room
                ));
            }
            members.extend(result.ranked.iter().take(room).map(|r| r.account));
            members.truncate(MAX_SUBGRAPH_MEMBERS);
            let graph = build_weighted_subgraph(&self.matrix, &members, req.edge_threshold, self.workers)
                .map_err(|e| RequestError::internal(e.to_string()))?;
            let map = walktrap(&graph, DEFAULT_WALK_LENGTH).map_err(|e| RequestError::internal(e.to_string()))?;
            Some(map.to_json())
        } else {
            None
        };
        let community_ms = if req.community_detection { ms_since(t) } else { 0.0 };

        Ok(QueryResponse {
            schema_version: SCHEMA_VERSION,
            ranked: result.ranked,
            coverage: result.coverage,
            stop_reason: result.stop_reason,
            candidates: result.candidates,
            community,
            timings: Timings {
                lsh_ms,
                rank_ms: rank_ms_elapsed,
                community_ms,
            },
            warnings,
            unindexed_seeds: resolved.skipped,
        })
    }

    /// Accounts whose decimal id starts with `prefix`, ascending.
    pub fn accounts_with_prefix(&self, prefix: &str, limit: usize) -> Vec<AccountSummary> {
        let mut buf = String::new();
        let mut out = Vec::new();
        for (row, id) in self.matrix.ids().iter().enumerate() {
            if out.len() >= limit {
                break;
            }
            buf.clear();
            use std::fmt::Write;
            let _ = write!(buf, "{}", id.0);
            if buf.starts_with(prefix) {
                out.push(AccountSummary {
                    id: *id,
                    degree: self.matrix.degree(row),
                });
            }
        }
        out
    }
}
