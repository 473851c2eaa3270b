//! Seed expansion: rank LSH candidates against the whole seed set.
//!
//! Distances are Jaccard distances `D = 1 − Ĵ`. Minhash Similarity (MS) keeps
//! the centre fixed at the mean distance to the seeds; Agglomerative
//! Clustering (AC) grows the reference set with every selected account and
//! updates each candidate's mean distance online. Ties go to the smaller
//! account id.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AccountId;
use crate::lsh::LshIndex;
use crate::par;
use crate::sketch::{CoverageTracker, SignatureMatrix};

/// Nonempty, duplicate-free list of seed accounts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet(Vec<AccountId>);

impl SeedSet {
    /// Duplicates are dropped, keeping first occurrences.
    pub fn new(seeds: impl IntoIterator<Item = AccountId>) -> Result<Self> {
        let mut out: Vec<AccountId> = Vec::new();
        for s in seeds {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("seed set is empty"));
        }
        Ok(SeedSet(out))
    }

    pub fn as_slice(&self) -> &[AccountId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: AccountId) -> bool {
        self.0.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ms,
    Ac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    FixedCount,
    CoverageThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Stop after this many additions.
    FixedCount(usize),
    /// Stop once the estimated unique-neighbour count reaches this value.
    Coverage(f64),
}

pub fn make_stopping_rule(kind: StopKind, value: f64) -> Result<StoppingRule> {
    match kind {
        StopKind::FixedCount => {
            if value.is_nan() || value < 1.0 || value.fract() != 0.0 {
                return Err(Error::invalid(format!("fixed count must be a positive integer, got {value}")));
            }
            Ok(StoppingRule::FixedCount(value as usize))
        }
        StopKind::CoverageThreshold => {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::invalid(format!("coverage threshold must be positive, got {value}")));
            }
            Ok(StoppingRule::Coverage(value))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CountReached,
    CoverageReached,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedAccount {
    pub account: AccountId,
    /// Mean Jaccard distance to the reference set when selected.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub ranked: Vec<RankedAccount>,
    /// Estimated unique-neighbour count after each addition.
    pub coverage: Vec<f64>,
    pub stop_reason: StopReason,
    /// Seeds that were unknown or had no neighbours.
    pub skipped_seeds: Vec<AccountId>,
    /// Size of the candidate pool before ranking.
    pub candidates: usize,
}

impl ExpansionResult {
    pub fn accounts(&self) -> Vec<AccountId> {
        self.ranked.iter().map(|r| r.account).collect()
    }
}

/// Seeds resolved against a matrix.
#[derive(Debug, Clone)]
pub struct ResolvedSeeds {
    /// Rows of seeds known to the matrix (empty neighbourhoods included).
    pub rows: Vec<usize>,
    /// Seeds that are unknown or have an empty neighbourhood.
    pub skipped: Vec<AccountId>,
}

pub fn resolve_seeds(matrix: &SignatureMatrix, seeds: &SeedSet) -> ResolvedSeeds {
    let mut rows = Vec::with_capacity(seeds.len());
    let mut skipped = Vec::new();
    for &id in seeds.as_slice() {
        match matrix.position(id) {
            Some(row) => {
                rows.push(row);
                if matrix.is_empty_row(row) {
                    skipped.push(id);
                }
            }
            None => skipped.push(id),
        }
    }
    ResolvedSeeds { rows, skipped }
}

/// Sum over `seed_rows` of signature agreements with `row`.
fn seed_matches(matrix: &SignatureMatrix, row: usize, seed_rows: &[usize]) -> usize {
    seed_rows.iter().map(|&s| matrix.matches(row, s)).sum()
}

fn mean_distance(total_matches: usize, refs: usize, k: usize) -> f64 {
    if refs == 0 {
        return 1.0;
    }
    1.0 - total_matches as f64 / (refs * k) as f64
}

/// Minhash Similarity over LSH candidates.
pub fn expand_ms(
    index: &LshIndex,
    matrix: &SignatureMatrix,
    seeds: &SeedSet,
    stop: StoppingRule,
    workers: usize,
) -> Result<ExpansionResult> {
    let resolved = resolve_seeds(matrix, seeds);
    let pool = index.candidate_rows(matrix, &resolved.rows)?;
    Ok(rank_ms(matrix, &resolved, &pool, stop, workers))
}

/// Minhash Similarity over an explicit candidate pool (e.g. every row).
pub fn rank_ms(
    matrix: &SignatureMatrix,
    seeds: &ResolvedSeeds,
    pool: &[usize],
    stop: StoppingRule,
    workers: usize,
) -> ExpansionResult {
    let pool: Vec<usize> = pool.iter().copied().filter(|r| !seeds.rows.contains(r)).collect();
    let k = matrix.k();
    let n = seeds.rows.len();
    let mut scored: Vec<(usize, usize)> = par::map_range(pool.len(), workers, |i| {
        (pool[i], seed_matches(matrix, pool[i], &seeds.rows))
    });
    // Rows are in ascending id order, so the row breaks ties by id.
    scored.sort_unstable_by_key(|&(row, m)| (Reverse(m), row));
    let mut it = scored.into_iter();
    let (ranked, coverage, stop_reason) = run_until(matrix, stop, || {
        it.next().map(|(row, m)| (row, mean_distance(m, n, k)))
    });
    ExpansionResult {
        ranked,
        coverage,
        stop_reason,
        skipped_seeds: seeds.skipped.clone(),
        candidates: pool.len(),
    }
}

/// Agglomerative Clustering over LSH candidates. The candidate pool is fixed
/// by the initial query on the seeds.
pub fn expand_ac(
    index: &LshIndex,
    matrix: &SignatureMatrix,
    seeds: &SeedSet,
    stop: StoppingRule,
    workers: usize,
) -> Result<ExpansionResult> {
    let resolved = resolve_seeds(matrix, seeds);
    let pool = index.candidate_rows(matrix, &resolved.rows)?;
    Ok(rank_ac(matrix, &resolved, &pool, stop, workers))
}

pub fn rank_ac(
    matrix: &SignatureMatrix,
    seeds: &ResolvedSeeds,
    pool: &[usize],
    stop: StoppingRule,
    workers: usize,
) -> ExpansionResult {
    let mut ac = AgglomerativeExpansion::new(matrix, &seeds.rows, pool, workers);
    let candidates = ac.remaining();
    let (ranked, coverage, stop_reason) = run_until(matrix, stop, || ac.step());
    ExpansionResult {
        ranked,
        coverage,
        stop_reason,
        skipped_seeds: seeds.skipped.clone(),
        candidates,
    }
}

pub fn expand(
    method: Method,
    index: &LshIndex,
    matrix: &SignatureMatrix,
    seeds: &SeedSet,
    stop: StoppingRule,
    workers: usize,
) -> Result<ExpansionResult> {
    match method {
        Method::Ms => expand_ms(index, matrix, seeds, stop, workers),
        Method::Ac => expand_ac(index, matrix, seeds, stop, workers),
    }
}

/// Pulls `(row, distance)` selections until the stopping rule fires.
fn run_until(
    matrix: &SignatureMatrix,
    stop: StoppingRule,
    mut next: impl FnMut() -> Option<(usize, f64)>,
) -> (Vec<RankedAccount>, Vec<f64>, StopReason) {
    let mut ranked = Vec::new();
    let mut coverage = Vec::new();
    let mut tracker = CoverageTracker::new(matrix.k());
    loop {
        match stop {
            StoppingRule::FixedCount(m) if ranked.len() >= m => {
                return (ranked, coverage, StopReason::CountReached)
            }
            StoppingRule::Coverage(y) if coverage.last().is_some_and(|&c| c >= y) => {
                return (ranked, coverage, StopReason::CoverageReached)
            }
            _ => {}
        }
        let Some((row, distance)) = next() else {
            return (ranked, coverage, StopReason::Exhausted);
        };
        ranked.push(RankedAccount {
            account: matrix.id(row),
            distance,
        });
        coverage.push(tracker.add(matrix.row(row), matrix.degree(row)));
    }
}

/// Step-by-step AC state: the reference set size and each remaining
/// candidate's mean distance to it.
#[derive(Debug, Clone)]
pub struct AgglomerativeExpansion<'a> {
    matrix: &'a SignatureMatrix,
    /// (row, centre distance) of candidates not yet selected.
    pool: Vec<(usize, f64)>,
    reference_size: usize,
    workers: usize,
}

const UPDATE_CHUNK: usize = 512;

impl<'a> AgglomerativeExpansion<'a> {
    pub fn new(matrix: &'a SignatureMatrix, seed_rows: &[usize], pool: &[usize], workers: usize) -> Self {
        let k = matrix.k();
        let rows: Vec<usize> = pool.iter().copied().filter(|r| !seed_rows.contains(r)).collect();
        let pool = par::map_range(rows.len(), workers, |i| {
            (rows[i], mean_distance(seed_matches(matrix, rows[i], seed_rows), seed_rows.len(), k))
        });
        AgglomerativeExpansion {
            matrix,
            pool,
            reference_size: seed_rows.len(),
            workers,
        }
    }

    pub fn remaining(&self) -> usize {
        self.pool.len()
    }

    pub fn reference_size(&self) -> usize {
        self.reference_size
    }

    /// Current (row, mean distance) of every unselected candidate.
    pub fn centres(&self) -> &[(usize, f64)] {
        &self.pool
    }

    /// Selects the closest candidate, folds it into the reference set and
    /// returns it with its distance at selection.
    pub fn step(&mut self) -> Option<(usize, f64)> {
        let best = self
            .pool
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?
            .0;
        let (chosen, distance) = self.pool.swap_remove(best);
        let n = self.reference_size as f64;
        let k = self.matrix.k() as f64;
        let matrix = self.matrix;
        let chosen_row = matrix.row(chosen);
        par::for_each_chunk_mut(&mut self.pool, UPDATE_CHUNK, self.workers, |_, chunk| {
            for (row, x) in chunk.iter_mut() {
                let d = 1.0 - crate::sketch::count_matches(matrix.row(*row), chosen_row) as f64 / k;
                *x = (n * *x + d) / (n + 1.0);
            }
        });
        self.reference_size += 1;
        Some((chosen, distance))
    }
}
