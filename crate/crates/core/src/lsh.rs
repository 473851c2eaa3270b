//! Banded LSH over minhash signatures.
//!
//! A signature is cut into `bands` consecutive groups of `rows` values. Two
//! accounts become candidates for one another when any whole band matches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AccountId;
use crate::par;
use crate::sketch::SignatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandingConfig {
    pub bands: usize,
    pub rows: usize,
}

impl Default for BandingConfig {
    fn default() -> Self {
        BandingConfig { bands: 500, rows: 2 }
    }
}

impl BandingConfig {
    pub fn new(bands: usize, rows: usize) -> Result<Self> {
        if bands == 0 || rows == 0 {
            return Err(Error::invalid("bands and rows must both be at least 1"));
        }
        Ok(BandingConfig { bands, rows })
    }

    /// Two-row bands over as much of a k-hash signature as the default
    /// 500 bands cover; signatures shorter than 2 get one single-row band.
    pub fn for_k(k: usize) -> Result<Self> {
        match k {
            0 => Err(Error::invalid("signature length must be at least 1")),
            1 => Ok(BandingConfig { bands: 1, rows: 1 }),
            _ => Ok(BandingConfig {
                bands: (k / 2).min(Self::default().bands),
                rows: 2,
            }),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.bands == 0 || self.rows == 0 {
            return Err(Error::invalid("bands and rows must both be at least 1"));
        }
        if self.bands.saturating_mul(self.rows) > k {
            return Err(Error::invalid(format!(
                "{} bands × {} rows exceeds signature length {k}",
                self.bands, self.rows
            )));
        }
        Ok(())
    }

    /// Probability that two signatures agreeing in a fraction `s` of
    /// positions share at least one band: 1 − (1 − s^r)^b.
    pub fn collision_probability(&self, s: f64) -> f64 {
        1.0 - (1.0 - s.powi(self.rows as i32)).powi(self.bands as i32)
    }
}

/// 64-bit key of one band.
pub fn band_key(values: &[u64]) -> u64 {
    values.iter().fold(0x243f_6a88_85a3_08d3, |h, &v| mix64(h ^ v))
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finaliser
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keys and matrix rows of one band, sorted by (key, row).
#[derive(Debug, Clone, Default)]
struct BandTable {
    keys: Vec<u64>,
    rows: Vec<u32>,
}

impl BandTable {
    fn bucket(&self, key: u64) -> &[u32] {
        let lo = self.keys.partition_point(|&k| k < key);
        let hi = lo + self.keys[lo..].partition_point(|&k| k == key);
        &self.rows[lo..hi]
    }
}

/// Immutable band index over the rows of a [`SignatureMatrix`].
#[derive(Debug, Clone)]
pub struct LshIndex {
    config: BandingConfig,
    k: usize,
    tables: Vec<BandTable>,
    indexed: usize,
}

/// Accounts found by a candidate query plus the seeds that could not be used.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    pub candidates: Vec<AccountId>,
    /// Seeds that are unknown or have an empty neighbourhood.
    pub skipped: Vec<AccountId>,
}

/// Builds the band index. Accounts with empty neighbourhoods are not indexed.
pub fn build_index(matrix: &SignatureMatrix, config: BandingConfig, workers: usize) -> Result<LshIndex> {
    config.validate(matrix.k())?;
    if matrix.len() > u32::MAX as usize {
        return Err(Error::invalid("too many accounts for a 32-bit row index"));
    }
    let live: Vec<u32> = (0..matrix.len())
        .filter(|&r| !matrix.is_empty_row(r))
        .map(|r| r as u32)
        .collect();
    let r = config.rows;
    let tables = par::map_range(config.bands, workers, |band| {
        let mut pairs: Vec<(u64, u32)> = live
            .iter()
            .map(|&row| {
                let v = matrix.row(row as usize);
                (band_key(&v[band * r..band * r + r]), row)
            })
            .collect();
        pairs.sort_unstable();
        BandTable {
            keys: pairs.iter().map(|p| p.0).collect(),
            rows: pairs.iter().map(|p| p.1).collect(),
        }
    });
    Ok(LshIndex {
        config,
        k: matrix.k(),
        tables,
        indexed: live.len(),
    })
}

impl LshIndex {
    pub fn config(&self) -> BandingConfig {
        self.config
    }

    /// Number of indexed (non-empty) accounts.
    pub fn indexed(&self) -> usize {
        self.indexed
    }

    pub fn bucket(&self, band: usize, key: u64) -> Vec<usize> {
        self.tables[band].bucket(key).iter().map(|&r| r as usize).collect()
    }

    fn check_matrix(&self, matrix: &SignatureMatrix) -> Result<()> {
        if matrix.k() != self.k {
            return Err(Error::IncompatibleSignature(format!(
                "index built for k = {}, matrix has k = {}",
                self.k,
                matrix.k()
            )));
        }
        Ok(())
    }

    /// Rows sharing at least one band with any of `seed_rows`, ascending,
    /// seeds excluded. Empty seed rows contribute nothing.
    pub fn candidate_rows(&self, matrix: &SignatureMatrix, seed_rows: &[usize]) -> Result<Vec<usize>> {
        self.check_matrix(matrix)?;
        let mut seen = vec![false; matrix.len()];
        for &s in seed_rows {
            seen[s] = true;
        }
        let r = self.config.rows;
        let mut out = Vec::new();
        for &s in seed_rows {
            if matrix.is_empty_row(s) {
                continue;
            }
            let v = matrix.row(s);
            for (band, table) in self.tables.iter().enumerate() {
                for &row in table.bucket(band_key(&v[band * r..band * r + r])) {
                    let row = row as usize;
                    if !seen[row] {
                        seen[row] = true;
                        out.push(row);
                    }
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Union over seeds of the accounts sharing a band with that seed.
    pub fn query_candidates(&self, matrix: &SignatureMatrix, seeds: &[AccountId]) -> Result<CandidateSet> {
        if seeds.is_empty() {
            return Err(Error::invalid("empty seed list"));
        }
        let mut rows = Vec::with_capacity(seeds.len());
        let mut skipped = Vec::new();
        for &id in seeds {
            match matrix.position(id) {
                Some(row) if !matrix.is_empty_row(row) => rows.push(row),
                _ => skipped.push(id),
            }
        }
        // Unindexed-but-known seeds are still excluded from the candidates.
        let known: Vec<usize> = seeds.iter().filter_map(|&id| matrix.position(id)).collect();
        let mut candidates = self.candidate_rows(matrix, &rows)?;
        candidates.retain(|r| !known.contains(r));
        Ok(CandidateSet {
            candidates: candidates.into_iter().map(|r| matrix.id(r)).collect(),
            skipped,
        })
    }
}
