//! Edge-list ingestion, the binary dataset cache and synthetic
//! planted-partition graphs.
//!
//! Accounts are the distinct source ids of an edge list and each account's
//! neighbour set is the set of destinations it points at. Account ids and
//! neighbour ids share one numeric space, which is what lets the observed
//! account-to-account network be recovered from a [`Dataset`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of an account, i.e. an item that gets a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for AccountId {
    fn from(v: u64) -> Self {
        AccountId(v)
    }
}

/// Identifier of an element of the neighbour universe.
pub type NeighborId = u64;

/// The neighbour set of one account, sorted ascending and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    account: AccountId,
    neighbors: Vec<NeighborId>,
}

impl NeighborSet {
    pub fn new(account: AccountId, neighbors: impl IntoIterator<Item = NeighborId>) -> Self {
        let mut neighbors: Vec<_> = neighbors.into_iter().collect();
        neighbors.sort_unstable();
        neighbors.dedup();
        NeighborSet { account, neighbors }
    }

    pub fn account(&self) -> AccountId {
        self.account
    }

    pub fn neighbors(&self) -> &[NeighborId] {
        &self.neighbors
    }

    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn contains(&self, id: NeighborId) -> bool {
        self.neighbors.binary_search(&id).is_ok()
    }
}

/// Whether an edge list is read as given or symmetrised between accounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    Undirected,
    #[default]
    AsGiven,
}

/// All accounts of a graph with their neighbour sets, ordered by account id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    accounts: Vec<NeighborSet>,
    universe_size: u64,
}

impl Dataset {
    /// Builds a dataset whose universe is just large enough for its ids.
    pub fn new(accounts: Vec<NeighborSet>) -> Result<Self> {
        Self::with_universe(accounts, 0)
    }

    /// Builds a dataset with a universe of at least `universe_size` ids.
    pub fn with_universe(mut accounts: Vec<NeighborSet>, universe_size: u64) -> Result<Self> {
        accounts.sort_by_key(|s| s.account);
        if let Some(w) = accounts.windows(2).find(|w| w[0].account == w[1].account) {
            return Err(Error::invalid(format!("duplicate account {}", w[0].account)));
        }
        let needed = accounts
            .iter()
            .filter_map(|s| s.neighbors.last())
            .max()
            .map_or(0, |&m| m + 1);
        Ok(Dataset {
            accounts,
            universe_size: universe_size.max(needed),
        })
    }

    pub fn accounts(&self) -> &[NeighborSet] {
        &self.accounts
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn universe_size(&self) -> u64 {
        self.universe_size
    }

    /// Mean neighbour-set size over accounts.
    pub fn avg_out_degree(&self) -> f64 {
        if self.accounts.is_empty() {
            return 0.0;
        }
        let total: usize = self.accounts.iter().map(NeighborSet::degree).sum();
        total as f64 / self.accounts.len() as f64
    }

    /// Row index of an account.
    pub fn position(&self, id: AccountId) -> Option<usize> {
        self.accounts.binary_search_by_key(&id, |s| s.account).ok()
    }

    pub fn get(&self, id: AccountId) -> Option<&NeighborSet> {
        self.position(id).map(|i| &self.accounts[i])
    }

    /// Drops accounts whose degree is below `min_degree`.
    pub fn filter_min_degree(self, min_degree: usize) -> Self {
        let universe_size = self.universe_size;
        let accounts = self
            .accounts
            .into_iter()
            .filter(|s| s.degree() >= min_degree)
            .collect();
        Dataset {
            accounts,
            universe_size,
        }
    }

    /// A dataset restricted to the given rows (in the given order, deduplicated by id).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut sets = Vec::with_capacity(rows.len());
        for &r in rows {
            let s = self
                .accounts
                .get(r)
                .ok_or_else(|| Error::invalid(format!("row {r} out of range")))?;
            if seen.insert(s.account) {
                sets.push(s.clone());
            }
        }
        Dataset::with_universe(sets, self.universe_size)
    }
}

/// |N(a) ∩ N(b)| / |N(a) ∪ N(b)|, with J(∅, ∅) = 0.
pub fn exact_jaccard(a: &NeighborSet, b: &NeighborSet) -> f64 {
    sorted_jaccard(&a.neighbors, &b.neighbors)
}

pub(crate) fn sorted_jaccard(a: &[u64], b: &[u64]) -> f64 {
    let inter = sorted_intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub(crate) fn sorted_intersection_len(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

// ---------------------------------------------------------------------------
// Edge lists

/// Loads a `src<TAB>dst` edge list. Accounts with fewer than `min_degree`
/// neighbours are dropped (pass 1 to keep every source).
pub fn load_edge_list(path: impl AsRef<Path>, mode: DirectionMode, min_degree: usize) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_edge_list(BufReader::new(file), mode, min_degree)
}

pub fn parse_edge_list<R: BufRead>(mut reader: R, mode: DirectionMode, min_degree: usize) -> Result<Dataset> {
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut line = String::new();
    let mut lineno = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split('\t').map(str::trim);
        let (src, dst) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(d), None) => (s, d),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected `src<TAB>dst`, got {trimmed:?}"),
                })
            }
        };
        edges.push((parse_id(src, lineno)?, parse_id(dst, lineno)?));
    }
    if edges.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut sets: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(s, d) in &edges {
        sets.entry(s).or_default().push(d);
    }
    if mode == DirectionMode::Undirected {
        for &(s, d) in &edges {
            if let Some(n) = sets.get_mut(&d) {
                n.push(s);
            }
        }
    }
    let accounts = sets
        .into_iter()
        .map(|(a, n)| NeighborSet::new(AccountId(a), n))
        .collect();
    Ok(Dataset::new(accounts)?.filter_min_degree(min_degree))
}

fn parse_id(tok: &str, line: usize) -> Result<u64> {
    tok.parse::<u64>().map_err(|_| Error::Parse {
        line,
        message: format!("invalid id {tok:?}"),
    })
}

/// Writes the dataset back as an edge list, one `account<TAB>neighbour` per line.
pub fn write_edge_list<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for set in &dataset.accounts {
        for &n in &set.neighbors {
            writeln!(w, "{}\t{}", set.account, n)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary cache: magic `GSE1`, universe (u64), count (u64), then per account
// id, degree and the sorted neighbour ids. Little-endian throughout.

const DATASET_MAGIC: &[u8; 4] = b"GSE1";

pub fn write_dataset_cache<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&dataset.universe_size.to_le_bytes())?;
    w.write_all(&(dataset.accounts.len() as u64).to_le_bytes())?;
    for set in &dataset.accounts {
        w.write_all(&set.account.0.to_le_bytes())?;
        w.write_all(&(set.neighbors.len() as u64).to_le_bytes())?;
        for &n in &set.neighbors {
            w.write_all(&n.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_cache<R: Read>(reader: R) -> Result<Dataset> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!("bad dataset magic {magic:?}")));
    }
    let universe = read_u64(&mut r)?;
    let count = read_u64(&mut r)?;
    let mut accounts = Vec::with_capacity(count.min(1 << 24) as usize);
    for _ in 0..count {
        let id = read_u64(&mut r)?;
        let degree = read_u64(&mut r)?;
        let mut neighbors = Vec::with_capacity(degree.min(1 << 24) as usize);
        for _ in 0..degree {
            neighbors.push(read_u64(&mut r)?);
        }
        if neighbors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format(format!("neighbours of account {id} are not strictly sorted")));
        }
        accounts.push(NeighborSet {
            account: AccountId(id),
            neighbors,
        });
    }
    let ds = Dataset::with_universe(accounts, universe)?;
    if ds.universe_size != universe {
        return Err(Error::Format(format!(
            "universe size {universe} smaller than largest neighbour id"
        )));
    }
    Ok(ds)
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

// ---------------------------------------------------------------------------
// Planted partitions

/// Ground-truth communities keyed by tag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub communities: BTreeMap<String, Vec<AccountId>>,
}

impl GroundTruth {
    pub fn get(&self, tag: &str) -> Option<&[AccountId]> {
        self.communities.get(tag).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n_accounts: usize,
    pub n_communities: usize,
    pub universe: u64,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

/// A planted-partition dataset with its labels.
#[derive(Debug, Clone)]
pub struct PlantedPartition {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    /// Community of each dataset row.
    pub labels: Vec<usize>,
}

impl PlantedPartition {
    pub fn community_tag(c: usize) -> String {
        format!("c{c}")
    }
}

/// Generates a planted-partition graph.
///
/// The universe `0..universe` is split into `n_communities` contiguous blocks.
/// Account `i` belongs to community `i % n_communities` and takes a universe id
/// from the front of its community's block, so accounts are also vertices of
/// the graph. Each account includes every element of its own block with
/// probability `p_in` and every other element with probability `p_out`.
pub fn generate_planted_partition(cfg: &PlantedConfig) -> Result<PlantedPartition> {
    let PlantedConfig {
        n_accounts,
        n_communities,
        universe,
        p_in,
        p_out,
        seed,
    } = *cfg;
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::invalid("probabilities must lie in [0, 1]"));
    }
    if p_in <= p_out {
        return Err(Error::invalid(format!("p_in ({p_in}) must exceed p_out ({p_out})")));
    }
    if n_communities == 0 || n_accounts < n_communities {
        return Err(Error::invalid("need at least one account per community"));
    }
    let blocks = block_bounds(universe, n_communities);
    let per_community = n_accounts.div_ceil(n_communities) as u64;
    if blocks.iter().any(|&(lo, hi)| hi - lo < per_community) {
        return Err(Error::invalid(format!(
            "universe {universe} too small for {n_accounts} accounts in {n_communities} communities"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_in = BernoulliRuns::new(p_in)?;
    let sample_out = BernoulliRuns::new(p_out)?;
    let mut sets = Vec::with_capacity(n_accounts);
    let mut labels = Vec::with_capacity(n_accounts);
    for i in 0..n_accounts {
        let c = i % n_communities;
        let (lo, hi) = blocks[c];
        let id = lo + (i / n_communities) as u64;
        let mut neighbors = Vec::new();
        sample_out.extend(&mut rng, 0, lo, &mut neighbors);
        sample_in.extend(&mut rng, lo, hi, &mut neighbors);
        sample_out.extend(&mut rng, hi, universe, &mut neighbors);
        sets.push(NeighborSet {
            account: AccountId(id),
            neighbors,
        });
        labels.push(c);
    }

    // Account ids increase with `i / n_communities` inside each block, so
    // sorting by id keeps labels aligned once we sort them together.
    let mut order: Vec<usize> = (0..n_accounts).collect();
    order.sort_by_key(|&i| sets[i].account);
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let dataset = Dataset::with_universe(sets, universe)?;

    let mut truth = GroundTruth::default();
    for (set, &c) in dataset.accounts.iter().zip(&labels) {
        truth
            .communities
            .entry(PlantedPartition::community_tag(c))
            .or_default()
            .push(set.account);
    }
    Ok(PlantedPartition {
        dataset,
        truth,
        labels,
    })
}

/// Contiguous blocks, remainder spread over the first blocks.
fn block_bounds(universe: u64, n: usize) -> Vec<(u64, u64)> {
    let n64 = n as u64;
    let base = universe / n64;
    let extra = universe % n64;
    let mut out = Vec::with_capacity(n);
    let mut lo = 0;
    for c in 0..n64 {
        let size = base + u64::from(c < extra);
        out.push((lo, lo + size));
        lo += size;
    }
    out
}

/// Samples independent Bernoulli(p) inclusions over a range by geometric
/// skipping, so the cost is proportional to the number of hits.
struct BernoulliRuns {
    p: f64,
    gap: Option<Geometric>,
}

impl BernoulliRuns {
    fn new(p: f64) -> Result<Self> {
        let gap = if p > 0.0 && p < 1.0 {
            Some(Geometric::new(p).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(BernoulliRuns { p, gap })
    }

    fn extend<R: Rng>(&self, rng: &mut R, lo: u64, hi: u64, out: &mut Vec<u64>) {
        if lo >= hi || self.p <= 0.0 {
            return;
        }
        let Some(gap) = &self.gap else {
            out.extend(lo..hi);
            return;
        };
        let mut x = lo;
        loop {
            let skip = gap.sample(rng);
            x = match x.checked_add(skip) {
                Some(v) if v < hi => v,
                _ => break,
            };
            out.push(x);
            x += 1;
        }
    }
}
