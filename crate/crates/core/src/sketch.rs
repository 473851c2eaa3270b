//! Minhash signatures over neighbour sets.
//!
//! Each of the `k` hash functions is a random affine map
//! `h(x) = (a·x + b) mod p` with `p` prime and `p ≥ universe_size`. On
//! `0..p` such a map is a bijection, so it stands in for a random permutation
//! of the neighbour universe. A signature holds, per function, the minimum
//! hashed value over the account's neighbours; two signatures agree in a
//! position with probability equal to the Jaccard similarity of the sets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{read_u64, AccountId, Dataset};
use crate::par;

/// Value of every position of an empty neighbourhood's signature.
pub const SENTINEL: u64 = u64::MAX;

/// Modular reduction for a fixed prime.
#[derive(Debug, Clone, Copy)]
struct Modulus {
    p: u64,
    /// floor(2^64 / p), used for Barrett reduction when p < 2^32.
    barrett: u64,
}

impl Modulus {
    fn new(p: u64) -> Self {
        let barrett = if p <= u32::MAX as u64 {
            ((1u128 << 64) / p as u128) as u64
        } else {
            0
        };
        Modulus { p, barrett }
    }

    /// (a·x + b) mod p for a, b < p and x < p.
    #[inline(always)]
    fn affine(&self, a: u64, x: u64, b: u64) -> u64 {
        if self.barrett != 0 {
            let n = a * x;
            let q = ((n as u128 * self.barrett as u128) >> 64) as u64;
            let mut r = n - q * self.p;
            if r >= self.p {
                r -= self.p;
            }
            r += b;
            if r >= self.p {
                r -= self.p;
            }
            r
        } else {
            ((a as u128 * x as u128 + b as u128) % self.p as u128) as u64
        }
    }
}

/// Identity of a hash family, carried by every signature built from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamilyTag {
    pub k: usize,
    pub modulus: u64,
    pub master_seed: u64,
}

/// `k` affine hash functions modulo a prime, drawn deterministically from a
/// master seed.
#[derive(Debug, Clone)]
pub struct HashFamily {
    coeffs: Vec<(u64, u64)>,
    modulus: Modulus,
    master_seed: u64,
}

impl HashFamily {
    /// A family whose modulus is the smallest prime `≥ universe_size`.
    pub fn new(k: usize, universe_size: u64, master_seed: u64) -> Result<Self> {
        let p = next_prime(universe_size.max(2))
            .ok_or_else(|| Error::invalid(format!("no 64-bit prime ≥ {universe_size}")))?;
        Self::with_modulus(k, p, master_seed)
    }

    pub fn with_modulus(k: usize, modulus: u64, master_seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("signature length k must be at least 1"));
        }
        if !is_prime(modulus) {
            return Err(Error::invalid(format!("modulus {modulus} is not prime")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        let coeffs = (0..k)
            .map(|_| (rng.random_range(1..modulus), rng.random_range(0..modulus)))
            .collect();
        Ok(HashFamily {
            coeffs,
            modulus: Modulus::new(modulus),
            master_seed,
        })
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn modulus(&self) -> u64 {
        self.modulus.p
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn coefficients(&self) -> &[(u64, u64)] {
        &self.coeffs
    }

    pub fn tag(&self) -> FamilyTag {
        FamilyTag {
            k: self.k(),
            modulus: self.modulus.p,
            master_seed: self.master_seed,
        }
    }

    /// Value of the `i`-th hash function at `x`.
    pub fn hash(&self, i: usize, x: u64) -> u64 {
        let (a, b) = self.coeffs[i];
        self.modulus.affine(a, x % self.modulus.p, b)
    }

    /// Writes the signature of `neighbors` into `out` (length `k`).
    /// Every neighbour id must be below the modulus.
    fn fill(&self, neighbors: &[u64], out: &mut [u64]) {
        out.fill(SENTINEL);
        let m = self.modulus;
        for &x in neighbors {
            for (slot, &(a, b)) in out.iter_mut().zip(&self.coeffs) {
                let h = m.affine(a, x, b);
                if h < *slot {
                    *slot = h;
                }
            }
        }
    }

    /// Signature of an arbitrary set of neighbour ids.
    pub fn signature_of(&self, neighbors: &[u64]) -> Result<Signature> {
        if let Some(&bad) = neighbors.iter().find(|&&x| x >= self.modulus.p) {
            return Err(Error::invalid(format!(
                "neighbour id {bad} outside the hash modulus {}",
                self.modulus.p
            )));
        }
        let mut values = vec![0; self.k()];
        self.fill(neighbors, &mut values);
        let mut degree = neighbors.to_vec();
        degree.sort_unstable();
        degree.dedup();
        Ok(Signature {
            values,
            owner: None,
            degree: Some(degree.len() as u64),
            family: self.tag(),
        })
    }
}

/// A minhash signature, optionally tied to its account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub values: Vec<u64>,
    pub owner: Option<AccountId>,
    pub degree: Option<u64>,
    pub family: FamilyTag,
}

impl Signature {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// True for the all-sentinel signature of an empty neighbourhood.
    pub fn is_empty(&self) -> bool {
        is_empty_row(&self.values)
    }
}

#[inline]
pub(crate) fn is_empty_row(values: &[u64]) -> bool {
    values.first().is_none_or(|&v| v == SENTINEL)
}

/// Number of agreeing positions; empty signatures agree with nothing.
#[inline]
pub(crate) fn count_matches(a: &[u64], b: &[u64]) -> usize {
    if is_empty_row(a) || is_empty_row(b) {
        return 0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Ĵ = matches / k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JaccardEstimate {
    pub value: f64,
    pub matches: usize,
    pub k: usize,
}

impl JaccardEstimate {
    fn new(matches: usize, k: usize) -> Self {
        JaccardEstimate {
            value: matches as f64 / k as f64,
            matches,
            k,
        }
    }
}

pub fn estimate_jaccard(a: &Signature, b: &Signature) -> Result<JaccardEstimate> {
    check_family(a, b)?;
    Ok(JaccardEstimate::new(count_matches(&a.values, &b.values), a.k()))
}

fn check_family(a: &Signature, b: &Signature) -> Result<()> {
    if a.family != b.family || a.values.len() != b.values.len() {
        return Err(Error::IncompatibleSignature(format!(
            "{:?} vs {:?}",
            a.family, b.family
        )));
    }
    Ok(())
}

/// Variance of the minhash estimator, J(1 − J)/k.
pub fn estimator_variance(j: f64, k: usize) -> f64 {
    j * (1.0 - j) / k as f64
}

/// Signature of the union of the parts' neighbour sets (elementwise minimum).
pub fn union_signature(parts: &[Signature]) -> Result<Signature> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::invalid("union of zero signatures"))?;
    let mut values = first.values.clone();
    for part in rest {
        check_family(first, part)?;
        min_into(&mut values, &part.values);
    }
    Ok(Signature {
        values,
        owner: None,
        degree: None,
        family: first.family,
    })
}

#[inline]
fn min_into(acc: &mut [u64], other: &[u64]) {
    for (x, &y) in acc.iter_mut().zip(other) {
        if y < *x {
            *x = y;
        }
    }
}

/// |N(A) ∪ N(C)| from the two sizes and their Jaccard similarity.
pub fn union_cardinality(size_a: f64, size_c: f64, j: f64) -> f64 {
    (size_a + size_c) / (1.0 + j)
}

/// Running estimate of the number of unique neighbours of a growing set of
/// accounts. Keeps the union signature and applies the union-size identity
/// with the estimated Jaccard between the set so far and each newcomer.
#[derive(Debug, Clone)]
pub struct CoverageTracker {
    union: Vec<u64>,
    coverage: f64,
    added: usize,
}

impl CoverageTracker {
    pub fn new(k: usize) -> Self {
        CoverageTracker {
            union: vec![SENTINEL; k],
            coverage: 0.0,
            added: 0,
        }
    }

    /// Adds one account and returns the updated coverage.
    pub fn add(&mut self, values: &[u64], degree: u64) -> f64 {
        if self.added == 0 {
            self.coverage = degree as f64;
        } else {
            let j = count_matches(&self.union, values) as f64 / self.union.len() as f64;
            // A union never shrinks, but a noisy Ĵ can push the estimate down.
            self.coverage = union_cardinality(self.coverage, degree as f64, j).max(self.coverage);
        }
        min_into(&mut self.union, values);
        self.added += 1;
        self.coverage
    }

    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn union(&self) -> &[u64] {
        &self.union
    }
}

/// Coverage after each successive addition of `community`.
pub fn coverage_trace(community: &[(Signature, u64)]) -> Result<Vec<f64>> {
    let Some((first, _)) = community.first() else {
        return Ok(Vec::new());
    };
    let mut tracker = CoverageTracker::new(first.k());
    community
        .iter()
        .map(|(sig, degree)| {
            check_family(first, sig)?;
            Ok(tracker.add(&sig.values, *degree))
        })
        .collect()
}

// ---------------------------------------------------------------------------

/// Signatures of every account of a dataset, stored row-major.
#[derive(Debug, Clone)]
pub struct SignatureMatrix {
    family: HashFamily,
    ids: Vec<AccountId>,
    degrees: Vec<u64>,
    values: Vec<u64>,
}

/// Builds one signature per account. `workers` follows the crate-wide
/// convention (0 = global pool, 1 = sequential); the output does not depend on it.
pub fn build_signatures(dataset: &Dataset, family: &HashFamily, workers: usize) -> Result<SignatureMatrix> {
    if family.modulus() < dataset.universe_size() {
        return Err(Error::invalid(format!(
            "modulus {} smaller than universe size {}",
            family.modulus(),
            dataset.universe_size()
        )));
    }
    let k = family.k();
    let accounts = dataset.accounts();
    let mut values = vec![SENTINEL; accounts.len() * k];
    par::for_each_chunk_mut(&mut values, k, workers, |row, out| {
        family.fill(accounts[row].neighbors(), out);
    });
    Ok(SignatureMatrix {
        family: family.clone(),
        ids: accounts.iter().map(|s| s.account()).collect(),
        degrees: accounts.iter().map(|s| s.degree() as u64).collect(),
        values,
    })
}

impl SignatureMatrix {
    pub fn k(&self) -> usize {
        self.family.k()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn ids(&self) -> &[AccountId] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> AccountId {
        self.ids[row]
    }

    pub fn degree(&self, row: usize) -> u64 {
        self.degrees[row]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        let k = self.k();
        &self.values[row * k..(row + 1) * k]
    }

    pub fn position(&self, id: AccountId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn is_empty_row(&self, row: usize) -> bool {
        is_empty_row(self.row(row))
    }

    pub fn signature(&self, row: usize) -> Signature {
        Signature {
            values: self.row(row).to_vec(),
            owner: Some(self.ids[row]),
            degree: Some(self.degrees[row]),
            family: self.family.tag(),
        }
    }

    pub fn matches(&self, a: usize, b: usize) -> usize {
        count_matches(self.row(a), self.row(b))
    }

    pub fn estimate(&self, a: usize, b: usize) -> JaccardEstimate {
        JaccardEstimate::new(self.matches(a, b), self.k())
    }

    /// Raw row-major values, `len() * k()` entries.
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// Approximate heap footprint in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.values.len() * 8 + self.ids.len() * 16
    }
}

// ---------------------------------------------------------------------------
// Store file: magic `GSM1`, k (u32), count (u64), master seed (u64),
// modulus (u64), then per account id (u64), degree (u64), k × u64 values.

const STORE_MAGIC: &[u8; 4] = b"GSM1";

pub fn write_store<W: Write>(matrix: &SignatureMatrix, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(STORE_MAGIC)?;
    w.write_all(&(matrix.k() as u32).to_le_bytes())?;
    w.write_all(&(matrix.len() as u64).to_le_bytes())?;
    w.write_all(&matrix.family.master_seed.to_le_bytes())?;
    w.write_all(&matrix.family.modulus().to_le_bytes())?;
    let mut buf = Vec::with_capacity(matrix.k() * 8);
    for row in 0..matrix.len() {
        w.write_all(&matrix.ids[row].0.to_le_bytes())?;
        w.write_all(&matrix.degrees[row].to_le_bytes())?;
        buf.clear();
        for v in matrix.row(row) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_store(matrix: &SignatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_store(matrix, File::create(path)?)
}

/// Reads a store, checking the magic and, when given, the signature length.
pub fn read_store<R: Read>(reader: R, expected_k: Option<usize>) -> Result<SignatureMatrix> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(Error::Format(format!("bad store magic {magic:?}")));
    }
    let mut kb = [0u8; 4];
    r.read_exact(&mut kb)?;
    let k = u32::from_le_bytes(kb) as usize;
    if k == 0 {
        return Err(Error::Format("store has k = 0".into()));
    }
    if let Some(expected) = expected_k {
        if expected != k {
            return Err(Error::Format(format!("store has k = {k}, expected {expected}")));
        }
    }
    let count = read_u64(&mut r)? as usize;
    let master_seed = read_u64(&mut r)?;
    let modulus = read_u64(&mut r)?;
    let family = HashFamily::with_modulus(k, modulus, master_seed)
        .map_err(|e| Error::Format(e.to_string()))?;

    let mut ids = Vec::with_capacity(count.min(1 << 24));
    let mut degrees = Vec::with_capacity(count.min(1 << 24));
    let mut values = Vec::with_capacity(count.min(1 << 20) * k);
    let mut buf = vec![0u8; k * 8];
    for _ in 0..count {
        ids.push(AccountId(read_u64(&mut r)?));
        degrees.push(read_u64(&mut r)?);
        r.read_exact(&mut buf)?;
        values.extend(
            buf.chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
        );
    }
    if ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Format("account ids are not strictly increasing".into()));
    }
    Ok(SignatureMatrix {
        family,
        ids,
        degrees,
        values,
    })
}

pub fn load_store(path: impl AsRef<Path>, expected_k: Option<usize>) -> Result<SignatureMatrix> {
    read_store(File::open(path)?, expected_k)
}

// ---------------------------------------------------------------------------

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `≥ n`, if one fits in 64 bits.
pub fn next_prime(n: u64) -> Option<u64> {
    (n.max(2)..=u64::MAX).find(|&c| is_prime(c))
}
