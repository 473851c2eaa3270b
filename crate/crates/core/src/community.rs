//! Weighted Jaccard subgraphs and Walktrap community detection.
//!
//! Walktrap (Pons & Latapy) measures the distance between two communities by
//! comparing where `t`-step random walks started inside each of them end up,
//! merges greedily with Ward's criterion (the pair whose merge least
//! increases the mean squared walk distance to community centres), and keeps
//! the dendrogram cut with the highest weighted modularity.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AccountId;
use crate::par;
use crate::sketch::SignatureMatrix;

/// Largest member list accepted for a query-time subgraph.
pub const MAX_SUBGRAPH_MEMBERS: usize = 2000;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_WALK_LENGTH: usize = 4;

/// Dense symmetric weight matrix over a small vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSubgraph {
    vertices: Vec<AccountId>,
    weights: Vec<f64>,
    threshold: f64,
}

impl WeightedSubgraph {
    /// Validates a dense row-major matrix. Entries below `threshold` are zeroed.
    pub fn from_dense(vertices: Vec<AccountId>, mut weights: Vec<f64>, threshold: f64) -> Result<Self> {
        let n = vertices.len();
        if weights.len() != n * n {
            return Err(Error::invalid(format!("expected {} weights, got {}", n * n, weights.len())));
        }
        if vertices.iter().collect::<HashSet<_>>().len() != n {
            return Err(Error::invalid("duplicate vertex"));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let w = weights[i * n + j];
                if !w.is_finite() || w < 0.0 || w != weights[j * n + i] {
                    return Err(Error::invalid(format!("weight ({i}, {j}) = {w} is not a symmetric non-negative value")));
                }
            }
        }
        for w in &mut weights {
            if *w < threshold {
                *w = 0.0;
            }
        }
        Ok(WeightedSubgraph {
            vertices,
            weights,
            threshold,
        })
    }

    /// Graph on `0..n` (ids equal to indices) from an undirected edge list.
    /// Repeated edges accumulate.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid(format!("bad edge ({i}, {j})")));
            }
            weights[i * n + j] += w;
            weights[j * n + i] += w;
        }
        Self::from_dense((0..n as u64).map(AccountId).collect(), weights, 0.0)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[AccountId] {
        &self.vertices
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.weights[i * n..(i + 1) * n]
    }

    /// Weighted degree of vertex `i`.
    pub fn strength(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Total edge weight, each unordered pair counted once.
    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Nonzero edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.weights[i * n + j])))
            .filter(|&(_, _, w)| w > 0.0)
    }

    pub fn index_of(&self, id: AccountId) -> Option<usize> {
        self.vertices.iter().position(|&v| v == id)
    }

    /// Subgraph induced by `members` (indices into this graph).
    pub fn induced(&self, members: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = members.iter().find(|&&m| m >= n) {
            return Err(Error::invalid(format!("vertex {bad} not in graph")));
        }
        let m = members.len();
        let mut weights = vec![0.0; m * m];
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                weights[a * m + b] = self.weight(i, j);
            }
        }
        Self::from_dense(members.iter().map(|&i| self.vertices[i]).collect(), weights, self.threshold)
    }
}

/// All pairwise Ĵ between `members`, zeroing weights below `threshold`.
pub fn build_weighted_subgraph(
    matrix: &SignatureMatrix,
    members: &[AccountId],
    threshold: f64,
    workers: usize,
) -> Result<WeightedSubgraph> {
    if members.len() > MAX_SUBGRAPH_MEMBERS {
        return Err(Error::SizeLimit {
            requested: members.len(),
            limit: MAX_SUBGRAPH_MEMBERS,
        });
    }
    let rows: Vec<usize> = members
        .iter()
        .map(|&id| {
            matrix
                .position(id)
                .ok_or_else(|| Error::invalid(format!("unknown account {id}")))
        })
        .collect::<Result<_>>()?;
    if rows.iter().collect::<HashSet<_>>().len() != rows.len() {
        return Err(Error::invalid("duplicate member"));
    }
    let n = rows.len();
    let weight_rows = par::map_range(n, workers, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    return 0.0;
                }
                let w = matrix.estimate(rows[i], rows[j]).value;
                if w < threshold {
                    0.0
                } else {
                    w
                }
            })
            .collect::<Vec<f64>>()
    });
    Ok(WeightedSubgraph {
        vertices: members.to_vec(),
        weights: weight_rows.concat(),
        threshold,
    })
}

/// Weighted Newman modularity of a labelling (one label per vertex).
pub fn modularity(graph: &WeightedSubgraph, labels: &[usize]) -> Result<f64> {
    if labels.len() != graph.len() {
        return Err(Error::InvalidPartition(format!(
            "{} labels for {} vertices",
            labels.len(),
            graph.len()
        )));
    }
    let total = graph.total_weight();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut strength: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        *strength.entry(l).or_default() += graph.strength(i);
    }
    for (i, j, w) in graph.edges() {
        if labels[i] == labels[j] {
            *internal.entry(labels[i]).or_default() += w;
        }
    }
    Ok(strength
        .iter()
        .map(|(c, s)| internal.get(c).copied().unwrap_or(0.0) / total - (s / (2.0 * total)).powi(2))
        .sum())
}

/// One agglomeration step of the dendrogram. Community ids `0..n` are the
/// vertices; merge `i` creates community `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub merged: usize,
    pub delta_sigma: f64,
    /// Modularity of the partition right after this merge.
    pub modularity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityMap {
    pub subgraph: WeightedSubgraph,
    /// Community index per vertex, numbered by first appearance.
    pub labels: Vec<usize>,
    pub dendrogram: Vec<Merge>,
    /// Modularity of the chosen cut.
    pub modularity: f64,
    pub walk_length: usize,
}

impl CommunityMap {
    pub fn community_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn label_of(&self, id: AccountId) -> Option<usize> {
        self.subgraph.index_of(id).map(|i| self.labels[i])
    }

    pub fn label_map(&self) -> BTreeMap<AccountId, usize> {
        self.subgraph.vertices.iter().copied().zip(self.labels.iter().copied()).collect()
    }

    /// Member vertex indices of each community.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (v, &c) in self.labels.iter().enumerate() {
            out[c].push(v);
        }
        out
    }

    pub fn to_json(&self) -> CommunityMapJson {
        CommunityMapJson {
            vertices: self.subgraph.vertices.clone(),
            edges: self.subgraph.edges().collect(),
            labels: self.labels.clone(),
            modularity: self.modularity,
        }
    }
}

/// Wire form of a [`CommunityMap`]: edges are `[i, j, weight]` over vertex indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityMapJson {
    pub vertices: Vec<AccountId>,
    pub edges: Vec<(usize, usize, f64)>,
    pub labels: Vec<usize>,
    pub modularity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

struct Walktrap {
    n_vertices: usize,
    sizes: Vec<usize>,
    /// D^{-1/2}-scaled walk distributions; `None` once merged away.
    profiles: Vec<Option<Vec<f64>>>,
    adjacency: Vec<BTreeMap<usize, f64>>,
    queue: BTreeSet<(Key, usize, usize)>,
    delta: HashMap<(usize, usize), f64>,
}

impl Walktrap {
    fn distance2(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.profiles[a].as_ref().unwrap(), self.profiles[b].as_ref().unwrap());
        pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn delta_sigma(&self, a: usize, b: usize) -> f64 {
        let (sa, sb) = (self.sizes[a] as f64, self.sizes[b] as f64);
        sa * sb / (sa + sb) * self.distance2(a, b) / self.n_vertices as f64
    }

    fn push(&mut self, a: usize, b: usize, ds: f64) {
        let key = ordered(a, b);
        self.delta.insert(key, ds);
        self.queue.insert((Key(ds), key.0, key.1));
    }

    fn remove(&mut self, a: usize, b: usize) -> Option<f64> {
        let key = ordered(a, b);
        let ds = self.delta.remove(&key)?;
        self.queue.remove(&(Key(ds), key.0, key.1));
        Some(ds)
    }
}

/// Walktrap with walks of length `t`, returning the best-modularity cut.
pub fn walktrap(graph: &WeightedSubgraph, t: usize) -> Result<CommunityMap> {
    let n = graph.len();
    if n == 0 {
        return Err(Error::invalid("walktrap on an empty graph"));
    }
    if t == 0 {
        return Err(Error::invalid("walk length must be at least 1"));
    }

    // Transition matrix; isolated vertices get a unit self-loop.
    let strengths: Vec<f64> = (0..n).map(|i| graph.strength(i)).collect();
    let mut transition = vec![0.0; n * n];
    for i in 0..n {
        if strengths[i] > 0.0 {
            for j in 0..n {
                transition[i * n + j] = graph.weight(i, j) / strengths[i];
            }
        } else {
            transition[i * n + i] = 1.0;
        }
    }
    let mut walk = transition.clone();
    for _ in 1..t {
        let rows = par::map_range(n, 0, |i| {
            let mut out = vec![0.0; n];
            for (k, &p) in walk[i * n..(i + 1) * n].iter().enumerate() {
                if p != 0.0 {
                    for (o, &q) in out.iter_mut().zip(&transition[k * n..(k + 1) * n]) {
                        *o += p * q;
                    }
                }
            }
            out
        });
        walk = rows.concat();
    }
    let inv_sqrt_d: Vec<f64> = strengths.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();

    let mut wt = Walktrap {
        n_vertices: n,
        sizes: vec![1; n],
        profiles: (0..n)
            .map(|i| Some(walk[i * n..(i + 1) * n].iter().zip(&inv_sqrt_d).map(|(p, s)| p * s).collect()))
            .collect(),
        adjacency: vec![BTreeMap::new(); n],
        queue: BTreeSet::new(),
        delta: HashMap::new(),
    };
    for (i, j, w) in graph.edges() {
        wt.adjacency[i].insert(j, w);
        wt.adjacency[j].insert(i, w);
        let ds = wt.delta_sigma(i, j);
        wt.push(i, j, ds);
    }

    let total = graph.total_weight();
    let mut strength_of: Vec<f64> = strengths.clone();
    let mut q = if total > 0.0 {
        -strengths.iter().map(|s| (s / (2.0 * total)).powi(2)).sum::<f64>()
    } else {
        0.0
    };
    let mut best_q = q;
    let mut best_cut = 0usize;
    let mut dendrogram = Vec::new();

    while let Some(&(Key(ds), a, b)) = wt.queue.first() {
        wt.remove(a, b);
        let c = wt.sizes.len();
        let (sa, sb) = (wt.sizes[a], wt.sizes[b]);
        let merged_profile: Vec<f64> = {
            let (pa, pb) = (wt.profiles[a].as_ref().unwrap(), wt.profiles[b].as_ref().unwrap());
            let (fa, fb) = (sa as f64 / (sa + sb) as f64, sb as f64 / (sa + sb) as f64);
            pa.iter().zip(pb).map(|(x, y)| fa * x + fb * y).collect()
        };
        wt.sizes.push(sa + sb);
        wt.profiles.push(Some(merged_profile));
        wt.adjacency.push(BTreeMap::new());

        let w_ab = wt.adjacency[a].get(&b).copied().unwrap_or(0.0);
        if total > 0.0 {
            q += w_ab / total - 2.0 * strength_of[a] * strength_of[b] / (4.0 * total * total);
        }
        strength_of.push(strength_of[a] + strength_of[b]);

        let adj_a = std::mem::take(&mut wt.adjacency[a]);
        let adj_b = std::mem::take(&mut wt.adjacency[b]);
        let neighbours: BTreeSet<usize> = adj_a.keys().chain(adj_b.keys()).copied().filter(|&x| x != a && x != b).collect();
        for x in neighbours {
            let w = adj_a.get(&x).copied().unwrap_or(0.0) + adj_b.get(&x).copied().unwrap_or(0.0);
            let ds_ax = wt.remove(a, x);
            let ds_bx = wt.remove(b, x);
            let new_ds = match (ds_ax, ds_bx) {
                (Some(dax), Some(dbx)) => {
                    let sx = wt.sizes[x] as f64;
                    ((sa as f64 + sx) * dax + (sb as f64 + sx) * dbx - sx * ds) / ((sa + sb) as f64 + sx)
                }
                _ => wt.delta_sigma(c, x),
            };
            wt.adjacency[x].remove(&a);
            wt.adjacency[x].remove(&b);
            wt.adjacency[x].insert(c, w);
            wt.adjacency[c].insert(x, w);
            wt.push(c, x, new_ds);
        }
        wt.profiles[a] = None;
        wt.profiles[b] = None;

        dendrogram.push(Merge {
            left: a,
            right: b,
            merged: c,
            delta_sigma: ds,
            modularity: q,
        });
        if q > best_q + 1e-12 {
            best_q = q;
            best_cut = dendrogram.len();
        }
    }

    let labels = cut_labels(n, &dendrogram[..best_cut]);
    let modularity = modularity(graph, &labels)?;
    Ok(CommunityMap {
        subgraph: graph.clone(),
        labels,
        dendrogram,
        modularity,
        walk_length: t,
    })
}

/// Vertex labels after applying `merges`, numbered by first appearance.
pub fn cut_labels(n: usize, merges: &[Merge]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n + merges.len()).collect();
    for m in merges {
        parent[m.left] = m.merged;
        parent[m.right] = m.merged;
    }
    let root = |mut v: usize| {
        while parent[v] != v {
            v = parent[v];
        }
        v
    };
    let mut canon: HashMap<usize, usize> = HashMap::new();
    (0..n)
        .map(|v| {
            let r = root(v);
            let next = canon.len();
            *canon.entry(r).or_insert(next)
        })
        .collect()
}
