//! Community-goodness metrics on weighted graphs.
//!
//! Undefined values (0/0 ratios) are `None`. Separability of a community
//! with no external weight is `Some(f64::INFINITY)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::community::WeightedSubgraph;
use crate::error::{Error, Result};

use super::ppr::{personalized_pagerank, PprParams, SparseGraph};

pub const DEFAULT_COHESIVENESS_SAMPLES: usize = 10;

fn check_members(graph: &WeightedSubgraph, members: &[usize]) -> Result<Vec<bool>> {
    let mut inside = vec![false; graph.len()];
    for &m in members {
        if m >= graph.len() {
            return Err(Error::invalid(format!("member {m} is not a vertex")));
        }
        if inside[m] {
            return Err(Error::invalid(format!("member {m} listed twice")));
        }
        inside[m] = true;
    }
    Ok(inside)
}

/// Internal weight `m_s` (pairs inside counted once) and boundary weight `c_s`.
pub fn internal_external_weights(graph: &WeightedSubgraph, members: &[usize]) -> Result<(f64, f64)> {
    let inside = check_members(graph, members)?;
    let (mut m, mut c) = (0.0, 0.0);
    for &i in members {
        for (j, &w) in graph.row(i).iter().enumerate() {
            if inside[j] {
                if i < j {
                    m += w;
                }
            } else {
                c += w;
            }
        }
    }
    Ok((m, c))
}

pub fn conductance(m_s: f64, c_s: f64) -> Option<f64> {
    let total = 2.0 * m_s + c_s;
    (total > 0.0).then(|| c_s / total)
}

pub fn separability(m_s: f64, c_s: f64) -> Option<f64> {
    if c_s > 0.0 {
        Some(m_s / c_s)
    } else if m_s > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

pub fn density(m_s: f64, n_s: usize) -> Result<f64> {
    if n_s < 2 {
        return Err(Error::invalid("density needs at least two members"));
    }
    Ok(2.0 * m_s / (n_s * (n_s - 1)) as f64)
}

pub fn conductance_ratio(conductance: f64, cohesiveness: f64) -> Option<f64> {
    (cohesiveness > 0.0).then(|| conductance / cohesiveness)
}

/// Mean over members of `(W³)_ii / (W·Wmax·W)_ii` on the induced subgraph,
/// where `Wmax` has the largest internal weight off the diagonal.
pub fn weighted_clustering(graph: &WeightedSubgraph, members: &[usize]) -> Result<Option<f64>> {
    check_members(graph, members)?;
    let sub = graph.induced(members)?;
    let n = sub.len();
    let w_max = (0..n).flat_map(|i| sub.row(i).iter().copied()).fold(0.0, f64::max);
    let mut sum = 0.0;
    let mut counted = 0usize;
    for i in 0..n {
        let row = sub.row(i);
        let s: f64 = row.iter().sum();
        let sq: f64 = row.iter().map(|w| w * w).sum();
        let denom = w_max * (s * s - sq);
        if denom <= 0.0 {
            continue;
        }
        let mut closed = 0.0;
        for (j, &wij) in row.iter().enumerate() {
            if wij == 0.0 {
                continue;
            }
            for (k, &wjk) in sub.row(j).iter().enumerate() {
                closed += wij * wjk * row[k];
            }
        }
        sum += closed / denom;
        counted += 1;
    }
    Ok((counted > 0).then(|| sum / counted as f64))
}

/// Minimum sweep-cut conductance inside the community, over `samples` PPR
/// runs seeded from random member subsets of size `max(1, |S|/10)`.
///
/// Each sweep visits prefixes of the PageRank order of at most `|S|/2`
/// members, and conductance is measured within the induced subgraph.
pub fn cohesiveness(graph: &WeightedSubgraph, members: &[usize], samples: usize, seed: u64) -> Result<Option<f64>> {
    check_members(graph, members)?;
    if members.len() < 2 {
        return Err(Error::invalid("cohesiveness needs at least two members"));
    }
    let sub = graph.induced(members)?;
    let n = sub.len();
    let sparse = SparseGraph::from_weighted(&sub);
    let subset = (n / 10).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<f64> = None;
    for _ in 0..samples {
        let teleport: Vec<usize> = sample(&mut rng, n, subset).into_vec();
        let params = PprParams::default();
        let scores = personalized_pagerank(&sparse, &teleport, &params)?;
        if let Some(c) = sweep_min_conductance(&sub, &scores, n / 2) {
            best = Some(best.map_or(c, |b| b.min(c)));
        }
    }
    Ok(best)
}

/// Smallest conductance over score-ordered prefixes of positive-score
/// vertices with at most `max_len` members.
pub(crate) fn sweep_min_conductance(graph: &WeightedSubgraph, scores: &[f64], max_len: usize) -> Option<f64> {
    let mut order: Vec<usize> = (0..graph.len()).filter(|&v| scores[v] > 0.0).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(max_len);
    let mut inside = vec![false; graph.len()];
    let (mut m, mut c) = (0.0, 0.0);
    // Counting crossing edges lets an empty boundary give exactly c = 0.
    let mut crossing = 0usize;
    let mut best: Option<f64> = None;
    for v in order {
        // Moving v inside turns its edges to members internal and the rest external.
        for (u, &w) in graph.row(v).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            if inside[u] {
                m += w;
                c -= w;
                crossing -= 1;
            } else {
                c += w;
                crossing += 1;
            }
        }
        inside[v] = true;
        if crossing == 0 {
            c = 0.0;
        }
        if let Some(con) = conductance(m, c.max(0.0)) {
            best = Some(best.map_or(con, |b| b.min(con)));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunityMetrics {
    pub size: usize,
    pub clustering: Option<f64>,
    pub cohesiveness: Option<f64>,
    pub conductance: Option<f64>,
    pub conductance_ratio: Option<f64>,
    pub density: Option<f64>,
    pub separability: Option<f64>,
}

/// All metrics of one community.
pub fn community_metrics(graph: &WeightedSubgraph, members: &[usize], seed: u64) -> Result<CommunityMetrics> {
    let (m, c) = internal_external_weights(graph, members)?;
    let con = conductance(m, c);
    let coh = if members.len() >= 2 {
        cohesiveness(graph, members, DEFAULT_COHESIVENESS_SAMPLES, seed)?
    } else {
        None
    };
    Ok(CommunityMetrics {
        size: members.len(),
        clustering: weighted_clustering(graph, members)?,
        cohesiveness: coh,
        conductance: con,
        conductance_ratio: con.zip(coh).and_then(|(a, b)| conductance_ratio(a, b)),
        density: density(m, members.len()).ok(),
        separability: separability(m, c),
    })
}
