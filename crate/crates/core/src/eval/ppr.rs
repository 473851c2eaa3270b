//! Personalised PageRank baseline.

use serde::{Deserialize, Serialize};

use crate::community::WeightedSubgraph;
use crate::error::{Error, Result};
use crate::ingest::{AccountId, Dataset};

/// Directed weighted graph in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    ids: Vec<AccountId>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseGraph {
    /// Observed account network: `a → b` with weight 1 whenever `b` is in
    /// N(a), `b` is itself an account and `b ≠ a`.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        for set in dataset.accounts() {
            for &b in set.neighbors() {
                if b != set.account().0 {
                    if let Some(row) = dataset.position(AccountId(b)) {
                        targets.push(row);
                    }
                }
            }
            offsets.push(targets.len());
        }
        SparseGraph {
            ids: dataset.accounts().iter().map(|s| s.account()).collect(),
            offsets,
            weights: vec![1.0; targets.len()],
            targets,
        }
    }

    pub fn from_weighted(graph: &WeightedSubgraph) -> Self {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for i in 0..graph.len() {
            for (j, &w) in graph.row(i).iter().enumerate() {
                if w > 0.0 {
                    targets.push(j);
                    weights.push(w);
                }
            }
            offsets.push(targets.len());
        }
        SparseGraph {
            ids: graph.vertices().to_vec(),
            offsets,
            targets,
            weights,
        }
    }

    /// Graph on `0..n` from directed `(from, to, weight)` arcs.
    pub fn from_arcs(n: usize, arcs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = arcs.to_vec();
        if let Some(&(a, b, _)) = sorted.iter().find(|&&(a, b, w)| a >= n || b >= n || w.is_nan() || w < 0.0) {
            return Err(Error::invalid(format!("bad arc ({a}, {b})")));
        }
        sorted.sort_by_key(|&(a, b, _)| (a, b));
        let mut offsets = vec![0; n + 1];
        for &(a, _, _) in &sorted {
            offsets[a + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(SparseGraph {
            ids: (0..n as u64).map(AccountId).collect(),
            offsets,
            targets: sorted.iter().map(|a| a.1).collect(),
            weights: sorted.iter().map(|a| a.2).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[AccountId] {
        &self.ids
    }

    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    pub fn position(&self, id: AccountId) -> Option<usize> {
        self.ids.binary_search(&id).ok().or_else(|| self.ids.iter().position(|&x| x == id))
    }

    fn out_arcs(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.targets[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PprParams {
    pub iterations: usize,
    pub damping: f64,
}

impl Default for PprParams {
    fn default() -> Self {
        PprParams {
            iterations: 3,
            damping: 0.85,
        }
    }
}

impl PprParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("PageRank needs at least one iteration"));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::invalid(format!("damping {} is outside (0, 1)", self.damping)));
        }
        Ok(())
    }
}

/// Power iteration `x ← d·Pᵀx + (1 − d)·v` from `x = v`, where `v` is
/// uniform on `teleport`. Mass at vertices without out-weight returns to
/// the teleport set.
pub fn personalized_pagerank(graph: &SparseGraph, teleport: &[usize], params: &PprParams) -> Result<Vec<f64>> {
    params.validate()?;
    if teleport.is_empty() {
        return Err(Error::invalid("empty teleport set"));
    }
    let n = graph.len();
    let mut v = vec![0.0; n];
    for &t in teleport {
        if t >= n {
            return Err(Error::invalid(format!("teleport vertex {t} is not in the graph")));
        }
        v[t] = 1.0;
    }
    let members = v.iter().filter(|&&x| x > 0.0).count() as f64;
    for x in &mut v {
        *x /= members;
    }
    let out_weight: Vec<f64> = (0..n).map(|i| graph.out_arcs(i).map(|(_, w)| w).sum()).collect();
    let d = params.damping;
    let mut x = v.clone();
    for _ in 0..params.iterations {
        let mut next: Vec<f64> = v.iter().map(|t| (1.0 - d) * t).collect();
        let mut dangling = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            if out_weight[i] > 0.0 {
                let share = d * x[i] / out_weight[i];
                for (j, w) in graph.out_arcs(i) {
                    next[j] += share * w;
                }
            } else {
                dangling += d * x[i];
            }
        }
        for (nx, t) in next.iter_mut().zip(&v) {
            *nx += dangling * t;
        }
        x = next;
    }
    Ok(x)
}

/// Non-seed accounts by descending PageRank, ties by ascending id. Accounts
/// with zero score are left out.
pub fn ppr_ranking(graph: &SparseGraph, seeds: &[AccountId], params: &PprParams) -> Result<Vec<(AccountId, f64)>> {
    let teleport: Vec<usize> = seeds
        .iter()
        .map(|&id| graph.position(id).ok_or_else(|| Error::invalid(format!("seed {id} is not in the graph"))))
        .collect::<Result<_>>()?;
    let scores = personalized_pagerank(graph, &teleport, params)?;
    let mut out: Vec<(AccountId, f64)> = (0..graph.len())
        .filter(|v| scores[*v] > 0.0 && !teleport.contains(v))
        .map(|v| (graph.ids[v], scores[v]))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}
