//! Estimator-error, rank-correlation and recall experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{expand, Method, SeedSet, StoppingRule};
use crate::ingest::{generate_planted_partition, sorted_jaccard, AccountId, Dataset, PlantedConfig, PlantedPartition};
use crate::lsh::{build_index, BandingConfig};
use crate::par;
use crate::sketch::{build_signatures, count_matches, HashFamily};

use super::ppr::{ppr_ranking, PprParams, SparseGraph};
use super::recall::{auc, recall_curve};

fn job_seed(seed: u64, job: u64) -> u64 {
    seed ^ job.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Mean and standard error of the mean.
pub fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub k: usize,
    pub pairs: usize,
    pub mean_abs_error: f64,
    pub std_error: f64,
}

/// `|Ĵ − J|` statistics over `pairs` random distinct account pairs, for each k.
pub fn estimator_error_experiment(
    dataset: &Dataset,
    k_values: &[usize],
    pairs: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<ErrorRow>> {
    let n = dataset.len();
    let available = n.saturating_mul(n.saturating_sub(1)) / 2;
    if pairs == 0 || available < pairs {
        return Err(Error::invalid(format!("cannot draw {pairs} distinct pairs from {n} accounts")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = std::collections::HashSet::new();
    while chosen.len() < pairs {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            chosen.insert((a.min(b), a.max(b)));
        }
    }
    let mut list: Vec<(usize, usize)> = chosen.into_iter().collect();
    list.sort_unstable();
    estimator_error_on_pairs(dataset, &list, k_values, seed, workers)
}

/// `|Ĵ − J|` statistics over explicit row pairs.
pub fn estimator_error_on_pairs(
    dataset: &Dataset,
    pairs: &[(usize, usize)],
    k_values: &[usize],
    seed: u64,
    workers: usize,
) -> Result<Vec<ErrorRow>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs"));
    }
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= dataset.len() || b >= dataset.len()) {
        return Err(Error::invalid(format!("pair ({a}, {b}) is out of range")));
    }
    let sets = dataset.accounts();
    let exact: Vec<f64> = par::map_range(pairs.len(), workers, |i| {
        let (a, b) = pairs[i];
        sorted_jaccard(sets[a].neighbors(), sets[b].neighbors())
    });
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let family = HashFamily::new(k, dataset.universe_size(), job_seed(seed, k as u64))?;
        let errors: Vec<f64> = par::map_range(pairs.len(), workers, |i| {
            let (a, b) = pairs[i];
            let sa = family.signature_of(sets[a].neighbors()).expect("neighbours lie in the universe");
            let sb = family.signature_of(sets[b].neighbors()).expect("neighbours lie in the universe");
            (count_matches(&sa.values, &sb.values) as f64 / k as f64 - exact[i]).abs()
        });
        let (mean_abs_error, std_error) = mean_and_std_error(&errors);
        rows.push(ErrorRow {
            k,
            pairs: pairs.len(),
            mean_abs_error,
            std_error,
        });
    }
    Ok(rows)
}

/// Spearman correlation with average ranks for ties. `None` when either
/// input is constant or shorter than two.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &v in &idx[i..=j] {
            ranks[v] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub target: AccountId,
    pub comparators: usize,
    pub k_small: usize,
    pub k_large: usize,
    pub rho_small: Option<f64>,
    pub rho_large: Option<f64>,
}

pub const MIN_COMPARATORS: usize = 20;

/// Spearman correlation between exact and estimated Jaccard similarity of
/// `target` to every account sharing at least one neighbour with it.
pub fn rank_correlation_experiment(
    dataset: &Dataset,
    target: AccountId,
    k_small: usize,
    k_large: usize,
    seed: u64,
) -> Result<RankCorrelation> {
    let t = dataset
        .get(target)
        .ok_or_else(|| Error::invalid(format!("unknown target {target}")))?;
    let comparators: Vec<(&[u64], f64)> = dataset
        .accounts()
        .iter()
        .filter(|s| s.account() != target)
        .map(|s| (s.neighbors(), sorted_jaccard(t.neighbors(), s.neighbors())))
        .filter(|&(_, j)| j > 0.0)
        .collect();
    if comparators.len() < MIN_COMPARATORS {
        return Err(Error::invalid(format!(
            "target {target} has {} comparators with nonzero similarity, need {MIN_COMPARATORS}",
            comparators.len()
        )));
    }
    let exact: Vec<f64> = comparators.iter().map(|c| c.1).collect();
    let rho = |k: usize| -> Result<Option<f64>> {
        let family = HashFamily::new(k, dataset.universe_size(), job_seed(seed, k as u64))?;
        let st = family.signature_of(t.neighbors())?;
        let est = comparators
            .iter()
            .map(|(n, _)| Ok(count_matches(&st.values, &family.signature_of(n)?.values) as f64 / k as f64))
            .collect::<Result<Vec<f64>>>()?;
        Ok(spearman(&exact, &est))
    };
    Ok(RankCorrelation {
        target,
        comparators: comparators.len(),
        k_small,
        k_large,
        rho_small: rho(k_small)?,
        rho_large: rho(k_large)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMethod {
    Ms,
    Ac,
    Ppr,
}

impl RecallMethod {
    pub const ALL: [RecallMethod; 3] = [RecallMethod::Ms, RecallMethod::Ac, RecallMethod::Ppr];

    pub fn name(self) -> &'static str {
        match self {
            RecallMethod::Ms => "ms",
            RecallMethod::Ac => "ac",
            RecallMethod::Ppr => "ppr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallConfig {
    pub planted: PlantedConfig,
    pub k: usize,
    pub banding: BandingConfig,
    pub seeds_per_community: usize,
    pub draws: usize,
    pub ppr: PprParams,
    pub seed: u64,
    pub workers: usize,
}

impl RecallConfig {
    /// Ten communities of 300 accounts, 30 seeds, five draws.
    pub fn standard(universe: u64, seed: u64) -> Self {
        RecallConfig {
            planted: PlantedConfig {
                n_accounts: 3000,
                n_communities: 10,
                universe,
                p_in: 0.3,
                p_out: 0.01,
                seed,
            },
            k: 1000,
            banding: BandingConfig::default(),
            seeds_per_community: 30,
            draws: 5,
            ppr: PprParams::default(),
            seed,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRun {
    pub community: String,
    pub draw: usize,
    pub method: RecallMethod,
    pub auc: f64,
    pub final_recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: RecallMethod,
    pub runs: usize,
    pub mean_auc: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub runs: Vec<RecallRun>,
    pub summary: Vec<MethodSummary>,
}

impl RecallReport {
    pub fn summary_for(&self, method: RecallMethod) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Recall of MS, AC and PageRank on a planted partition. Each draw picks
/// random seeds from one community and every method ranks `|C| − seeds`
/// accounts.
pub fn recall_experiment(cfg: &RecallConfig) -> Result<RecallReport> {
    let planted = generate_planted_partition(&cfg.planted)?;
    let family = HashFamily::new(cfg.k, planted.dataset.universe_size(), cfg.seed)?;
    let matrix = build_signatures(&planted.dataset, &family, cfg.workers)?;
    let index = build_index(&matrix, cfg.banding, cfg.workers)?;
    let graph = SparseGraph::from_dataset(&planted.dataset);
    recall_on_partition(&planted, cfg, |method, seeds, count| match method {
        RecallMethod::Ppr => Ok(ppr_ranking(&graph, seeds, &cfg.ppr)?.into_iter().map(|p| p.0).collect()),
        RecallMethod::Ms | RecallMethod::Ac => {
            let m = if method == RecallMethod::Ms { Method::Ms } else { Method::Ac };
            let seeds = SeedSet::new(seeds.iter().copied())?;
            Ok(expand(m, &index, &matrix, &seeds, StoppingRule::FixedCount(count), 1)?.accounts())
        }
    })
}

fn recall_on_partition(
    planted: &PlantedPartition,
    cfg: &RecallConfig,
    rank: impl Fn(RecallMethod, &[AccountId], usize) -> Result<Vec<AccountId>> + Sync,
) -> Result<RecallReport> {
    let tags: Vec<&String> = planted.truth.communities.keys().collect();
    let jobs = tags.len() * cfg.draws;
    let results = par::map_range(jobs, cfg.workers, |job| -> Result<Vec<RecallRun>> {
        let (tag, draw) = (tags[job / cfg.draws], job % cfg.draws);
        let truth = &planted.truth.communities[tag];
        if truth.len() <= cfg.seeds_per_community {
            return Err(Error::invalid(format!("community {tag} has no members beyond the seeds")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(job_seed(cfg.seed, job as u64));
        let seeds: Vec<AccountId> = sample(&mut rng, truth.len(), cfg.seeds_per_community)
            .into_iter()
            .map(|i| truth[i])
            .collect();
        let count = truth.len() - seeds.len();
        RecallMethod::ALL
            .iter()
            .map(|&method| {
                let ranking = rank(method, &seeds, count)?;
                let curve = recall_curve(&ranking, truth, &seeds)?;
                Ok(RecallRun {
                    community: tag.clone(),
                    draw,
                    method,
                    auc: auc(&curve),
                    final_recall: *curve.last().unwrap(),
                })
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(jobs * 3);
    for r in results {
        runs.extend(r?);
    }
    let summary = RecallMethod::ALL
        .iter()
        .map(|&method| {
            let aucs: Vec<f64> = runs.iter().filter(|r| r.method == method).map(|r| r.auc).collect();
            let (mean_auc, std_error) = mean_and_std_error(&aucs);
            MethodSummary {
                method,
                runs: aucs.len(),
                mean_auc,
                std_error,
            }
        })
        .collect();
    Ok(RecallReport { runs, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::NeighborSet;

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &x), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), None);
        // Ties get average ranks: y ranks are 1.5, 1.5, 3, 4.
        let rho = spearman(&x, &[0.0, 0.0, 5.0, 6.0]).unwrap();
        let (rx, ry) = ([1.0, 2.0, 3.0, 4.0], [1.5, 1.5, 3.0, 4.0]);
        let m = 2.5;
        let num: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
        let den = (rx.iter().map(|a| (a - m) * (a - m)).sum::<f64>() * ry.iter().map(|b| (b - m) * (b - m)).sum::<f64>()).sqrt();
        assert!((rho - num / den).abs() < 1e-15);
    }

    #[test]
    fn identical_pairs_have_zero_error() {
        let ds = Dataset::new(vec![
            NeighborSet::new(AccountId(1), [3, 5, 9, 11]),
            NeighborSet::new(AccountId(2), [3, 5, 9, 11]),
        ])
        .unwrap();
        let rows = estimator_error_on_pairs(&ds, &[(0, 1)], &[10, 100], 4, 1).unwrap();
        assert!(rows.iter().all(|r| r.mean_abs_error == 0.0));
        assert!(estimator_error_experiment(&ds, &[10], 2, 1, 1).is_err());
    }

    #[test]
    fn rank_correlation_needs_comparators() {
        let ds = Dataset::new((0..10).map(|i| NeighborSet::new(AccountId(i), [100, 200 + i])).collect()).unwrap();
        assert!(rank_correlation_experiment(&ds, AccountId(0), 10, 100, 1).is_err());
        assert!(rank_correlation_experiment(&ds, AccountId(99), 10, 100, 1).is_err());
    }

    #[test]
    fn mean_and_std_error_values() {
        let (m, se) = mean_and_std_error(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
