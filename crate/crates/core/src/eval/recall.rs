//! Recall curves and their area.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ingest::AccountId;

/// Recall after the top `t` ranked accounts for `t = 0..=L`, where
/// `L = |truth| − |init|`. Rankings shorter than `L` keep their last value.
pub fn recall_curve(ranking: &[AccountId], truth: &[AccountId], init: &[AccountId]) -> Result<Vec<f64>> {
    let truth: HashSet<AccountId> = truth.iter().copied().collect();
    let init: HashSet<AccountId> = init.iter().copied().collect();
    if !init.is_subset(&truth) {
        return Err(Error::invalid("initial seeds must belong to the ground truth"));
    }
    if truth.len() <= init.len() {
        return Err(Error::invalid("ground truth has no members beyond the seeds"));
    }
    let l = truth.len() - init.len();
    let mut curve = Vec::with_capacity(l + 1);
    curve.push(0.0);
    let mut hits = 0usize;
    for t in 0..l {
        if let Some(id) = ranking.get(t) {
            if truth.contains(id) && !init.contains(id) {
                hits += 1;
            }
        }
        curve.push(hits as f64 / l as f64);
    }
    Ok(curve)
}

/// Trapezoid area under a recall curve on `x = t/L`. A perfect ranking
/// traces the diagonal and scores 0.5.
pub fn auc(curve: &[f64]) -> f64 {
    if curve.len() < 2 {
        return 0.0;
    }
    let l = (curve.len() - 1) as f64;
    curve.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>() / l
}
