//! Evaluation metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Raster;

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("metric of an empty sample".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// Pearson correlation; zero variance on either side is an error, never 0.
pub fn pearson(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("predictions"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("targets"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Area under the ROC curve of `scores` for binary `labels` (ties count one half).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("scores and labels differ in length".into()));
    }
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l != 1).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput("AUC needs both classes".into()));
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Intersection over union of the pixels above `threshold` in two aligned maps.
///
/// Only pixels valid in both maps take part.
pub fn map_agreement_iou(a: &Raster, b: &Raster, threshold: f64) -> Result<f64> {
    a.spec.ensure_aligned(&b.spec, "second map")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.values.iter().zip(&b.values) {
        if x.is_nan() || y.is_nan() {
            continue;
        }
        let (px, py) = (*x as f64 > threshold, *y as f64 > threshold);
        inter += (px && py) as usize;
        union += (px || py) as usize;
    }
    if union == 0 {
        return Err(Error::EmptyUnion);
    }
    Ok(inter as f64 / union as f64)
}

/// Size of the set of ids belonging to exactly the named rankings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusiveCount {
    pub members: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingOverlap {
    pub n: usize,
    /// One entry per non-empty subset of rankings, in bitmask order.
    pub top: Vec<ExclusiveCount>,
    pub bottom: Vec<ExclusiveCount>,
}

/// Exclusive intersection sizes (UpSet style) of the top-`n` and bottom-`n` ids
/// of several rankings over the same id set. Ties are broken by id.
pub fn ranking_overlap(rankings: &[(String, Vec<(u32, f64)>)], n: usize) -> Result<RankingOverlap> {
    if rankings.is_empty() || rankings.len() > 16 {
        return Err(Error::InvalidInput(format!("{} rankings given, 1..=16 supported", rankings.len())));
    }
    let mut reference: Option<BTreeSet<u32>> = None;
    for (name, scores) in rankings {
        let ids: BTreeSet<u32> = scores.iter().map(|(id, _)| *id).collect();
        if ids.len() != scores.len() {
            return Err(Error::DuplicateKey(format!("ranking {name} repeats an id")));
        }
        if scores.iter().any(|(_, s)| s.is_nan()) {
            return Err(Error::InvalidInput(format!("ranking {name} contains NaN")));
        }
        match &reference {
            None => reference = Some(ids),
            Some(r) if *r != ids => {
                return Err(Error::InvalidInput(format!("ranking {name} covers a different id set")));
            }
            _ => {}
        }
        if n > scores.len() {
            return Err(Error::InvalidInput(format!("n = {n} exceeds {} ranked ids", scores.len())));
        }
    }
    let side = |descending: bool| -> Vec<ExclusiveCount> {
        let mut membership: BTreeMap<u32, u32> = BTreeMap::new();
        for (bit, (_, scores)) in rankings.iter().enumerate() {
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| {
                let ord = if descending { b.1.total_cmp(&a.1) } else { a.1.total_cmp(&b.1) };
                ord.then(a.0.cmp(&b.0))
            });
            for (id, _) in &sorted[..n] {
                *membership.entry(*id).or_default() |= 1 << bit;
            }
        }
        (1u32..1 << rankings.len())
            .map(|mask| ExclusiveCount {
                members: (0..rankings.len())
                    .filter(|b| mask & (1 << b) != 0)
                    .map(|b| rankings[b].0.clone())
                    .collect(),
                count: membership.values().filter(|m| **m == mask).count(),
            })
            .collect()
    };
    Ok(RankingOverlap {
        n,
        top: side(true),
        bottom: side(false),
    })
}
