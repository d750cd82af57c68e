//! Greedy Joint Mutual Information feature ranking over equal-frequency
//! discretized features, and top-k evaluation sweeps.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, ClassifierConfig, EvalOptions, EvalReport, LabeledDataset};
use crate::error::{Error, Result};
use crate::features::FeatureId;

pub const DEFAULT_BINS: usize = 10;

/// Scores closer than this are treated as tied (lowest feature index wins).
const SCORE_TIE: f64 = 1e-12;

/// Column-major matrix of bin ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinnedMatrix {
    pub columns: Vec<Vec<u32>>,
    pub bins: usize,
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }
}

/// Equal-frequency binning of one column: a value's bin is
/// `floor(rank * bins / n)` where rank is the position of its first
/// occurrence in sorted order, so ties share a bin.
pub fn discretize_column(values: &[f64], bins: usize) -> Vec<u32> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0u32; n];
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[i] != values[order[rank - 1]] {
            first_rank = rank;
        }
        out[i] = (first_rank * bins / n) as u32;
    }
    out
}

/// Discretizes each column of a row-major matrix.
pub fn discretize(rows: &[Vec<f64>], bins: usize) -> Result<BinnedMatrix> {
    if bins == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("cannot discretize non-finite values"));
    }
    let columns = (0..d)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            discretize_column(&col, bins)
        })
        .collect();
    Ok(BinnedMatrix { columns, bins })
}

/// Plug-in entropy in bits.
pub fn entropy<T: Hash + Eq>(symbols: impl IntoIterator<Item = T>) -> f64 {
    let mut counts: HashMap<T, usize> = HashMap::new();
    let mut n = 0usize;
    for s in symbols {
        *counts.entry(s).or_default() += 1;
        n += 1;
    }
    let n = n as f64;
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// I(X; Y) = H(X) + H(Y) - H(X, Y).
pub fn mutual_information(x: &[u32], y: &[usize]) -> f64 {
    let hx = entropy(x.iter().copied());
    let hy = entropy(y.iter().copied());
    let hxy = entropy(x.iter().zip(y).map(|(&a, &b)| (a, b)));
    (hx + hy - hxy).max(0.0)
}

/// I(X1, X2; Y), the information the pair carries about Y.
pub fn pair_mutual_information(x1: &[u32], x2: &[u32], y: &[usize]) -> f64 {
    let pair = || x1.iter().zip(x2).map(|(&a, &b)| (a, b));
    let h_pair = entropy(pair());
    let hy = entropy(y.iter().copied());
    let h_all = entropy(pair().zip(y).map(|((a, b), &c)| (a, b, c)));
    (h_pair + hy - h_all).max(0.0)
}

/// Greedy JMI order over column indices with the score at each step. The
/// first pick maximizes I(f; Y); each later pick maximizes
/// Σ_{s selected} I(f, s; Y). `k` larger than the column count ranks all.
pub fn jmi_order(binned: &BinnedMatrix, labels: &[usize], k: usize) -> Result<Vec<(usize, f64)>> {
    let d = binned.columns.len();
    if d < 2 {
        return Err(Error::invalid(format!("JMI ranking needs at least 2 features, got {d}")));
    }
    if binned.n_rows() != labels.len() {
        return Err(Error::invalid("label count does not match the matrix"));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::validation("JMI ranking needs at least 2 classes"));
    }
    let k = k.min(d);
    let cols = &binned.columns;

    let mut selected: Vec<(usize, f64)> = Vec::with_capacity(k);
    // running Σ I(f, s; Y) for each candidate
    let mut accum: Vec<f64> = vec![0.0; d];
    let mut remaining: Vec<usize> = (0..d).collect();

    let relevance: Vec<f64> = cols.par_iter().map(|c| mutual_information(c, labels)).collect();
    let first = pick_best(&remaining, &relevance);
    selected.push((first, relevance[first]));
    remaining.retain(|&f| f != first);

    while selected.len() < k {
        let last = selected[selected.len() - 1].0;
        let gains: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&f| (f, pair_mutual_information(&cols[f], &cols[last], labels)))
            .collect();
        for (f, g) in gains {
            accum[f] += g;
        }
        let next = pick_best(&remaining, &accum);
        selected.push((next, accum[next]));
        remaining.retain(|&f| f != next);
    }
    Ok(selected)
}

fn pick_best(candidates: &[usize], score: &[f64]) -> usize {
    let mut best = candidates[0];
    for &f in &candidates[1..] {
        if score[f] > score[best] + SCORE_TIE {
            best = f;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: FeatureId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub bins: usize,
    pub features: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn top(&self, k: usize) -> Vec<FeatureId> {
        self.features.iter().take(k).map(|r| r.feature).collect()
    }
}

/// Discretizes the dataset and ranks its features.
pub fn jmi_rank(data: &LabeledDataset, bins: usize, k: usize) -> Result<FeatureRanking> {
    let binned = discretize(&data.rows, bins)?;
    let order = jmi_order(&binned, &data.labels, k)?;
    Ok(FeatureRanking {
        bins,
        features: order
            .into_iter()
            .map(|(i, score)| RankedFeature {
                feature: data.feature_ids[i],
                score,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub avg_f: f64,
    pub avg_f_ci95: f64,
    pub report: EvalReport,
}

/// Evaluates the classifier on the top-k ranked features for each k.
pub fn sweep_topk(
    ranking: &FeatureRanking,
    data: &LabeledDataset,
    config: &ClassifierConfig,
    ks: &[usize],
    options: EvalOptions,
) -> Result<Vec<SweepPoint>> {
    ks.iter()
        .map(|&k| {
            if k == 0 || k > ranking.features.len() {
                return Err(Error::invalid(format!(
                    "k = {k} outside 1..={}",
                    ranking.features.len()
                )));
            }
            let subset = data.select(&ranking.top(k))?;
            let report = classify::evaluate(&subset, config, options)?;
            Ok(SweepPoint {
                k,
                avg_f: report.avg_f,
                avg_f_ci95: report.avg_f_ci95,
                report,
            })
        })
        .collect()
}
