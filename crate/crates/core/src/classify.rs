//! Device identification: bagged CART trees, k-NN and Gaussian naive Bayes,
//! the repeated per-class random split protocol, and precision / recall /
//! F-score metrics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureVector};
use crate::rng;

/// Feature rows with integer class labels. `classes[label]` is the device id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub feature_ids: Vec<FeatureId>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        feature_ids: Vec<FeatureId>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid("rows and labels differ in length"));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != feature_ids.len()) {
            return Err(Error::invalid(format!("row {r} has the wrong number of features")));
        }
        if let Some(r) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation(format!("row {r} has a non-finite feature")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        Ok(LabeledDataset {
            feature_ids,
            rows,
            labels,
            classes,
        })
    }

    /// Labels are device ids, numbered in sorted order.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::invalid("dataset needs at least one feature vector"))?;
        if vectors.iter().any(|v| v.ids != first.ids) {
            return Err(Error::invalid("feature vectors disagree on feature layout"));
        }
        let index: BTreeMap<&str, usize> = {
            let mut names: Vec<&str> = vectors.iter().map(|v| v.device_id.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
        };
        let classes = index.keys().map(|s| s.to_string()).collect();
        let labels = vectors.iter().map(|v| index[v.device_id.as_str()]).collect();
        let rows = vectors.iter().map(|v| v.values.clone()).collect();
        LabeledDataset::new(first.ids.clone(), rows, labels, classes)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps only the given feature columns, in the given order.
    pub fn select(&self, ids: &[FeatureId]) -> Result<Self> {
        let cols = ids
            .iter()
            .map(|id| {
                self.feature_ids
                    .iter()
                    .position(|f| f == id)
                    .ok_or_else(|| Error::invalid(format!("feature {id} not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&cols))
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        LabeledDataset {
            feature_ids: cols.iter().map(|&c| self.feature_ids[c]).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
            labels: self.labels.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Rows at `idx`; class numbering is kept.
    pub fn subset(&self, idx: &[usize]) -> Self {
        LabeledDataset {
            feature_ids: self.feature_ids.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Keeps only rows of the named classes and renumbers them.
    pub fn restrict_classes(&self, keep: &[String]) -> Result<Self> {
        let mut keep: Vec<&String> = keep.iter().collect();
        keep.sort();
        keep.dedup();
        let mut remap = vec![None; self.classes.len()];
        for (new, name) in keep.iter().enumerate() {
            let old = self
                .classes
                .iter()
                .position(|c| c == *name)
                .ok_or_else(|| Error::invalid(format!("class {name} not in dataset")))?;
            remap[old] = Some(new);
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| remap[self.labels[i]].is_some()).collect();
        Ok(LabeledDataset {
            feature_ids: self.feature_ids.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| remap[self.labels[i]].unwrap()).collect(),
            classes: keep.into_iter().cloned().collect(),
        })
    }

    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// How each class's rows are divided between training and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `ceil(n * fraction)` rows train, clamped so both sides are non-empty.
    Fraction(f64),
    /// Exactly this many rows per class train; the rest test.
    PerClass(usize),
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::Fraction(0.5)
    }
}

/// Per-class random partition into (train, test) row indices.
pub fn split(data: &LabeledDataset, rule: SplitRule, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if let SplitRule::Fraction(f) = rule {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("train fraction must be in (0, 1), got {f}")));
        }
    }
    let mut rng = rng::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in data.rows_by_class().into_iter().enumerate() {
        let n = rows.len();
        if n < 2 {
            return Err(Error::validation(format!(
                "class {} has {n} row(s); at least 2 are needed to split",
                data.classes[class]
            )));
        }
        let n_train = match rule {
            SplitRule::Fraction(f) => ((n as f64 * f).ceil() as usize).clamp(1, n - 1),
            SplitRule::PerClass(k) => {
                if k == 0 || k >= n {
                    return Err(Error::validation(format!(
                        "class {} has {n} rows; cannot train on {k} and still test",
                        data.classes[class]
                    )));
                }
                k
            }
        };
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..n_train]);
        test.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// 50/50 split; odd class sizes put the extra row in training.
pub fn split_50_50(data: &LabeledDataset, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    split(data, SplitRule::Fraction(0.5), seed)
}

pub trait Classifier: Send + Sync {
    fn predict(&self, row: &[f64]) -> usize;

    fn predict_all(&self, rows: &[Vec<f64>]) -> Vec<usize> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn argmax_smallest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classification tree with Gini impurity.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl DecisionTree {
    /// Fits on the rows listed in `sample` (repeats allowed, as produced by
    /// bootstrap resampling).
    pub fn fit(data: &LabeledDataset, sample: &[usize], config: TreeConfig) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::invalid("cannot fit a tree on zero rows"));
        }
        let mut tree = DecisionTree { nodes: Vec::new() };
        let min_leaf = config.min_leaf.max(1);
        tree.grow(data, sample.to_vec(), 0, config.max_depth, min_leaf);
        Ok(tree)
    }

    fn grow(
        &mut self,
        data: &LabeledDataset,
        sample: Vec<usize>,
        depth: usize,
        max_depth: Option<usize>,
        min_leaf: usize,
    ) -> usize {
        let k = data.n_classes();
        let mut counts = vec![0usize; k];
        for &i in &sample {
            counts[data.labels[i]] += 1;
        }
        let majority = argmax_smallest(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let at_depth = max_depth.is_some_and(|d| depth >= d);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority));
        if pure || at_depth || sample.len() < 2 * min_leaf {
            return id;
        }
        let Some(choice) = best_split(data, &sample, &counts, min_leaf) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = sample
            .iter()
            .partition(|&&i| data.rows[i][choice.feature] <= choice.threshold);
        let l = self.grow(data, left, depth + 1, max_depth, min_leaf);
        let r = self.grow(data, right, depth + 1, max_depth, min_leaf);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left: l,
            right: r,
        };
        id
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Lowest weighted Gini impurity over all features and midpoint thresholds;
/// the first candidate wins ties.
fn best_split(
    data: &LabeledDataset,
    sample: &[usize],
    counts: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = sample.len();
    let k = counts.len();
    let total_sq: usize = counts.iter().map(|c| c * c).sum();
    let mut best: Option<SplitChoice> = None;
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; k];
    let mut right = vec![0usize; k];

    for feature in 0..data.feature_ids.len() {
        column.clear();
        column.extend(sample.iter().map(|&i| (data.rows[i][feature], data.labels[i])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        if column[0].0 == column[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(counts);
        let (mut sq_left, mut sq_right) = (0usize, total_sq);
        for pos in 0..n - 1 {
            let c = column[pos].1;
            sq_left += 2 * left[c] + 1;
            left[c] += 1;
            sq_right -= 2 * right[c] - 1;
            right[c] -= 1;
            let (v, next) = (column[pos].0, column[pos + 1].0);
            let n_left = pos + 1;
            let n_right = n - n_left;
            if v == next || n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            // n_l * gini_l + n_r * gini_r
            let impurity = (n_left as f64 - sq_left as f64 / n_left as f64)
                + (n_right as f64 - sq_right as f64 / n_right as f64);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = v + (next - v) / 2.0;
                let threshold = if mid < next { mid } else { v };
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
    }
    best
}

impl Classifier for DecisionTree {
    fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(c) => return c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaggedConfig {
    pub n_trees: usize,
    #[serde(flatten)]
    pub tree: TreeConfig,
}

impl Default for BaggedConfig {
    fn default() -> Self {
        BaggedConfig {
            n_trees: 100,
            tree: TreeConfig::default(),
        }
    }
}

/// Bootstrap-aggregated trees with majority vote (ties to the smallest class).
#[derive(Debug, Clone)]
pub struct BaggedTrees {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl BaggedTrees {
    pub fn fit(data: &LabeledDataset, config: BaggedConfig, seed: u64) -> Result<Self> {
        require_two_classes(data)?;
        if config.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        let n = data.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::rng(rng::derive(seed, &[t as u64]));
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit(data, &sample, config.tree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BaggedTrees {
            trees,
            n_classes: data.n_classes(),
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl Classifier for BaggedTrees {
    fn predict(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        argmax_smallest(&votes)
    }
}

fn require_two_classes(data: &LabeledDataset) -> Result<()> {
    let mut seen = vec![false; data.n_classes()];
    for &l in &data.labels {
        seen[l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::validation("training data must contain at least 2 classes"));
    }
    Ok(())
}

/// Column means and standard deviations from training rows; zero spread
/// columns divide by 1.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Knn {
    k: usize,
    scaler: Standardizer,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Knn {
    pub fn fit(data: &LabeledDataset, k: usize) -> Result<Self> {
        require_two_classes(data)?;
        if k == 0 || k > data.len() {
            return Err(Error::invalid(format!(
                "k = {k} must be between 1 and the training size {}",
                data.len()
            )));
        }
        let scaler = Standardizer::fit(&data.rows);
        Ok(Knn {
            k,
            rows: data.rows.iter().map(|r| scaler.apply(r)).collect(),
            scaler,
            labels: data.labels.clone(),
            n_classes: data.n_classes(),
        })
    }
}

impl Classifier for Knn {
    fn predict(&self, row: &[f64]) -> usize {
        let q = self.scaler.apply(row);
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in &dist[..self.k] {
            votes[self.labels[i]] += 1;
        }
        argmax_smallest(&votes)
    }
}

pub const GNB_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GaussianNb {
    scaler: Standardizer,
    // per class: (log prior, means, variances); None for classes absent from training
    classes: Vec<Option<(f64, Vec<f64>, Vec<f64>)>>,
}

impl GaussianNb {
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        require_two_classes(data)?;
        let scaler = Standardizer::fit(&data.rows);
        let z: Vec<Vec<f64>> = data.rows.iter().map(|r| scaler.apply(r)).collect();
        let d = data.feature_ids.len();
        let n = data.len() as f64;
        let classes = data
            .rows_by_class()
            .into_iter()
            .map(|rows| {
                if rows.is_empty() {
                    return None;
                }
                let m = rows.len() as f64;
                let mut mean = vec![0.0; d];
                for &i in &rows {
                    for (a, v) in mean.iter_mut().zip(&z[i]) {
                        *a += v / m;
                    }
                }
                let mut var = vec![0.0; d];
                for &i in &rows {
                    for ((a, v), mu) in var.iter_mut().zip(&z[i]).zip(&mean) {
                        *a += (v - mu).powi(2) / m;
                    }
                }
                var.iter_mut().for_each(|v| *v = v.max(GNB_VAR_FLOOR));
                Some(((m / n).ln(), mean, var))
            })
            .collect();
        Ok(GaussianNb { scaler, classes })
    }
}

impl Classifier for GaussianNb {
    fn predict(&self, row: &[f64]) -> usize {
        let z = self.scaler.apply(row);
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, params) in self.classes.iter().enumerate() {
            let Some((prior, mean, var)) = params else { continue };
            let ll: f64 = z
                .iter()
                .zip(mean)
                .zip(var)
                .map(|((x, m), v)| -0.5 * ((x - m).powi(2) / v + v.ln()))
                .sum();
            if prior + ll > best.0 {
                best = (prior + ll, c);
            }
        }
        best.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Bagged(BaggedConfig),
    Knn { k: usize },
    Gnb,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Bagged(BaggedConfig::default())
    }
}

impl ClassifierConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierConfig::Bagged(_) => "bagged",
            ClassifierConfig::Knn { .. } => "knn",
            ClassifierConfig::Gnb => "gnb",
        }
    }
}

pub fn train(data: &LabeledDataset, config: &ClassifierConfig, seed: u64) -> Result<Box<dyn Classifier>> {
    Ok(match *config {
        ClassifierConfig::Bagged(c) => Box::new(BaggedTrees::fit(data, c, seed)?),
        ClassifierConfig::Knn { k } => Box::new(Knn::fit(data, k)?),
        ClassifierConfig::Gnb => Box::new(GaussianNb::fit(data)?),
    })
}

/// Per-class true positive, false positive and false negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ConfusionCounts {
    pub fn new(n_classes: usize) -> Self {
        ConfusionCounts {
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            fn_: vec![0; n_classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        if truth == predicted {
            self.tp[truth] += 1;
        } else {
            self.fn_[truth] += 1;
            self.fp[predicted] += 1;
        }
    }

    pub fn from_predictions(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut c = ConfusionCounts::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            c.record(t, p);
        }
        c
    }

    pub fn metrics(&self) -> Metrics {
        Metrics::from_counts(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl ClassMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ClassMetrics {
            precision,
            recall,
            f_score: harmonic(precision, recall),
        }
    }
}

/// Per-class metrics and their class-averaged summary; `avg_f` is the
/// harmonic mean of `avg_precision` and `avg_recall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f: f64,
}

impl Metrics {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let per_class: Vec<ClassMetrics> = (0..c.tp.len())
            .map(|i| ClassMetrics::from_counts(c.tp[i], c.fp[i], c.fn_[i]))
            .collect();
        let n = per_class.len().max(1) as f64;
        let avg_precision = per_class.iter().map(|m| m.precision).sum::<f64>() / n;
        let avg_recall = per_class.iter().map(|m| m.recall).sum::<f64>() / n;
        Metrics {
            per_class,
            avg_precision,
            avg_recall,
            avg_f: harmonic(avg_precision, avg_recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub repetitions: usize,
    pub seed: u64,
    pub split: SplitRule,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            repetitions: 10,
            seed: 0,
            split: SplitRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionMetrics {
    pub seed: u64,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f: f64,
}

/// Averages over repetitions. `avg_f` is the mean of the per-repetition
/// F-scores, each the harmonic mean of that repetition's averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub n_classes: usize,
    pub n_features: usize,
    pub repetitions: usize,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f: f64,
    /// Normal-approximation 95% half-width of `avg_f` over repetitions.
    pub avg_f_ci95: f64,
    pub per_class: Vec<ClassReport>,
    pub per_repetition: Vec<RepetitionMetrics>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "classifier,n_classes,n_features,repetitions,avg_precision,avg_recall,avg_f,avg_f_ci95";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.classifier,
            self.n_classes,
            self.n_features,
            self.repetitions,
            self.avg_precision,
            self.avg_recall,
            self.avg_f,
            self.avg_f_ci95
        )
    }
}

/// One split / train / predict round.
pub fn run_repetition(
    data: &LabeledDataset,
    config: &ClassifierConfig,
    split_rule: SplitRule,
    seed: u64,
) -> Result<Metrics> {
    let (train_idx, test_idx) = split(data, split_rule, rng::derive(seed, &[0]))?;
    let train_set = data.subset(&train_idx);
    let model = train(&train_set, config, rng::derive(seed, &[1]))?;
    let mut counts = ConfusionCounts::new(data.n_classes());
    for &i in &test_idx {
        counts.record(data.labels[i], model.predict(&data.rows[i]));
    }
    Ok(counts.metrics())
}

/// Repeated random-split evaluation. Deterministic for a fixed seed.
pub fn evaluate(data: &LabeledDataset, config: &ClassifierConfig, options: EvalOptions) -> Result<EvalReport> {
    if options.repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    let seeds: Vec<u64> = (0..options.repetitions)
        .map(|r| rng::derive(options.seed, &[r as u64]))
        .collect();
    let reps = seeds
        .par_iter()
        .map(|&s| run_repetition(data, config, options.split, s))
        .collect::<Result<Vec<_>>>()?;

    let r = reps.len() as f64;
    let mean_of = |f: &dyn Fn(&Metrics) -> f64| reps.iter().map(f).sum::<f64>() / r;
    let avg_f = mean_of(&|m| m.avg_f);
    let ci = if reps.len() > 1 {
        let var = reps.iter().map(|m| (m.avg_f - avg_f).powi(2)).sum::<f64>() / (r - 1.0);
        1.96 * (var / r).sqrt()
    } else {
        0.0
    };
    let per_class = data
        .classes
        .iter()
        .enumerate()
        .map(|(c, name)| ClassReport {
            class: name.clone(),
            precision: mean_of(&|m| m.per_class[c].precision),
            recall: mean_of(&|m| m.per_class[c].recall),
            f_score: mean_of(&|m| m.per_class[c].f_score),
        })
        .collect();
    Ok(EvalReport {
        classifier: config.name().to_string(),
        n_classes: data.n_classes(),
        n_features: data.feature_ids.len(),
        repetitions: reps.len(),
        avg_precision: mean_of(&|m| m.avg_precision),
        avg_recall: mean_of(&|m| m.avg_recall),
        avg_f,
        avg_f_ci95: ci,
        per_class,
        per_repetition: reps
            .iter()
            .zip(&seeds)
            .map(|(m, &seed)| RepetitionMetrics {
                seed,
                avg_precision: m.avg_precision,
                avg_recall: m.avg_recall,
                avg_f: m.avg_f,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::feature_ids;
    use crate::preprocess::StreamKind;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> LabeledDataset {
        let d = rows[0].len();
        let ids = feature_ids(&StreamKind::ALL)[..d].to_vec();
        let k = labels.iter().max().unwrap() + 1;
        LabeledDataset::new(ids, rows, labels, (0..k).map(|c| format!("dev{c:02}")).collect()).unwrap()
    }

    fn classes_of(n: &[usize]) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &count) in n.iter().enumerate() {
            for i in 0..count {
                rows.push(vec![c as f64 * 10.0 + i as f64 * 0.1]);
                labels.push(c);
            }
        }
        dataset(rows, labels)
    }

    #[test]
    fn split_sizes() {
        let d = classes_of(&[10, 5]);
        let (train, test) = split_50_50(&d, 3).unwrap();
        let count = |idx: &[usize], c| idx.iter().filter(|&&i| d.labels[i] == c).count();
        assert_eq!((count(&train, 0), count(&test, 0)), (5, 5));
        assert_eq!((count(&train, 1), count(&test, 1)), (3, 2));
        assert_eq!(split_50_50(&d, 3).unwrap(), (train, test));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let d = classes_of(&[4, 1]);
        match split_50_50(&d, 0) {
            Err(Error::Validation(msg)) => assert!(msg.contains("dev01"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn per_class_split() {
        let d = classes_of(&[10, 10]);
        let (train, test) = split(&d, SplitRule::PerClass(2), 1).unwrap();
        assert_eq!((train.len(), test.len()), (4, 16));
        assert!(split(&d, SplitRule::PerClass(10), 1).is_err());
    }

    #[test]
    fn stump_predicts_majority() {
        let d = classes_of(&[7, 3]);
        let cfg = BaggedConfig {
            n_trees: 1,
            tree: TreeConfig { max_depth: Some(0), min_leaf: 1 },
        };
        let model = BaggedTrees::fit(&d, cfg, 11).unwrap();
        assert_eq!(model.trees()[0].depth(), 0);
        let first = model.predict(&[0.0]);
        for q in [-5.0, 0.3, 10.0, 100.0] {
            assert_eq!(model.predict(&[q]), first);
        }
    }

    #[test]
    fn single_tree_ensemble_matches_tree() {
        let d = classes_of(&[6, 6, 6]);
        let cfg = BaggedConfig { n_trees: 1, ..Default::default() };
        let model = BaggedTrees::fit(&d, cfg, 5).unwrap();
        for q in -10..40 {
            let q = [q as f64];
            assert_eq!(model.predict(&q), model.trees()[0].predict(&q));
        }
    }

    #[test]
    fn tree_separates_with_margin() {
        let d = classes_of(&[8, 8]);
        let tree = DecisionTree::fit(&d, &(0..16).collect::<Vec<_>>(), TreeConfig::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.predict(&[0.35]), 0);
        assert_eq!(tree.predict(&[10.35]), 1);
    }

    #[test]
    fn single_class_training_rejected() {
        let d = dataset(vec![vec![0.0], vec![1.0]], vec![0, 0]);
        assert!(BaggedTrees::fit(&d, BaggedConfig::default(), 0).is_err());
        assert!(Knn::fit(&d, 1).is_err());
        assert!(GaussianNb::fit(&d).is_err());
    }

    #[test]
    fn knn_cases() {
        let d = classes_of(&[3, 5]);
        let one = Knn::fit(&d, 1).unwrap();
        for (row, &label) in d.rows.iter().zip(&d.labels) {
            assert_eq!(one.predict(row), label);
        }
        let all = Knn::fit(&d, d.len()).unwrap();
        assert_eq!(all.predict(&[0.0]), 1);
        assert!(Knn::fit(&d, d.len() + 1).is_err());
    }

    #[test]
    fn metric_arithmetic() {
        let m = ClassMetrics::from_counts(3, 1, 2);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f_score - 2.0 * 0.45 / 1.35).abs() < 1e-15);
        assert!((harmonic(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-15);
        assert_eq!(ClassMetrics::from_counts(0, 0, 0).f_score, 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let truth = [0, 1, 2, 2, 1];
        let m = ConfusionCounts::from_predictions(3, &truth, &truth).metrics();
        assert_eq!((m.avg_precision, m.avg_recall, m.avg_f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn evaluate_is_deterministic() {
        let d = classes_of(&[6, 6, 6]);
        let cfg = ClassifierConfig::Bagged(BaggedConfig { n_trees: 10, ..Default::default() });
        let opts = EvalOptions { repetitions: 4, seed: 9, ..Default::default() };
        let a = evaluate(&d, &cfg, opts).unwrap();
        let b = evaluate(&d, &cfg, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.avg_f, 1.0);
    }

    #[test]
    fn restrict_renumbers() {
        let d = classes_of(&[2, 2, 2]);
        let r = d.restrict_classes(&["dev02".into(), "dev00".into()]).unwrap();
        assert_eq!(r.classes, vec!["dev00", "dev02"]);
        assert_eq!(r.labels, vec![0, 0, 1, 1]);
    }
}
