//! Real-versus-synthetic discrimination: how well a classifier tells the two
//! tables apart. Scores are reported as complements, so higher means the
//! synthetic rows are harder to detect.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::table::{ColumnKind, DataTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    /// Five nearest neighbours after nearest-neighbour imputation.
    Knn5,
    /// Gradient-boosted depth-limited trees that route missing values along a
    /// learned default branch.
    BoostedTrees,
}

impl Classifier {
    pub const ALL: [Classifier; 2] = [Classifier::Knn5, Classifier::BoostedTrees];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Knn5 => "knn5",
            Classifier::BoostedTrees => "boosted_trees",
        }
    }
}

/// Gradient boosting settings for the logistic loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostOptions {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Smallest hessian sum allowed in a child.
    pub min_child_weight: f64,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficacyOptions {
    /// Share of each class used for training.
    pub train_fraction: f64,
    /// Neighbours for both imputation and classification.
    pub k: usize,
    pub boost: BoostOptions,
}

impl Default for EfficacyOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            k: 5,
            boost: BoostOptions::default(),
        }
    }
}

/// Test-set scores with "synthetic" as the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EfficacyScores {
    /// Scores from predicted and true labels. Precision is zero when nothing
    /// is predicted positive, and F1 is zero when precision and recall are.
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Self {
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        }
    }

    pub fn complement(&self) -> Self {
        Self {
            accuracy: 1.0 - self.accuracy,
            precision: 1.0 - self.precision,
            recall: 1.0 - self.recall,
            f1: 1.0 - self.f1,
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ]
    }
}

/// Merged rows in a canonical order: by label, then by cell contents.
struct Merged {
    /// Row-major raw values; `NaN` where unobserved.
    rows: Vec<Vec<f64>>,
    labels: Vec<bool>,
    kinds: Vec<ColumnKind>,
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter()
        .map(|v| if v.is_nan() { u64::MAX } else { v.to_bits() })
        .collect()
}

fn merge(real: &DataTable, synth: &DataTable) -> Result<Merged> {
    if real.schema() != synth.schema() {
        return Err(Error::Metric("efficacy: schemas differ".into()));
    }
    let mut tagged: Vec<(bool, Vec<f64>)> = Vec::with_capacity(real.n_rows() + synth.n_rows());
    for (label, t) in [(false, real), (true, synth)] {
        for i in 0..t.n_rows() {
            tagged.push((label, (0..t.n_cols()).map(|j| t.get(i, j).unwrap_or(f64::NAN)).collect()));
        }
    }
    tagged.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| row_key(&a.1).cmp(&row_key(&b.1))));
    let (labels, rows) = tagged.into_iter().unzip();
    Ok(Merged {
        rows,
        labels,
        kinds: real.schema().columns().iter().map(|c| c.kind.clone()).collect(),
    })
}

/// Stratified split of canonical positions into training and test sets.
fn split(labels: &[bool], train_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        let n_train = n_train.clamp(1.min(idx.len()), idx.len().saturating_sub(1));
        test.extend_from_slice(&idx[n_train..]);
        train.extend_from_slice(&idx[..n_train]);
    }
    let has = |set: &[usize], class: bool| set.iter().any(|&i| labels[i] == class);
    if !(has(&test, false) && has(&test, true) && has(&train, false) && has(&train, true)) {
        return Err(Error::Metric("efficacy: a split fold lacks one of the classes".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Real-versus-synthetic classification scores on a held-out stratified
/// split. Both tables may contain unobserved cells.
pub fn ml_efficacy(
    real: &DataTable,
    synth: &DataTable,
    classifier: Classifier,
    options: &EfficacyOptions,
    rng: &mut Rng,
) -> Result<EfficacyScores> {
    let merged = merge(real, synth)?;
    let (train, test) = split(&merged.labels, options.train_fraction, rng)?;
    let truth: Vec<bool> = test.iter().map(|&i| merged.labels[i]).collect();
    let predicted = match classifier {
        Classifier::Knn5 => {
            let features = encode(&knn_impute(&merged, options.k), &merged.kinds);
            knn_classify(&features, &merged.labels, &train, &test, options.k)
        }
        Classifier::BoostedTrees => {
            let model = BoostedTrees::fit(&merged.rows, &merged.labels, &train, &options.boost);
            test.iter().map(|&i| model.margin(&merged.rows[i]) > 0.0).collect()
        }
    };
    Ok(EfficacyScores::from_predictions(&predicted, &truth))
}

/// Per-column standardization used by the distance: mean and sd over
/// observed values for numeric columns.
fn scales(rows: &[Vec<f64>], kinds: &[ColumnKind]) -> Vec<(f64, f64)> {
    (0..kinds.len())
        .map(|j| {
            if !kinds[j].is_numeric() {
                return (0.0, 1.0);
            }
            let v: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
            let n = v.len() as f64;
            if n < 2.0 {
                return (0.0, 1.0);
            }
            let m = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

/// Standardized numeric columns and one-hot discrete columns; `NaN` stays
/// `NaN` in every coordinate of a missing cell.
fn encode(rows: &[Vec<f64>], kinds: &[ColumnKind]) -> Vec<Vec<f64>> {
    let sc = scales(rows, kinds);
    rows.iter()
        .map(|r| {
            let mut out = Vec::new();
            for (j, kind) in kinds.iter().enumerate() {
                let v = r[j];
                match kind {
                    ColumnKind::Categorical(levels) => {
                        for l in 0..levels.len() {
                            out.push(if v.is_nan() { f64::NAN } else if v as usize == l { 1.0 } else { 0.0 });
                        }
                    }
                    ColumnKind::Binary => out.push(v),
                    _ => out.push((v - sc[j].0) / sc[j].1),
                }
            }
            out
        })
        .collect()
}

/// Squared Euclidean distance over coordinates present in both rows, scaled
/// up by the share of coordinates present. `None` when nothing is shared.
fn nan_sq_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut present = 0usize;
    for (x, y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            sum += (x - y).powi(2);
            present += 1;
        }
    }
    (present > 0).then(|| sum * a.len() as f64 / present as f64)
}

/// The `k` smallest `(distance, index)` pairs, ties broken by index.
fn k_nearest(mut candidates: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    candidates.select_nth_unstable_by(k - 1, cmp);
    candidates.truncate(k);
    candidates.sort_by(cmp);
    candidates.into_iter().map(|(_, i)| i).collect()
}

/// Fills each missing cell from the `k` nearest rows observing that column:
/// the donors' mean for numeric columns, their most common level otherwise.
fn knn_impute(m: &Merged, k: usize) -> Vec<Vec<f64>> {
    let encoded = encode(&m.rows, &m.kinds);
    let mut out = m.rows.clone();
    for (i, row) in m.rows.iter().enumerate() {
        let missing: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_nan()).collect();
        if missing.is_empty() {
            continue;
        }
        let dist: Vec<Option<f64>> = encoded
            .iter()
            .enumerate()
            .map(|(r, e)| if r == i { None } else { nan_sq_distance(&encoded[i], e) })
            .collect();
        for j in missing {
            let candidates: Vec<(f64, usize)> = (0..m.rows.len())
                .filter(|&r| !m.rows[r][j].is_nan())
                .filter_map(|r| dist[r].map(|d| (d, r)))
                .collect();
            let donors = k_nearest(candidates, k);
            if donors.is_empty() {
                continue;
            }
            let values: Vec<f64> = donors.iter().map(|&r| m.rows[r][j]).collect();
            out[i][j] = if m.kinds[j].is_numeric() {
                values.iter().sum::<f64>() / values.len() as f64
            } else {
                mode(&values)
            };
        }
    }
    out
}

/// Most frequent value; the smallest among ties.
fn mode(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut best = (v[0], 0usize);
    let mut k = 0;
    while k < v.len() {
        let end = v[k..].iter().position(|x| *x != v[k]).map_or(v.len(), |p| k + p);
        if end - k > best.1 {
            best = (v[k], end - k);
        }
        k = end;
    }
    best.0
}

fn knn_classify(features: &[Vec<f64>], labels: &[bool], train: &[usize], test: &[usize], k: usize) -> Vec<bool> {
    test.iter()
        .map(|&i| {
            let candidates = train
                .iter()
                .filter_map(|&r| nan_sq_distance(&features[i], &features[r]).map(|d| (d, r)))
                .collect();
            let nearest = k_nearest(candidates, k);
            let votes = nearest.iter().filter(|&&r| labels[r]).count();
            // Ties, possible only for even k, go to the real class.
            2 * votes > nearest.len()
        })
        .collect()
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        missing_left: bool,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn value(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf(w) => *w,
            Node::Split {
                feature,
                threshold,
                missing_left,
                left,
                right,
            } => {
                let v = row[*feature];
                let go_left = if v.is_nan() { *missing_left } else { v < *threshold };
                if go_left {
                    left.value(row)
                } else {
                    right.value(row)
                }
            }
        }
    }
}

/// Second-order boosted trees for the logistic loss.
#[derive(Clone, Debug)]
pub struct BoostedTrees {
    trees: Vec<Node>,
    learning_rate: f64,
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing_left: bool,
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    /// Per feature, training rows with an observed value, sorted by value.
    sorted: Vec<Vec<usize>>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    options: &'a BoostOptions,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.options.lambda)
    }

    fn best_split(&self, node: &[bool], g_total: f64, h_total: f64) -> Option<SplitChoice> {
        let o = self.options;
        let parent = self.score(g_total, h_total);
        let mut best: Option<SplitChoice> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let members: Vec<usize> = order.iter().copied().filter(|&i| node[i]).collect();
            if members.len() < 2 {
                continue;
            }
            let g_present: f64 = members.iter().map(|&i| self.grad[i]).sum();
            let h_present: f64 = members.iter().map(|&i| self.hess[i]).sum();
            let (g_miss, h_miss) = (g_total - g_present, h_total - h_present);
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..members.len() - 1 {
                let i = members[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let (x, next) = (self.rows[i][f], self.rows[members[w + 1]][f]);
                if x == next {
                    continue;
                }
                for missing_left in [false, true] {
                    let (gl2, hl2) = if missing_left { (gl + g_miss, hl + h_miss) } else { (gl, hl) };
                    let (gr2, hr2) = (g_total - gl2, h_total - hl2);
                    if hl2 < o.min_child_weight || hr2 < o.min_child_weight {
                        continue;
                    }
                    let gain = 0.5 * (self.score(gl2, hl2) + self.score(gr2, hr2) - parent);
                    if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(SplitChoice {
                            gain,
                            feature: f,
                            threshold: 0.5 * (x + next),
                            missing_left,
                        });
                    }
                }
            }
        }
        best
    }

    fn grow(&self, node: Vec<bool>, depth: usize) -> Node {
        let (g, h) = node
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .fold((0.0, 0.0), |(g, h), (i, _)| (g + self.grad[i], h + self.hess[i]));
        let leaf = Node::Leaf(-g / (h + self.options.lambda));
        if depth >= self.options.max_depth {
            return leaf;
        }
        let Some(choice) = self.best_split(&node, g, h) else {
            return leaf;
        };
        let mut left = vec![false; node.len()];
        let mut right = vec![false; node.len()];
        for (i, &m) in node.iter().enumerate() {
            if m {
                let v = self.rows[i][choice.feature];
                let go_left = if v.is_nan() { choice.missing_left } else { v < choice.threshold };
                if go_left {
                    left[i] = true;
                } else {
                    right[i] = true;
                }
            }
        }
        Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            missing_left: choice.missing_left,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }
}

impl BoostedTrees {
    /// Fits on the rows listed in `train`; labels `true` are the positive class.
    pub fn fit(rows: &[Vec<f64>], labels: &[bool], train: &[usize], options: &BoostOptions) -> Self {
        let n_features = rows.first().map_or(0, |r| r.len());
        let mut in_train = vec![false; rows.len()];
        for &i in train {
            in_train[i] = true;
        }
        let sorted = (0..n_features)
            .map(|f| {
                let mut idx: Vec<usize> = train.iter().copied().filter(|&i| !rows[i][f].is_nan()).collect();
                idx.sort_by(|&a, &b| rows[a][f].partial_cmp(&rows[b][f]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut margin = vec![0.0; rows.len()];
        let mut grower = Grower {
            rows,
            sorted,
            grad: vec![0.0; rows.len()],
            hess: vec![0.0; rows.len()],
            options,
        };
        let mut trees = Vec::with_capacity(options.n_trees);
        for _ in 0..options.n_trees {
            for &i in train {
                let p = crate::regression::expit(margin[i]);
                grower.grad[i] = p - if labels[i] { 1.0 } else { 0.0 };
                grower.hess[i] = (p * (1.0 - p)).max(1e-16);
            }
            let tree = grower.grow(in_train.clone(), 0);
            for &i in train {
                margin[i] += options.learning_rate * tree.value(&rows[i]);
            }
            trees.push(tree);
        }
        Self {
            trees,
            learning_rate: options.learning_rate,
        }
    }

    /// Log-odds of the positive class.
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.learning_rate * self.trees.iter().map(|t| t.value(row)).sum::<f64>()
    }
}
