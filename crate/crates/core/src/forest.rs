//! Axis-aligned decision trees with a leaf budget, and forests of them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Impurity decreases at or below `SPLIT_EPS * n` are rounding noise.
const SPLIT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// `x` goes left iff `x[feature] <= threshold`.
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: usize,
        #[serde(rename = "r")]
        right: usize,
    },
    Leaf {
        #[serde(rename = "p")]
        prediction: Vec<f64>,
    },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// A binary tree stored as a node array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeDoc")]
pub struct Tree {
    nodes: Vec<Node>,
    root: usize,
    #[serde(skip)]
    leaves: Vec<usize>,
}

#[derive(Deserialize)]
struct TreeDoc {
    nodes: Vec<Node>,
    root: usize,
}

impl TryFrom<TreeDoc> for Tree {
    type Error = Error;

    fn try_from(doc: TreeDoc) -> Result<Self> {
        Tree::from_nodes(doc.nodes, doc.root)
    }
}

impl Tree {
    /// Build a tree from raw nodes, checking that they form a proper binary
    /// tree rooted at `root`.
    pub fn from_nodes(nodes: Vec<Node>, root: usize) -> Result<Self> {
        let n = nodes.len();
        if root >= n {
            return Err(Error::InvalidForest(format!("root {root} out of range for {n} nodes")));
        }
        let mut parents = vec![0usize; n];
        for node in &nodes {
            if let Node::Split { left, right, .. } = *node {
                for child in [left, right] {
                    if child >= n {
                        return Err(Error::InvalidForest(format!("child index {child} out of range")));
                    }
                    parents[child] += 1;
                }
            }
        }
        if parents[root] != 0 {
            return Err(Error::InvalidForest("root has a parent".into()));
        }
        if let Some(i) = (0..n).find(|&i| i != root && parents[i] != 1) {
            return Err(Error::InvalidForest(format!("node {i} has {} parents", parents[i])));
        }
        // Unique parents plus full reachability rules out cycles.
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        let mut visited = 0;
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidForest("cycle in node graph".into()));
            }
            visited += 1;
            if let Node::Split { left, right, .. } = nodes[i] {
                stack.push(right);
                stack.push(left);
            }
        }
        if visited != n {
            return Err(Error::InvalidForest(format!("{} nodes unreachable from root", n - visited)));
        }
        let leaves = (0..n).filter(|&i| nodes[i].is_leaf()).collect();
        Ok(Tree { nodes, root, leaves })
    }

    /// A tree consisting of one leaf.
    pub fn leaf(prediction: Vec<f64>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { prediction }],
            root: 0,
            leaves: vec![0],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Node indices of the leaves, in node-array order.
    pub fn leaf_nodes(&self) -> &[usize] {
        &self.leaves
    }

    /// Index of the leaf node `x` is routed to.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// Position of the leaf `x` reaches within [`Tree::leaf_nodes`].
    pub fn leaf_slot(&self, x: &[f64]) -> usize {
        let node = self.leaf_index(x);
        self.leaves.binary_search(&node).expect("leaf_index returns a leaf")
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { prediction } => prediction,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaf_prediction(&self, node: usize) -> &[f64] {
        match &self.nodes[node] {
            Node::Leaf { prediction } => prediction,
            Node::Split { .. } => panic!("node {node} is not a leaf"),
        }
    }

    pub fn leaf_prediction_mut(&mut self, node: usize) -> &mut [f64] {
        match &mut self.nodes[node] {
            Node::Leaf { prediction } => prediction,
            Node::Split { .. } => panic!("node {node} is not a leaf"),
        }
    }

    fn validate(&self, n_classes: usize, n_features: usize) -> Result<()> {
        for node in &self.nodes {
            match node {
                Node::Split {
                    feature, threshold, ..
                } => {
                    if *feature >= n_features {
                        return Err(Error::InvalidForest(format!(
                            "split on feature {feature} but forest has {n_features} features"
                        )));
                    }
                    if threshold.is_nan() {
                        return Err(Error::InvalidForest("NaN threshold".into()));
                    }
                }
                Node::Leaf { prediction } => {
                    if prediction.len() != n_classes {
                        return Err(Error::InvalidForest(format!(
                            "leaf of length {} in a {n_classes}-class forest",
                            prediction.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Candidate split of one frontier node.
struct SplitCandidate {
    decrease: f64,
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Frontier {
    node: usize,
    split: SplitCandidate,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Max-heap: largest decrease first, then lowest node index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .decrease
            .total_cmp(&other.split.decrease)
            .then_with(|| other.node.cmp(&self.node))
    }
}

fn class_counts(dataset: &Dataset, sample: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; dataset.n_classes()];
    for &r in sample {
        counts[dataset.class(r)] += 1;
    }
    counts
}

fn frequencies(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Sum of squared counts divided by total; the weighted Gini impurity of a
/// node is `n - sum_sq_over_n`.
fn sum_sq_over_n(counts: &[usize], n: usize) -> f64 {
    counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

fn best_split<R: Rng>(
    dataset: &Dataset,
    sample: &[usize],
    features_per_split: usize,
    rng: &mut R,
) -> Option<SplitCandidate> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let totals = class_counts(dataset, sample);
    if totals.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let parent_term = sum_sq_over_n(&totals, n);

    let mut features = index::sample(rng, dataset.n_features(), features_per_split).into_vec();
    features.sort_unstable();

    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut left = vec![0usize; totals.len()];
    for &feature in &features {
        sorted.clear();
        sorted.extend(sample.iter().map(|&r| (dataset.row(r)[feature], dataset.class(r))));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        left.iter_mut().for_each(|c| *c = 0);
        for i in 0..n - 1 {
            left[sorted[i].1] += 1;
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            let left_term = sum_sq_over_n(&left, n_left);
            let right_sq: f64 = totals
                .iter()
                .zip(&left)
                .map(|(&t, &l)| ((t - l) * (t - l)) as f64)
                .sum();
            let decrease = left_term + right_sq / n_right as f64 - parent_term;
            if best.is_none_or(|(d, _, _)| decrease > d) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if !(threshold >= lo && threshold < hi) {
                    threshold = lo;
                }
                best = Some((decrease, feature, threshold));
            }
        }
    }

    let (decrease, feature, threshold) = best?;
    if decrease <= SPLIT_EPS * n as f64 {
        return None;
    }
    let (left, right) = sample
        .iter()
        .partition(|&&r| dataset.row(r)[feature] <= threshold);
    Some(SplitCandidate {
        decrease,
        feature,
        threshold,
        left,
        right,
    })
}

/// Grow one tree best-first on `sample` (row indices, duplicates allowed).
///
/// The frontier leaf whose best split removes the most weighted Gini
/// impurity is expanded until the tree has `max_leaves` leaves or no
/// frontier leaf has a split with positive decrease. Each leaf predicts the
/// class frequencies of the samples reaching it.
pub fn train_tree<R: Rng>(
    dataset: &Dataset,
    sample: &[usize],
    max_leaves: usize,
    features_per_split: usize,
    rng: &mut R,
) -> Result<Tree> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    dataset.check_rows(sample)?;
    if max_leaves == 0 {
        return Err(Error::InvalidConfig("max_leaves must be at least 1".into()));
    }
    if features_per_split == 0 || features_per_split > dataset.n_features() {
        return Err(Error::InvalidConfig(format!(
            "features_per_split={features_per_split} outside 1..={}",
            dataset.n_features()
        )));
    }

    let mut nodes = vec![Node::Leaf {
        prediction: frequencies(&class_counts(dataset, sample)),
    }];
    let mut frontier = BinaryHeap::new();
    let mut n_leaves = 1;
    if max_leaves > 1 {
        if let Some(split) = best_split(dataset, sample, features_per_split, rng) {
            frontier.push(Frontier { node: 0, split });
        }
    }

    while n_leaves < max_leaves {
        let Some(Frontier { node, split }) = frontier.pop() else {
            break;
        };
        let mut children = [0usize; 2];
        for (slot, rows) in [split.left, split.right].into_iter().enumerate() {
            let child = nodes.len();
            children[slot] = child;
            nodes.push(Node::Leaf {
                prediction: frequencies(&class_counts(dataset, &rows)),
            });
            if let Some(child_split) = best_split(dataset, &rows, features_per_split, rng) {
                frontier.push(Frontier {
                    node: child,
                    split: child_split,
                });
            }
        }
        nodes[node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: children[0],
            right: children[1],
        };
        n_leaves += 1;
    }

    Tree::from_nodes(nodes, 0)
}

/// Random-forest training parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_leaves: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    #[serde(default)]
    pub features_per_split: Option<usize>,
}

impl ForestConfig {
    pub fn new(n_trees: usize, max_leaves: usize) -> Self {
        Self {
            n_trees,
            max_leaves,
            features_per_split: None,
        }
    }
}

/// `ceil(sqrt(d))`.
pub fn default_features_per_split(n_features: usize) -> usize {
    let mut m = (n_features as f64).sqrt().ceil() as usize;
    while m * m < n_features {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) >= n_features {
        m -= 1;
    }
    m.clamp(1, n_features.max(1))
}

/// Ensemble of trees with per-tree weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForestDoc")]
pub struct Forest {
    n_classes: usize,
    n_features: usize,
    trees: Vec<Tree>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct ForestDoc {
    n_classes: usize,
    n_features: usize,
    trees: Vec<Tree>,
    weights: Vec<f64>,
}

impl TryFrom<ForestDoc> for Forest {
    type Error = Error;

    fn try_from(doc: ForestDoc) -> Result<Self> {
        Forest::with_weights(doc.trees, doc.weights, doc.n_classes, doc.n_features)
    }
}

impl Forest {
    /// Forest with uniform weights `1/M`.
    pub fn new(trees: Vec<Tree>, n_classes: usize, n_features: usize) -> Result<Self> {
        let m = trees.len();
        Self::with_weights(trees, vec![1.0 / m as f64; m], n_classes, n_features)
    }

    pub fn with_weights(trees: Vec<Tree>, weights: Vec<f64>, n_classes: usize, n_features: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidForest("no trees".into()));
        }
        if weights.len() != trees.len() {
            return Err(Error::InvalidForest(format!(
                "{} weights for {} trees",
                weights.len(),
                trees.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        for (i, tree) in trees.iter().enumerate() {
            tree.validate(n_classes, n_features)
                .map_err(|e| e.context(format!("tree {i}")))?;
        }
        Ok(Forest {
            n_classes,
            n_features,
            trees,
            weights,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, i: usize) -> &Tree {
        &self.trees[i]
    }

    pub fn tree_mut(&mut self, i: usize) -> &mut Tree {
        &mut self.trees[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.trees.len() {
            return Err(Error::InvalidForest("weight vector length differs from tree count".into()));
        }
        self.weights = weights;
        Ok(())
    }

    /// Subset covering every tree.
    pub fn all(&self) -> Subset {
        Subset::all(self.n_trees())
    }

    /// Average of the subset's tree outputs, summed in ascending tree order.
    pub fn predict(&self, subset: &Subset, x: &[f64]) -> Result<Vec<f64>> {
        self.check_subset(subset)?;
        self.check_dim(x)?;
        let mut out = vec![0.0; self.n_classes];
        self.predict_into(subset, x, &mut out);
        Ok(out)
    }

    /// [`Forest::predict`] without argument checks.
    pub fn predict_into(&self, subset: &Subset, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &i in subset.indices() {
            for (o, p) in out.iter_mut().zip(self.trees[i].predict(x)) {
                *o += p;
            }
        }
        let k = subset.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }

    /// `sum_i w_i h_i(x)` over all trees with the stored weights.
    pub fn predict_weighted(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.n_classes];
        for (tree, &w) in self.trees.iter().zip(&self.weights) {
            for (o, p) in out.iter_mut().zip(tree.predict(x)) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// Fraction of `rows` whose predicted class matches the label.
    pub fn accuracy(&self, subset: &Subset, dataset: &Dataset, rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::EmptyRows);
        }
        self.check_subset(subset)?;
        self.check_dataset(dataset)?;
        dataset.check_rows(rows)?;
        let mut out = vec![0.0; self.n_classes];
        let correct = rows
            .iter()
            .filter(|&&r| {
                self.predict_into(subset, dataset.row(r), &mut out);
                argmax(&out) == dataset.class(r)
            })
            .count();
        Ok(correct as f64 / rows.len() as f64)
    }

    /// Total node count over the subset's trees.
    pub fn node_count(&self, subset: &Subset) -> usize {
        subset.indices().iter().map(|&i| self.trees[i].n_nodes()).sum()
    }

    pub fn check_subset(&self, subset: &Subset) -> Result<()> {
        match subset.indices().last() {
            Some(&index) if index >= self.n_trees() => Err(Error::TreeIndex {
                index,
                n_trees: self.n_trees(),
            }),
            Some(_) => Ok(()),
            None => Err(Error::EmptySubset),
        }
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: dataset.n_features(),
            });
        }
        if dataset.n_classes() != self.n_classes {
            return Err(Error::InvalidDataset(format!(
                "dataset has {} classes, forest has {}",
                dataset.n_classes(),
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Sorted, duplicate-free, non-empty set of tree indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut indices: Vec<usize>, n_trees: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySubset);
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateTree(w[0]));
        }
        let last = *indices.last().unwrap();
        if last >= n_trees {
            return Err(Error::TreeIndex { index: last, n_trees });
        }
        Ok(Subset(indices))
    }

    pub fn all(n_trees: usize) -> Self {
        Subset((0..n_trees).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tree: usize) -> bool {
        self.0.binary_search(&tree).is_ok()
    }
}

/// Train a random forest on `train_rows`: every tree sees a bootstrap
/// resample of the rows and draws `ceil(sqrt(d))` candidate features per
/// split. Tree `i` uses random stream `i` of `seed`, so the forest does not
/// depend on the thread schedule.
pub fn train_forest(
    dataset: &Dataset,
    train_rows: &[usize],
    n_trees: usize,
    max_leaves: usize,
    seed: u64,
) -> Result<Forest> {
    train_forest_with(dataset, train_rows, &ForestConfig::new(n_trees, max_leaves), seed)
}

pub fn train_forest_with(dataset: &Dataset, train_rows: &[usize], config: &ForestConfig, seed: u64) -> Result<Forest> {
    if train_rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("forest needs at least one tree".into()));
    }
    dataset.check_rows(train_rows)?;
    let features_per_split = config
        .features_per_split
        .unwrap_or_else(|| default_features_per_split(dataset.n_features()));
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let n = train_rows.len();
            let sample: Vec<usize> = (0..n).map(|_| train_rows[rng.random_range(0..n)]).collect();
            train_tree(dataset, &sample, config.max_leaves, features_per_split, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Forest::new(trees, dataset.n_classes(), dataset.n_features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn ds(rows: Vec<Vec<f64>>, classes: Vec<usize>, c: usize) -> Dataset {
        let d = rows[0].len();
        Dataset::new(rows, classes, c, (0..d).map(|j| format!("f{j}")).collect()).unwrap()
    }

    fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        }
    }

    fn leaf(p: &[f64]) -> Node {
        Node::Leaf { prediction: p.to_vec() }
    }

    #[test]
    fn pure_sample_gives_single_leaf() {
        let d = ds(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1, 1, 1], 3);
        let tree = train_tree(&d, &[0, 1, 2], 8, 1, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.leaf_prediction(0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn leaf_budget_of_one_keeps_root_leaf() {
        let d = ds(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 1, 1], 2);
        let tree = train_tree(&d, &[0, 1, 2, 3], 1, 1, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.leaf_prediction(0), [0.25, 0.75]);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![0, 1], 2);
        let tree = train_tree(&d, &[0, 1], 2, 1, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.nodes()[0], split(0, 0.5, 1, 2));
        assert_eq!(tree.predict(&[0.0]), [1.0, 0.0]);
        assert_eq!(tree.predict(&[1.0]), [0.0, 1.0]);
        let forest = Forest::new(vec![tree], 2, 1).unwrap();
        assert_eq!(forest.accuracy(&forest.all(), &d, &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn threshold_ties_prefer_lower_feature_and_threshold() {
        // Both features separate the classes identically.
        let d = ds(vec![vec![0.0, 5.0], vec![1.0, 6.0]], vec![0, 1], 2);
        let tree = train_tree(&d, &[0, 1], 2, 2, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(tree.nodes()[0], split(0, 0.5, 1, 2));
        // Splits at 0.5 and 2.5 are equally good.
        let d = ds(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 1, 0], 2);
        let tree = train_tree(&d, &[0, 1, 2, 3], 2, 1, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(tree.nodes()[0], split(0, 0.5, 1, 2));
    }

    #[test]
    fn no_positive_decrease_stops_growth() {
        // Identical feature values: no threshold exists.
        let d = ds(vec![vec![1.0], vec![1.0]], vec![0, 1], 2);
        let tree = train_tree(&d, &[0, 1], 4, 1, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(tree.n_nodes(), 1);
    }

    #[test]
    fn train_tree_rejects_empty_sample() {
        let d = ds(vec![vec![1.0], vec![2.0]], vec![0, 1], 2);
        assert!(matches!(
            train_tree(&d, &[], 4, 1, &mut stream_rng(0, 0)),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn predict_averages_subset() {
        let trees = vec![
            Tree::leaf(vec![1.0, 0.0]),
            Tree::leaf(vec![0.0, 1.0]),
            Tree::leaf(vec![1.0, 0.0]),
        ];
        let forest = Forest::new(trees, 2, 1).unwrap();
        let p = forest.predict(&forest.all(), &[0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(argmax(&p), 0);
        let one = Subset::new(vec![1], 3).unwrap();
        assert_eq!(forest.predict(&one, &[0.0]).unwrap(), [0.0, 1.0]);
        assert!(matches!(
            forest.predict(&forest.all(), &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_tie_breaks_to_lowest_class() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![1, 1], 2);
        let forest = Forest::new(vec![Tree::leaf(vec![0.5, 0.5])], 2, 1).unwrap();
        assert_eq!(forest.accuracy(&forest.all(), &d, &[0, 1]).unwrap(), 0.0);
        assert!(matches!(forest.accuracy(&forest.all(), &d, &[]), Err(Error::EmptyRows)));
    }

    #[test]
    fn accuracy_on_hand_fixture() {
        // x <= 1.5 -> class 0, else class 1; rows 1 and 3 are misclassified.
        let tree = Tree::from_nodes(vec![split(0, 1.5, 1, 2), leaf(&[0.9, 0.1]), leaf(&[0.2, 0.8])], 0).unwrap();
        let forest = Forest::new(vec![tree], 2, 1).unwrap();
        let d = ds(vec![vec![1.0], vec![1.5], vec![2.0], vec![3.0]], vec![0, 1, 1, 0], 2);
        assert_eq!(forest.accuracy(&forest.all(), &d, &d.all_rows()).unwrap(), 0.5);
    }

    #[test]
    fn subset_validation() {
        assert!(matches!(Subset::new(vec![], 3), Err(Error::EmptySubset)));
        assert!(matches!(Subset::new(vec![1, 1], 3), Err(Error::DuplicateTree(1))));
        assert!(matches!(Subset::new(vec![3], 3), Err(Error::TreeIndex { .. })));
        assert_eq!(Subset::new(vec![2, 0], 3).unwrap().indices(), [0, 2]);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        // child out of range
        assert!(Tree::from_nodes(vec![split(0, 0.0, 1, 5), leaf(&[1.0, 0.0])], 0).is_err());
        // shared child
        assert!(Tree::from_nodes(vec![split(0, 0.0, 1, 1), leaf(&[1.0, 0.0])], 0).is_err());
        // detached cycle
        let nodes = vec![leaf(&[1.0, 0.0]), split(0, 0.0, 2, 3), split(0, 0.0, 1, 4), leaf(&[1.0, 0.0]), leaf(&[0.0, 1.0])];
        assert!(Tree::from_nodes(nodes, 0).is_err());
    }

    #[test]
    fn json_node_encoding() {
        let tree = Tree::from_nodes(vec![split(0, 0.5, 1, 2), leaf(&[1.0, 0.0]), leaf(&[0.0, 1.0])], 0).unwrap();
        let forest = Forest::new(vec![tree], 2, 1).unwrap();
        let json = forest.to_json().unwrap();
        assert!(json.contains(r#"{"split":{"f":0,"t":0.5,"l":1,"r":2}}"#), "{json}");
        assert!(json.contains(r#"{"leaf":{"p":[1.0,0.0]}}"#), "{json}");
        let back = Forest::from_json(&json).unwrap();
        assert_eq!(back, forest);
        assert_eq!(back.tree(0).n_leaves(), 2);
    }

    #[test]
    fn json_rejects_wrong_leaf_length() {
        let doc = r#"{"n_classes":3,"n_features":1,"trees":[{"nodes":[{"leaf":{"p":[1.0,0.0]}}],"root":0}],"weights":[1.0]}"#;
        assert!(Forest::from_json(doc).is_err());
    }

    #[test]
    fn default_feature_count_is_ceil_sqrt() {
        let got: Vec<usize> = [1, 2, 4, 5, 9, 10, 16, 17].iter().map(|&d| default_features_per_split(d)).collect();
        assert_eq!(got, [1, 2, 2, 3, 3, 4, 4, 5]);
    }
}
