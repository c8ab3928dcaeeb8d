//! Leaf refinement: mini-batch SGD on the leaf prediction vectors of a
//! fixed-structure sub-forest. Splits and tree weights are never touched.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, Subset};
use crate::pruning::{random_prune, PruneSelection};
use crate::rng::{derive_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `sum_c (f_c - y_c)^2`
    #[default]
    Mse,
}

impl Loss {
    pub fn value(self, f: &[f64], y: &[f64]) -> f64 {
        match self {
            Loss::Mse => f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Derivative with respect to `f`, written into `out`.
    pub fn gradient(self, f: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Loss::Mse => {
                for ((o, a), b) in out.iter_mut().zip(f).zip(y) {
                    *o = 2.0 * (a - b);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Constant SGD step size.
    pub step_size: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub seed: u64,
    /// One batch holding every row per epoch, in the given row order.
    pub full_batch: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            epochs: 50,
            batch_size: 128,
            loss: Loss::Mse,
            seed: 0,
            full_batch: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        // alpha = 0 is accepted so that a zero step can be checked as a no-op.
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size {} must be finite and >= 0", self.step_size)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Leaf parameters `theta_i` of the subset trees: for each tree, its leaf
/// vectors concatenated in node-array order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafParameterView {
    trees: Vec<usize>,
    theta: Vec<Vec<f64>>,
}

impl LeafParameterView {
    pub fn from_forest(forest: &Forest, subset: &Subset) -> Result<Self> {
        forest.check_subset(subset)?;
        let trees = subset.indices().to_vec();
        let theta = trees
            .iter()
            .map(|&i| {
                let tree = forest.tree(i);
                tree.leaf_nodes()
                    .iter()
                    .flat_map(|&l| tree.leaf_prediction(l).iter().copied())
                    .collect()
            })
            .collect();
        Ok(Self { trees, theta })
    }

    pub fn trees(&self) -> &[usize] {
        &self.trees
    }

    /// Parameters of the `pos`-th subset tree.
    pub fn theta(&self, pos: usize) -> &[f64] {
        &self.theta[pos]
    }

    pub fn theta_mut(&mut self, pos: usize) -> &mut [f64] {
        &mut self.theta[pos]
    }

    pub fn n_params(&self) -> usize {
        self.theta.iter().map(Vec::len).sum()
    }

    /// Copy the parameters back into the leaves they came from.
    pub fn write_to(&self, forest: &mut Forest) {
        let n_classes = forest.n_classes();
        for (&i, theta) in self.trees.iter().zip(&self.theta) {
            let tree = forest.tree_mut(i);
            let leaves = tree.leaf_nodes().to_vec();
            for (leaf, chunk) in leaves.into_iter().zip(theta.chunks(n_classes)) {
                tree.leaf_prediction_mut(leaf).copy_from_slice(chunk);
            }
        }
    }
}

/// Mini-batch gradient of the mean batch loss with respect to every leaf of
/// every subset tree, laid out like [`LeafParameterView`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeafGradients {
    pub trees: Vec<usize>,
    pub grads: Vec<Vec<f64>>,
}

/// Gradient of `(1/|B|) sum_B loss(f(x), y)` with respect to the leaf
/// vectors, where `f` is the uniform `1/K` average over `subset`.
///
/// Leaf `l` of tree `i` collects `(1/|B|) sum (1/K) dloss/df` over the batch
/// points routed to it; leaves no batch point reaches get zero.
pub fn leaf_gradient(forest: &Forest, subset: &Subset, batch: &[usize], dataset: &Dataset) -> Result<LeafGradients> {
    leaf_gradient_with(forest, subset, batch, dataset, Loss::Mse)
}

pub fn leaf_gradient_with(
    forest: &Forest,
    subset: &Subset,
    batch: &[usize],
    dataset: &Dataset,
    loss: Loss,
) -> Result<LeafGradients> {
    if batch.is_empty() {
        return Err(Error::EmptyRows);
    }
    forest.check_subset(subset)?;
    forest.check_dataset(dataset)?;
    dataset.check_rows(batch)?;
    Ok(gradient_unchecked(forest, subset, batch, dataset, loss))
}

fn gradient_unchecked(forest: &Forest, subset: &Subset, batch: &[usize], dataset: &Dataset, loss: Loss) -> LeafGradients {
    let n_classes = forest.n_classes();
    let k = subset.len() as f64;
    let mut grads: Vec<Vec<f64>> = subset
        .indices()
        .iter()
        .map(|&i| vec![0.0; forest.tree(i).n_leaves() * n_classes])
        .collect();
    let mut f = vec![0.0; n_classes];
    let mut g = vec![0.0; n_classes];
    for &r in batch {
        let x = dataset.row(r);
        forest.predict_into(subset, x, &mut f);
        loss.gradient(&f, &dataset.one_hot(r), &mut g);
        for (pos, &i) in subset.indices().iter().enumerate() {
            let slot = forest.tree(i).leaf_slot(x);
            let target = &mut grads[pos][slot * n_classes..(slot + 1) * n_classes];
            for (t, gc) in target.iter_mut().zip(&g) {
                *t += gc / k;
            }
        }
    }
    let b = batch.len() as f64;
    for grad in &mut grads {
        grad.iter_mut().for_each(|v| *v /= b);
    }
    LeafGradients {
        trees: subset.indices().to_vec(),
        grads,
    }
}

/// Mean loss of the subset average over `rows`.
pub fn training_loss(forest: &Forest, subset: &Subset, dataset: &Dataset, rows: &[usize]) -> Result<f64> {
    training_loss_with(forest, subset, dataset, rows, Loss::Mse)
}

pub fn training_loss_with(forest: &Forest, subset: &Subset, dataset: &Dataset, rows: &[usize], loss: Loss) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    forest.check_subset(subset)?;
    forest.check_dataset(dataset)?;
    dataset.check_rows(rows)?;
    let mut f = vec![0.0; forest.n_classes()];
    let total: f64 = rows
        .iter()
        .map(|&r| {
            forest.predict_into(subset, dataset.row(r), &mut f);
            loss.value(&f, &dataset.one_hot(r))
        })
        .sum();
    Ok(total / rows.len() as f64)
}

/// Refine the leaves of the subset trees with SGD and return the result;
/// `forest` itself is left as is.
///
/// Each epoch shuffles `rows` with a stream derived from `(seed, epoch)`,
/// cuts the order into consecutive batches of at most `batch_size`, and
/// applies `theta <- theta - step_size * g` to every subset tree after the
/// whole batch gradient is computed. The returned forest weights are `1/K`
/// on the subset and 0 elsewhere.
pub fn refine_leaves(
    forest: &Forest,
    subset: &Subset,
    dataset: &Dataset,
    rows: &[usize],
    config: &RefineConfig,
) -> Result<Forest> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    forest.check_subset(subset)?;
    forest.check_dataset(dataset)?;
    dataset.check_rows(rows)?;

    let mut refined = forest.clone();
    let k = subset.len() as f64;
    let weights = (0..forest.n_trees())
        .map(|i| if subset.contains(i) { 1.0 / k } else { 0.0 })
        .collect();
    refined.set_weights(weights)?;

    let n_classes = forest.n_classes();
    let batch_size = if config.full_batch { rows.len() } else { config.batch_size };
    let mut order = rows.to_vec();
    for epoch in 0..config.epochs {
        if !config.full_batch {
            let mut rng = stream_rng(derive_seed(config.seed, &[epoch as u64]), 0);
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(batch_size) {
            let step = gradient_unchecked(&refined, subset, batch, dataset, config.loss);
            for (&i, grad) in step.trees.iter().zip(&step.grads) {
                let tree = refined.tree_mut(i);
                let leaves = tree.leaf_nodes().to_vec();
                for (leaf, g) in leaves.into_iter().zip(grad.chunks(n_classes)) {
                    for (p, gc) in tree.leaf_prediction_mut(leaf).iter_mut().zip(g) {
                        *p -= config.step_size * gc;
                    }
                }
            }
        }
    }
    Ok(refined)
}

/// Sample K trees uniformly from `forest` and refine them.
pub fn refine_random_subset(
    forest: &Forest,
    dataset: &Dataset,
    rows: &[usize],
    k: usize,
    config: &RefineConfig,
) -> Result<(Forest, PruneSelection)> {
    let selection = random_prune(forest, k, config.seed)?;
    let refined = refine_leaves(forest, &selection.subset(), dataset, rows, config)?;
    Ok((refined, selection))
}
