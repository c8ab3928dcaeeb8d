//! Selecting K of M trees.
//!
//! Reduced-error pruning is greedy forward selection under the ensemble 0-1
//! loss. Random selection and ranking by individual error are the
//! baselines. Any other method plugs in through [`Pruner`].

use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{argmax, Forest, Subset};
use crate::rng::stream_rng;

/// K distinct tree indices out of M, in the order they were chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SelectionDoc", into = "SelectionDoc")]
pub struct PruneSelection {
    selected: Vec<usize>,
    n_trees: usize,
    method: String,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct SelectionDoc {
    selected: Vec<usize>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "M")]
    n_trees: usize,
    method: String,
    seed: Option<u64>,
}

impl TryFrom<SelectionDoc> for PruneSelection {
    type Error = Error;

    fn try_from(doc: SelectionDoc) -> Result<Self> {
        if doc.k != doc.selected.len() {
            return Err(Error::InvalidConfig(format!(
                "selection lists {} trees but K = {}",
                doc.selected.len(),
                doc.k
            )));
        }
        PruneSelection::new(doc.selected, doc.n_trees, doc.method, doc.seed)
    }
}

impl From<PruneSelection> for SelectionDoc {
    fn from(sel: PruneSelection) -> Self {
        SelectionDoc {
            k: sel.selected.len(),
            selected: sel.selected,
            n_trees: sel.n_trees,
            method: sel.method,
            seed: sel.seed,
        }
    }
}

impl PruneSelection {
    pub fn new(selected: Vec<usize>, n_trees: usize, method: impl Into<String>, seed: Option<u64>) -> Result<Self> {
        // Subset::new checks emptiness, range and uniqueness.
        Subset::new(selected.clone(), n_trees)?;
        Ok(Self {
            selected,
            n_trees,
            method: method.into(),
            seed,
        })
    }

    /// Indices in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn k(&self) -> usize {
        self.selected.len()
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The 0/1 weight vector of length M.
    pub fn weight_vector(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_trees];
        for &i in &self.selected {
            w[i] = 1.0;
        }
        w
    }

    pub fn subset(&self) -> Subset {
        Subset::new(self.selected.clone(), self.n_trees).expect("validated on construction")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A pruning method: picks K trees from a forest given a pruning sample.
pub trait Pruner: Send + Sync {
    fn name(&self) -> &str;

    fn prune(&self, forest: &Forest, dataset: &Dataset, rows: &[usize], k: usize, seed: u64) -> Result<PruneSelection>;
}

/// Built-in pruning methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PruneMethod {
    #[serde(rename = "reduced-error")]
    ReducedError,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "rank-ie")]
    RankIndividualError,
}

impl PruneMethod {
    pub const ALL: [PruneMethod; 3] = [
        PruneMethod::ReducedError,
        PruneMethod::Random,
        PruneMethod::RankIndividualError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PruneMethod::ReducedError => "reduced-error",
            PruneMethod::Random => "random",
            PruneMethod::RankIndividualError => "rank-ie",
        }
    }
}

impl FromStr for PruneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PruneMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl Pruner for PruneMethod {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn prune(&self, forest: &Forest, dataset: &Dataset, rows: &[usize], k: usize, seed: u64) -> Result<PruneSelection> {
        match self {
            PruneMethod::ReducedError => reduced_error_prune(forest, dataset, rows, k),
            PruneMethod::Random => random_prune(forest, k, seed),
            PruneMethod::RankIndividualError => rank_prune_individual_error(forest, dataset, rows, k),
        }
    }
}

fn check_k(forest: &Forest, k: usize) -> Result<()> {
    if k < 1 || k > forest.n_trees() {
        return Err(Error::InvalidK { k, m: forest.n_trees() });
    }
    Ok(())
}

fn check_sample(forest: &Forest, dataset: &Dataset, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    forest.check_dataset(dataset)?;
    dataset.check_rows(rows)
}

/// Leaf node reached by each row, per tree: `leaves[tree][row_pos]`.
fn route_rows(forest: &Forest, dataset: &Dataset, rows: &[usize]) -> Vec<Vec<usize>> {
    forest
        .trees()
        .par_iter()
        .map(|tree| rows.iter().map(|&r| tree.leaf_index(dataset.row(r))).collect())
        .collect()
}

fn individual_errors(forest: &Forest, dataset: &Dataset, rows: &[usize], leaves: &[Vec<usize>]) -> Vec<usize> {
    leaves
        .par_iter()
        .enumerate()
        .map(|(i, tree_leaves)| {
            let tree = forest.tree(i);
            rows.iter()
                .zip(tree_leaves)
                .filter(|(&r, &leaf)| argmax(tree.leaf_prediction(leaf)) != dataset.class(r))
                .count()
        })
        .collect()
}

/// Greedy forward selection minimising the 0-1 loss of the averaged
/// ensemble on `rows`.
///
/// The first pick is the tree with the lowest individual error; each later
/// step adds the unchosen tree whose inclusion gives the grown ensemble the
/// fewest errors. Ties go to the lowest tree index. The candidate ensemble's
/// output is the running sum of member outputs in selection order, divided
/// by the member count.
pub fn reduced_error_prune(forest: &Forest, dataset: &Dataset, rows: &[usize], k: usize) -> Result<PruneSelection> {
    check_k(forest, k)?;
    check_sample(forest, dataset, rows)?;
    let n_classes = forest.n_classes();
    let leaves = route_rows(forest, dataset, rows);

    let mut sums = vec![0.0; rows.len() * n_classes];
    let mut chosen = vec![false; forest.n_trees()];
    let mut selected = Vec::with_capacity(k);

    for step in 0..k {
        let members = (step + 1) as f64;
        let sums_ref = &sums;
        let (_, best) = (0..forest.n_trees())
            .into_par_iter()
            .filter(|&i| !chosen[i])
            .map(|i| {
                let tree = forest.tree(i);
                let mut avg = vec![0.0; n_classes];
                let errors = rows
                    .iter()
                    .enumerate()
                    .filter(|&(pos, &r)| {
                        let current = &sums_ref[pos * n_classes..(pos + 1) * n_classes];
                        let candidate = tree.leaf_prediction(leaves[i][pos]);
                        for ((a, s), p) in avg.iter_mut().zip(current).zip(candidate) {
                            *a = (s + p) / members;
                        }
                        argmax(&avg) != dataset.class(r)
                    })
                    .count();
                (errors, i)
            })
            .min()
            .expect("k <= M leaves an unchosen tree");

        chosen[best] = true;
        selected.push(best);
        let tree = forest.tree(best);
        for (pos, sum) in sums.chunks_mut(n_classes).enumerate() {
            for (s, p) in sum.iter_mut().zip(tree.leaf_prediction(leaves[best][pos])) {
                *s += p;
            }
        }
    }

    PruneSelection::new(selected, forest.n_trees(), PruneMethod::ReducedError.as_str(), None)
}

/// K distinct trees drawn uniformly without replacement.
pub fn random_prune(forest: &Forest, k: usize, seed: u64) -> Result<PruneSelection> {
    check_k(forest, k)?;
    let selected = index::sample(&mut stream_rng(seed, 0), forest.n_trees(), k).into_vec();
    PruneSelection::new(selected, forest.n_trees(), PruneMethod::Random.as_str(), Some(seed))
}

/// The K trees with the lowest individual 0-1 error on `rows`.
pub fn rank_prune_individual_error(
    forest: &Forest,
    dataset: &Dataset,
    rows: &[usize],
    k: usize,
) -> Result<PruneSelection> {
    check_k(forest, k)?;
    check_sample(forest, dataset, rows)?;
    let leaves = route_rows(forest, dataset, rows);
    let errors = individual_errors(forest, dataset, rows, &leaves);
    let mut order: Vec<usize> = (0..forest.n_trees()).collect();
    order.sort_by_key(|&i| (errors[i], i));
    order.truncate(k);
    PruneSelection::new(order, forest.n_trees(), PruneMethod::RankIndividualError.as_str(), None)
}

/// Empirical residual inner products `C[i][j] = mean <h_i(x) - y, h_j(x) - y>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CMatrix {
    /// Wrap a row-major `n x n` matrix.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig("C-matrix must be square".into()));
        }
        Ok(CMatrix {
            n,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// `sum_{i != k} sum_{j != k} C[i][j]`, `sum_{i != k} C[i][k]`,
    /// `C[k][k]` and the full sum, in that order.
    pub fn decomposition(&self, k: usize) -> (f64, f64, f64, f64) {
        let mut without = 0.0;
        let mut cross = 0.0;
        let mut full = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                full += v;
                if i != k && j != k {
                    without += v;
                }
            }
            if i != k {
                cross += self.get(i, k);
            }
        }
        (without, cross, self.get(k, k), full)
    }
}

pub fn compute_c_matrix(forest: &Forest, dataset: &Dataset, rows: &[usize]) -> Result<CMatrix> {
    check_sample(forest, dataset, rows)?;
    let m = forest.n_trees();
    let n_classes = forest.n_classes();
    let leaves = route_rows(forest, dataset, rows);

    // Upper triangle, one matrix row per task.
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; m - i];
            for (pos, &r) in rows.iter().enumerate() {
                let y = dataset.class(r);
                let hi = forest.tree(i).leaf_prediction(leaves[i][pos]);
                for (off, j) in (i..m).enumerate() {
                    let hj = forest.tree(j).leaf_prediction(leaves[j][pos]);
                    let mut dot = 0.0;
                    for c in 0..n_classes {
                        let yc = if c == y { 1.0 } else { 0.0 };
                        dot += (hi[c] - yc) * (hj[c] - yc);
                    }
                    acc[off] += dot;
                }
            }
            let n = rows.len() as f64;
            acc.iter_mut().for_each(|v| *v /= n);
            acc
        })
        .collect();

    let mut values = vec![0.0; m * m];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            values[i * m + j] = v;
            values[j * m + i] = v;
        }
    }
    Ok(CMatrix { n: m, values })
}

/// Whether dropping member `k` can lower the averaged ensemble error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McbtaReport {
    pub avg_error_without_k: f64,
    pub avg_error_full: f64,
    /// `-2 sum_{i != k} C[i][k]`
    pub condition_lhs: f64,
    /// `C[k][k]`
    pub condition_rhs: f64,
    pub condition_holds: bool,
}

pub fn mcbta_report(cmatrix: &CMatrix, k: usize) -> Result<McbtaReport> {
    let m = cmatrix.size();
    if m < 2 {
        return Err(Error::TooFewTrees(m));
    }
    if k >= m {
        return Err(Error::TreeIndex { index: k, n_trees: m });
    }
    let (without, cross, diag, full) = cmatrix.decomposition(k);
    let lhs = -2.0 * cross;
    Ok(McbtaReport {
        avg_error_without_k: without / ((m - 1) * (m - 1)) as f64,
        avg_error_full: full / (m * m) as f64,
        condition_lhs: lhs,
        condition_rhs: diag,
        condition_holds: lhs <= diag,
    })
}
