//! Reference computations shared by the integration tests. Each one walks
//! the definition directly and uses none of the library's caching paths.
#![allow(dead_code)]

use forestlr::eval::ParetoPoint;
use forestlr::{Dataset, Forest, Node, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Average of member outputs, summed in member order.
pub fn average(forest: &Forest, members: &[usize], x: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; forest.n_classes()];
    for &j in members {
        for (a, b) in s.iter_mut().zip(forest.tree(j).predict(x)) {
            *a += b;
        }
    }
    let n = members.len() as f64;
    s.iter().map(|v| v / n).collect()
}

pub fn ensemble_errors(forest: &Forest, members: &[usize], dataset: &Dataset, rows: &[usize]) -> usize {
    rows.iter()
        .filter(|&&r| argmax_lowest(&average(forest, members, dataset.row(r))) != dataset.class(r))
        .count()
}

/// Greedy forward selection evaluated from scratch for every candidate.
pub fn greedy_reduced_error(forest: &Forest, dataset: &Dataset, rows: &[usize], k: usize) -> Vec<usize> {
    let mut selected: Vec<usize> = Vec::new();
    for _ in 0..k {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..forest.n_trees() {
            if selected.contains(&i) {
                continue;
            }
            let mut members = selected.clone();
            members.push(i);
            let err = ensemble_errors(forest, &members, dataset, rows);
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, i));
            }
        }
        selected.push(best.unwrap().1);
    }
    selected
}

pub fn one_hot(class: usize, n_classes: usize) -> Vec<f64> {
    (0..n_classes).map(|c| if c == class { 1.0 } else { 0.0 }).collect()
}

/// Mean over `rows` of `sum_c (f_c - y_c)^2` for the uniform subset average.
pub fn batch_mse(forest: &Forest, members: &[usize], dataset: &Dataset, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for &r in rows {
        let f = average(forest, members, dataset.row(r));
        let y = one_hot(dataset.class(r), dataset.n_classes());
        total += f.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    total / rows.len() as f64
}

/// Central finite differences of [`batch_mse`] for every leaf coordinate of
/// every member tree, laid out per tree in leaf-node order.
pub fn finite_difference_gradient(
    forest: &Forest,
    members: &[usize],
    dataset: &Dataset,
    batch: &[usize],
    h: f64,
) -> Vec<Vec<f64>> {
    members
        .iter()
        .map(|&i| {
            let leaves: Vec<usize> = (0..forest.tree(i).n_nodes())
                .filter(|&n| forest.tree(i).nodes()[n].is_leaf())
                .collect();
            let mut out = Vec::new();
            for leaf in leaves {
                for c in 0..forest.n_classes() {
                    let mut plus = forest.clone();
                    plus.tree_mut(i).leaf_prediction_mut(leaf)[c] += h;
                    let mut minus = forest.clone();
                    minus.tree_mut(i).leaf_prediction_mut(leaf)[c] -= h;
                    let lp = batch_mse(&plus, members, dataset, batch);
                    let lm = batch_mse(&minus, members, dataset, batch);
                    out.push((lp - lm) / (2.0 * h));
                }
            }
            out
        })
        .collect()
}

/// Double loop over trees and rows.
pub fn c_matrix_direct(forest: &Forest, dataset: &Dataset, rows: &[usize]) -> Vec<Vec<f64>> {
    let m = forest.n_trees();
    let mut c = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for &r in rows {
                let x = dataset.row(r);
                let y = one_hot(dataset.class(r), dataset.n_classes());
                let hi = forest.tree(i).predict(x);
                let hj = forest.tree(j).predict(x);
                for cls in 0..y.len() {
                    acc += (hi[cls] - y[cls]) * (hj[cls] - y[cls]);
                }
            }
            c[i][j] = acc / rows.len() as f64;
        }
    }
    c
}

pub fn dominated_by_any(p: &ParetoPoint, points: &[ParetoPoint]) -> bool {
    points.iter().any(|q| {
        q.size_bytes <= p.size_bytes
            && q.accuracy >= p.accuracy
            && (q.size_bytes < p.size_bytes || q.accuracy > p.accuracy)
    })
}

/// O(n^2) non-dominated filter; equal duplicates keep the first occurrence.
pub fn brute_force_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut front: Vec<ParetoPoint> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if dominated_by_any(p, points) {
            continue;
        }
        let duplicate_earlier = points[..i]
            .iter()
            .any(|q| q.size_bytes == p.size_bytes && q.accuracy == p.accuracy);
        if !duplicate_earlier {
            front.push(p.clone());
        }
    }
    front.sort_by_key(|p| p.size_bytes);
    front
}

/// Integrate the best-accuracy staircase one byte at a time.
pub fn staircase_by_unit_steps(points: &[ParetoPoint]) -> f64 {
    let s_max = points.iter().map(|p| p.size_bytes).max().unwrap();
    let mut area = 0.0;
    for s in 0..s_max {
        let acc = points
            .iter()
            .filter(|p| p.size_bytes <= s)
            .map(|p| p.accuracy)
            .fold(0.0, f64::max);
        area += acc;
    }
    if s_max == 0 {
        0.0
    } else {
        area / s_max as f64
    }
}

/// Random tree with up to `max_splits` splits and random (not normalised)
/// leaf vectors.
pub fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, n_classes: usize, max_splits: usize) -> Tree {
    let mut nodes = vec![Node::Leaf { prediction: vec![] }];
    let mut open = vec![0usize];
    let splits = rng.random_range(0..=max_splits);
    for _ in 0..splits {
        let pick = rng.random_range(0..open.len());
        let node = open.swap_remove(pick);
        let left = nodes.len();
        nodes.push(Node::Leaf { prediction: vec![] });
        nodes.push(Node::Leaf { prediction: vec![] });
        nodes[node] = Node::Split {
            feature: rng.random_range(0..n_features),
            threshold: rng.random_range(-1.0..1.0),
            left,
            right: left + 1,
        };
        open.push(left);
        open.push(left + 1);
    }
    for node in &mut nodes {
        if let Node::Leaf { prediction } = node {
            *prediction = (0..n_classes).map(|_| rng.random_range(0.0..1.0)).collect();
        }
    }
    Tree::from_nodes(nodes, 0).unwrap()
}

pub fn random_forest(seed: u64, m: usize, n_features: usize, n_classes: usize, max_splits: usize) -> Forest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..m)
        .map(|_| random_tree(&mut rng, n_features, n_classes, max_splits))
        .collect();
    Forest::new(trees, n_classes, n_features).unwrap()
}

pub fn random_dataset(seed: u64, n: usize, n_features: usize, n_classes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xda7a);
    let rows = (0..n)
        .map(|_| (0..n_features).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let classes = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
    Dataset::new(rows, classes, n_classes, (0..n_features).map(|j| format!("x{j}")).collect()).unwrap()
}
