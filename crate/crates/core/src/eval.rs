//! Memory model, accuracy-memory Pareto fronts, normalized area under the
//! front, and average-rank tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Forest, Subset};

/// Bytes charged per tree node: `base + per_class * C`.
///
/// The default mirrors an array-of-nodes layout: two child pointers
/// (8 bytes), a leaf flag (1 byte), feature index plus threshold (8 bytes)
/// and one 4-byte float per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub node_base_bytes: u64,
    pub bytes_per_class: u64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self {
            node_base_bytes: 17,
            bytes_per_class: 4,
        }
    }
}

impl MemoryModel {
    pub fn bytes_per_node(&self, n_classes: usize) -> u64 {
        self.node_base_bytes + self.bytes_per_class * n_classes as u64
    }

    pub fn size_of(&self, forest: &Forest, subset: &Subset, n_classes: usize) -> Result<u64> {
        forest.check_subset(subset)?;
        Ok(self.bytes_per_node(n_classes) * forest.node_count(subset) as u64)
    }
}

/// `(17 + 4C)` bytes times the number of nodes (splits and leaves) in the
/// subset's trees.
pub fn model_size_bytes(forest: &Forest, subset: &Subset, n_classes: usize) -> Result<u64> {
    MemoryModel::default().size_of(forest, subset, n_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub size_bytes: u64,
    pub accuracy: f64,
    pub config_tag: String,
}

impl ParetoPoint {
    pub fn new(size_bytes: u64, accuracy: f64, config_tag: impl Into<String>) -> Self {
        Self {
            size_bytes,
            accuracy,
            config_tag: config_tag.into(),
        }
    }

    /// Smaller-or-equal size and higher-or-equal accuracy, one strictly.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.size_bytes <= other.size_bytes
            && self.accuracy >= other.accuracy
            && (self.size_bytes < other.size_bytes || self.accuracy > other.accuracy)
    }
}

fn check_points(points: &[ParetoPoint]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(&p.accuracy)) {
        return Err(Error::InvalidPoint(format!(
            "accuracy {} of `{}` outside [0, 1]",
            p.accuracy, p.config_tag
        )));
    }
    Ok(())
}

/// Non-dominated points, sorted by size. Of several points with the same
/// size and accuracy only the first in input order is kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>> {
    check_points(points)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.size_bytes
            .cmp(&pb.size_bytes)
            .then(pb.accuracy.total_cmp(&pa.accuracy))
            .then(a.cmp(&b))
    });
    let mut front: Vec<ParetoPoint> = Vec::new();
    for i in order {
        let p = &points[i];
        if front.last().is_none_or(|best| p.accuracy > best.accuracy) {
            front.push(p.clone());
        }
    }
    Ok(front)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApfReport {
    pub front: Vec<ParetoPoint>,
    pub apf: f64,
    pub s_max: u64,
}

/// Area under the best-accuracy-by-size staircase on `[0, s_max)`, divided
/// by `s_max`, where `s_max` is the largest input size.
///
/// The staircase is 0 below the smallest model and steps up at every front
/// point.
pub fn normalized_apf(points: &[ParetoPoint]) -> Result<ApfReport> {
    check_points(points)?;
    let s_max = points.iter().map(|p| p.size_bytes).max().unwrap();
    normalized_apf_with_max(points, s_max)
}

/// [`normalized_apf`] with an explicit normalizing size, e.g. the largest
/// model across every method on a dataset. `s_max` must be at least the
/// largest input size.
pub fn normalized_apf_with_max(points: &[ParetoPoint], s_max: u64) -> Result<ApfReport> {
    let front = pareto_front(points)?;
    if s_max < points.iter().map(|p| p.size_bytes).max().unwrap_or(0) {
        return Err(Error::InvalidPoint(format!(
            "normalizing size {s_max} is below the largest model"
        )));
    }
    let apf = if s_max == 0 {
        0.0
    } else {
        let mut area = 0.0;
        for (i, p) in front.iter().enumerate() {
            let next = front.get(i + 1).map_or(s_max, |q| q.size_bytes);
            area += p.accuracy * (next - p.size_bytes) as f64;
        }
        area / s_max as f64
    };
    Ok(ApfReport { front, apf, s_max })
}

/// Mean rank of each method over datasets.
///
/// `scores[d][m]` is the score of method `m` on dataset `d`; higher is
/// better and ranks start at 1. Tied methods share the mean of the ranks
/// they span.
pub fn rank_table(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = scores.first() else {
        return Err(Error::EmptyPoints);
    };
    let n_methods = first.len();
    if n_methods == 0 {
        return Err(Error::EmptyPoints);
    }
    for (row, s) in scores.iter().enumerate() {
        if s.len() != n_methods {
            return Err(Error::RaggedMatrix {
                row,
                got: s.len(),
                expected: n_methods,
            });
        }
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidPoint(format!("NaN score in row {row}")));
        }
    }
    let mut totals = vec![0.0; n_methods];
    for s in scores {
        for (t, r) in totals.iter_mut().zip(ranks_descending(s)) {
            *t += r;
        }
    }
    let n = scores.len() as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}

fn ranks_descending(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}
