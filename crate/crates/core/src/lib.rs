//! Random forest compression: reduced-error pruning, leaf refinement by SGD,
//! a bytes-per-node memory model with accuracy-memory Pareto fronts, and
//! C++ code generation for the resulting models.

pub mod codegen;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod forest;
pub mod pruning;
pub mod refine;
pub mod rng;

pub use data::{kfold, load_csv, synthetic_classification, Dataset, FoldSplit};
pub use error::{Error, Result};
pub use forest::{train_forest, train_tree, Forest, ForestConfig, Node, Subset, Tree};
pub use pruning::{
    compute_c_matrix, mcbta_report, random_prune, rank_prune_individual_error, reduced_error_prune, CMatrix,
    PruneMethod, PruneSelection, Pruner,
};
pub use refine::{leaf_gradient, refine_leaves, training_loss, RefineConfig};
