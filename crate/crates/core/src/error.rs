use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("column `{column}`, row {row}: cannot parse `{value}` as a number")]
    ParseFeature {
        column: String,
        row: usize,
        value: String,
    },
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("no rows left after dropping rows with missing values")]
    NoRows,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid fold count k={k} for {n} rows")]
    InvalidFoldCount { k: usize, n: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("empty subset")]
    EmptySubset,
    #[error("empty row set")]
    EmptyRows,
    #[error("tree index {index} out of range for forest of {n_trees} trees")]
    TreeIndex { index: usize, n_trees: usize },
    #[error("duplicate tree index {0} in subset")]
    DuplicateTree(usize),
    #[error("row index {index} out of range for dataset of {n_rows} rows")]
    RowIndex { index: usize, n_rows: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("K={k} is outside 1..={m}")]
    InvalidK { k: usize, m: usize },
    #[error("need at least 2 trees, got {0}")]
    TooFewTrees(usize),
    #[error("invalid forest: {0}")]
    InvalidForest(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown pruning method `{0}`")]
    UnknownMethod(String),
    #[error("empty point set")]
    EmptyPoints,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("ragged rank matrix: row {row} has {got} entries, expected {expected}")]
    RaggedMatrix {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
