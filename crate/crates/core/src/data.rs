//! Dataset ingestion, preprocessing and cross-validation splits.
//!
//! Preprocessing is deliberately minimal: rows holding a missing cell are
//! dropped, categorical columns are one-hot encoded, and nothing is scaled.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Cell values treated as missing.
pub const MISSING_MARKERS: [&str; 4] = ["", "NaN", "nan", "NA"];

/// Dense feature matrix with class labels.
///
/// Labels are stored as class indices; [`Dataset::one_hot`] and the JSON
/// form expose them as one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    classes: Vec<usize>,
    n_classes: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Build a dataset from feature rows and class indices.
    pub fn new(
        rows: Vec<Vec<f64>>,
        classes: Vec<usize>,
        n_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoRows);
        }
        if rows.len() != classes.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                rows.len(),
                classes.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        let n_features = rows[0].len();
        if n_features == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if feature_names.len() != n_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                n_features
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("row {i} holds non-finite value {v}")));
            }
            features.extend_from_slice(row);
        }
        if let Some((i, &c)) = classes.iter().enumerate().find(|(_, &c)| c >= n_classes) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has class {c} but n_classes = {n_classes}"
            )));
        }
        Ok(Self {
            features,
            n_features,
            classes,
            n_classes,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            feature_names,
        })
    }

    /// Build a dataset from one-hot label rows.
    pub fn from_one_hot(
        rows: Vec<Vec<f64>>,
        labels: &[Vec<f64>],
        n_classes: usize,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let classes = labels
            .iter()
            .enumerate()
            .map(|(i, label)| one_hot_index(label, n_classes).ok_or_else(|| {
                Error::InvalidDataset(format!("label row {i} is not one-hot over {n_classes} classes"))
            }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, classes, n_classes, feature_names)
    }

    pub fn n_rows(&self) -> usize {
        self.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Original label value for each class index.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn class(&self, i: usize) -> usize {
        self.classes[i]
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n_classes];
        y[self.classes[i]] = 1.0;
        y
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).collect()
    }

    /// Fails if any index in `rows` is out of range.
    pub fn check_rows(&self, rows: &[usize]) -> Result<()> {
        match rows.iter().find(|&&r| r >= self.n_rows()) {
            Some(&index) => Err(Error::RowIndex {
                index,
                n_rows: self.n_rows(),
            }),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    /// Load either a JSON dataset document or, for any other extension, a CSV.
    pub fn load(path: impl AsRef<Path>, label_column: &str, categorical: &[String]) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_json(&text)
        } else {
            load_csv(path, label_column, categorical)
        }
    }
}

fn one_hot_index(label: &[f64], n_classes: usize) -> Option<usize> {
    if label.len() != n_classes {
        return None;
    }
    let mut hit = None;
    for (c, &v) in label.iter().enumerate() {
        if v == 1.0 {
            if hit.is_some() {
                return None;
            }
            hit = Some(c);
        } else if v != 0.0 {
            return None;
        }
    }
    hit
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    features: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    n_classes: usize,
    feature_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    class_names: Vec<String>,
}

impl From<&Dataset> for DatasetDoc {
    fn from(ds: &Dataset) -> Self {
        DatasetDoc {
            features: (0..ds.n_rows()).map(|i| ds.row(i).to_vec()).collect(),
            labels: (0..ds.n_rows()).map(|i| ds.one_hot(i)).collect(),
            n_classes: ds.n_classes,
            feature_names: ds.feature_names.clone(),
            class_names: ds.class_names.clone(),
        }
    }
}

impl TryFrom<DatasetDoc> for Dataset {
    type Error = Error;

    fn try_from(doc: DatasetDoc) -> Result<Self> {
        let mut ds = Dataset::from_one_hot(doc.features, &doc.labels, doc.n_classes, doc.feature_names)?;
        if !doc.class_names.is_empty() {
            if doc.class_names.len() != ds.n_classes {
                return Err(Error::InvalidDataset("class_names length differs from n_classes".into()));
            }
            ds.class_names = doc.class_names;
        }
        Ok(ds)
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell.trim())
}

/// Read a headered, comma-separated file.
///
/// Rows with any missing cell are dropped. Each column named in
/// `categorical` becomes one indicator column per distinct value, in sorted
/// value order, at the position of the original column. Labels are indexed
/// in sorted order of their distinct values.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, categorical: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, categorical)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: Read>(reader: R, label_column: &str, categorical: &[String]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let categorical: BTreeSet<&str> = categorical.iter().map(String::as_str).collect();
    if let Some(missing) = categorical.iter().find(|c| !header.iter().any(|h| h == *c)) {
        return Err(Error::InvalidConfig(format!("categorical column `{missing}` not in header")));
    }

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.iter().any(is_missing) {
            continue;
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::NoRows);
    }

    // Distinct values per categorical column, sorted.
    let mut levels: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (j, name) in header.iter().enumerate() {
        if j != label_idx && categorical.contains(name.as_str()) {
            let set: BTreeSet<String> = records.iter().map(|r| r[j].trim().to_string()).collect();
            levels.insert(j, set.into_iter().collect());
        }
    }

    let label_values: BTreeSet<String> = records.iter().map(|r| r[label_idx].trim().to_string()).collect();
    if label_values.len() < 2 {
        return Err(Error::TooFewClasses(label_values.len()));
    }
    let class_names: Vec<String> = label_values.into_iter().collect();

    let mut feature_names = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        match levels.get(&j) {
            Some(values) => feature_names.extend(values.iter().map(|v| format!("{name}={v}"))),
            None => feature_names.push(name.clone()),
        }
    }

    let mut rows = Vec::with_capacity(records.len());
    let mut classes = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let cell = cell.trim();
            match levels.get(&j) {
                Some(values) => row.extend(values.iter().map(|v| if v == cell { 1.0 } else { 0.0 })),
                None => {
                    let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                        Error::ParseFeature {
                            column: header[j].clone(),
                            row: i,
                            value: cell.to_string(),
                        }
                    })?;
                    row.push(value);
                }
            }
        }
        rows.push(row);
        let label = record[label_idx].trim();
        classes.push(class_names.binary_search_by(|c| c.as_str().cmp(label)).expect("label collected above"));
    }

    let mut ds = Dataset::new(rows, classes, class_names.len(), feature_names)?;
    ds.class_names = class_names;
    Ok(ds)
}

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffled (unstratified) k-fold split of the dataset's rows.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    kfold_indices(dataset.n_rows(), k, seed)
}

/// k-fold split of `0..n`. The first `n % k` folds hold one extra test row.
/// Index lists are returned sorted.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 || k > n {
        return Err(Error::InvalidFoldCount { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut test: Vec<usize> = order[start..start + len].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(FoldSplit {
            train_indices: train,
            test_indices: test,
        });
        start += len;
    }
    Ok(folds)
}

/// Synthetic classification data: features uniform on `[-1, 1]^d`, each
/// class owning `2` random prototype points, label = class of the nearest
/// prototype, then a `label_noise` fraction of labels replaced by a
/// different class.
pub fn synthetic_classification(n: usize, d: usize, n_classes: usize, label_noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidDataset("synthetic data needs n >= 1 and d >= 1".into()));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(Error::InvalidConfig(format!("label noise {label_noise} outside [0, 1]")));
    }
    let mut rng = stream_rng(seed, 0);
    let prototypes: Vec<(Vec<f64>, usize)> = (0..2 * n_classes)
        .map(|p| ((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), p % n_classes))
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, mut class) = prototypes
            .iter()
            .map(|(p, c)| (p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), *c))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least one prototype");
        if rng.random_bool(label_noise) {
            class = (class + rng.random_range(1..n_classes)) % n_classes;
        }
        rows.push(x);
        classes.push(class);
    }
    Dataset::new(rows, classes, n_classes, (0..d).map(|j| format!("x{j}")).collect())
}
