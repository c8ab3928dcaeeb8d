//! Python bindings. Build with `--features extension-module` for import.

use forestlr::codegen::emit_source as emit;
use forestlr::eval::{model_size_bytes as size_of, normalized_apf, pareto_front as front, ParetoPoint};
use forestlr::refine::{refine_leaves, RefineConfig};
use forestlr::{PruneSelection as CoreSelection, Subset};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: forestlr::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Dataset", module = "pyforestlr", from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: forestlr::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, classes, n_classes=None))]
    fn new(features: Vec<Vec<f64>>, classes: Vec<usize>, n_classes: Option<usize>) -> PyResult<Self> {
        let n_classes = n_classes.unwrap_or_else(|| classes.iter().max().map_or(0, |m| m + 1));
        let names = (0..features.first().map_or(0, Vec::len)).map(|i| format!("x{i}")).collect();
        let inner = forestlr::Dataset::new(features, classes, n_classes, names).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn classes(&self) -> Vec<usize> {
        self.inner.classes().to_vec()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    /// Train/test index lists for each of `k` folds.
    fn kfold(&self, k: usize, seed: u64) -> PyResult<Vec<(Vec<usize>, Vec<usize>)>> {
        let folds = forestlr::kfold(&self.inner, k, seed).map_err(err)?;
        Ok(folds.into_iter().map(|f| (f.train_indices, f.test_indices)).collect())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, features={}, classes={})",
            self.inner.n_rows(),
            self.inner.n_features(),
            self.inner.n_classes()
        )
    }
}

#[pyclass(name = "Forest", module = "pyforestlr", from_py_object)]
#[derive(Clone)]
pub struct PyForest {
    inner: forestlr::Forest,
}

impl PyForest {
    fn subset(&self, trees: Option<Vec<usize>>) -> PyResult<Subset> {
        match trees {
            Some(t) => Subset::new(t, self.inner.n_trees()).map_err(err),
            None => Ok(self.inner.all()),
        }
    }
}

#[pymethods]
impl PyForest {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: forestlr::Forest::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.n_trees()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[pyo3(signature = (x, trees=None))]
    fn predict(&self, x: Vec<f64>, trees: Option<Vec<usize>>) -> PyResult<Vec<f64>> {
        let subset = self.subset(trees)?;
        self.inner.predict(&subset, &x).map_err(err)
    }

    #[pyo3(signature = (dataset, rows=None, trees=None))]
    fn accuracy(&self, dataset: &PyDataset, rows: Option<Vec<usize>>, trees: Option<Vec<usize>>) -> PyResult<f64> {
        let subset = self.subset(trees)?;
        let rows = rows.unwrap_or_else(|| dataset.inner.all_rows());
        self.inner.accuracy(&subset, &dataset.inner, &rows).map_err(err)
    }

    #[pyo3(signature = (trees=None))]
    fn node_count(&self, trees: Option<Vec<usize>>) -> PyResult<usize> {
        let subset = self.subset(trees)?;
        Ok(self.inner.node_count(&subset))
    }

    fn __repr__(&self) -> String {
        format!("Forest(trees={}, classes={})", self.inner.n_trees(), self.inner.n_classes())
    }
}

#[pyclass(name = "PruneSelection", module = "pyforestlr", from_py_object)]
#[derive(Clone)]
pub struct PySelection {
    inner: CoreSelection,
}

#[pymethods]
impl PySelection {
    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.inner.selected().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method().to_string()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("PruneSelection(method={:?}, selected={:?})", self.inner.method(), self.inner.selected())
    }
}

fn rows_or_all(dataset: &PyDataset, rows: Option<Vec<usize>>) -> Vec<usize> {
    rows.unwrap_or_else(|| dataset.inner.all_rows())
}

#[pyfunction]
#[pyo3(signature = (path, label_column, categorical=vec![]))]
fn load_csv(path: &str, label_column: &str, categorical: Vec<String>) -> PyResult<PyDataset> {
    let inner = forestlr::load_csv(path, label_column, &categorical).map_err(err)?;
    Ok(PyDataset { inner })
}

#[pyfunction]
#[pyo3(signature = (n, d, n_classes, label_noise=0.0, seed=0))]
fn synthetic_classification(n: usize, d: usize, n_classes: usize, label_noise: f64, seed: u64) -> PyResult<PyDataset> {
    let inner = forestlr::synthetic_classification(n, d, n_classes, label_noise, seed).map_err(err)?;
    Ok(PyDataset { inner })
}

#[pyfunction]
#[pyo3(signature = (dataset, n_trees, max_leaves, seed=0, rows=None))]
fn train_forest(
    py: Python<'_>,
    dataset: &PyDataset,
    n_trees: usize,
    max_leaves: usize,
    seed: u64,
    rows: Option<Vec<usize>>,
) -> PyResult<PyForest> {
    let rows = rows_or_all(dataset, rows);
    let inner = py
        .detach(|| forestlr::train_forest(&dataset.inner, &rows, n_trees, max_leaves, seed))
        .map_err(err)?;
    Ok(PyForest { inner })
}

#[pyfunction]
#[pyo3(signature = (forest, dataset, k, rows=None))]
fn reduced_error_prune(forest: &PyForest, dataset: &PyDataset, k: usize, rows: Option<Vec<usize>>) -> PyResult<PySelection> {
    let rows = rows_or_all(dataset, rows);
    let inner = forestlr::reduced_error_prune(&forest.inner, &dataset.inner, &rows, k).map_err(err)?;
    Ok(PySelection { inner })
}

#[pyfunction]
#[pyo3(signature = (forest, k, seed=0))]
fn random_prune(forest: &PyForest, k: usize, seed: u64) -> PyResult<PySelection> {
    let inner = forestlr::random_prune(&forest.inner, k, seed).map_err(err)?;
    Ok(PySelection { inner })
}

#[pyfunction]
#[pyo3(signature = (forest, dataset, k, rows=None))]
fn rank_prune_individual_error(
    forest: &PyForest,
    dataset: &PyDataset,
    k: usize,
    rows: Option<Vec<usize>>,
) -> PyResult<PySelection> {
    let rows = rows_or_all(dataset, rows);
    let inner = forestlr::rank_prune_individual_error(&forest.inner, &dataset.inner, &rows, k).map_err(err)?;
    Ok(PySelection { inner })
}

/// Refine the leaves of `trees` (default: all) and return the new forest.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (forest, dataset, trees=None, rows=None, step_size=0.1, epochs=50, batch_size=128, seed=0, full_batch=false))]
fn refine(
    py: Python<'_>,
    forest: &PyForest,
    dataset: &PyDataset,
    trees: Option<Vec<usize>>,
    rows: Option<Vec<usize>>,
    step_size: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    full_batch: bool,
) -> PyResult<PyForest> {
    let subset = forest.subset(trees)?;
    let rows = rows_or_all(dataset, rows);
    let config = RefineConfig {
        step_size,
        epochs,
        batch_size,
        seed,
        full_batch,
        ..RefineConfig::default()
    };
    let inner = py
        .detach(|| refine_leaves(&forest.inner, &subset, &dataset.inner, &rows, &config))
        .map_err(err)?;
    Ok(PyForest { inner })
}

#[pyfunction]
#[pyo3(signature = (forest, trees=None))]
fn model_size_bytes(forest: &PyForest, trees: Option<Vec<usize>>) -> PyResult<u64> {
    let subset = forest.subset(trees)?;
    size_of(&forest.inner, &subset, forest.inner.n_classes()).map_err(err)
}

fn points(raw: Vec<(u64, f64)>) -> Vec<ParetoPoint> {
    raw.into_iter()
        .enumerate()
        .map(|(i, (s, a))| ParetoPoint::new(s, a, i.to_string()))
        .collect()
}

/// Non-dominated subset of `(size_bytes, accuracy)` pairs, by increasing size.
#[pyfunction]
fn pareto_front(points_in: Vec<(u64, f64)>) -> PyResult<Vec<(u64, f64)>> {
    let f = front(&points(points_in)).map_err(err)?;
    Ok(f.into_iter().map(|p| (p.size_bytes, p.accuracy)).collect())
}

#[pyfunction]
fn apf(points_in: Vec<(u64, f64)>) -> PyResult<f64> {
    Ok(normalized_apf(&points(points_in)).map_err(err)?.apf)
}

/// C++ source and manifest (as a dict) for the chosen trees.
#[pyfunction]
#[pyo3(signature = (forest, trees=None))]
fn emit_source(py: Python<'_>, forest: &PyForest, trees: Option<Vec<usize>>) -> PyResult<(String, Py<PyAny>)> {
    let subset = forest.subset(trees)?;
    let model = emit(&forest.inner, &subset).map_err(err)?;
    let m = &model.manifest;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("n_trees", m.n_trees)?;
    dict.set_item("total_nodes", m.total_nodes)?;
    dict.set_item("n_classes", m.n_classes)?;
    dict.set_item("n_features", m.n_features)?;
    dict.set_item("expected_size_bytes", m.expected_size_bytes)?;
    Ok((model.source_text, dict.into_any().unbind()))
}

#[pymodule]
fn pyforestlr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PySelection>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_classification, m)?)?;
    m.add_function(wrap_pyfunction!(train_forest, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_error_prune, m)?)?;
    m.add_function(wrap_pyfunction!(random_prune, m)?)?;
    m.add_function(wrap_pyfunction!(rank_prune_individual_error, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(model_size_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(apf, m)?)?;
    m.add_function(wrap_pyfunction!(emit_source, m)?)?;
    Ok(())
}
