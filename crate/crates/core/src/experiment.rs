//! Cross-validated experiment grid: one base forest per (fold, leaf budget),
//! shared by every method, scored on the held-out fold.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{kfold, Dataset};
use crate::error::{Error, Result};
use crate::eval::{model_size_bytes, normalized_apf_with_max, rank_table, ApfReport, ParetoPoint};
use crate::forest::{train_forest, Forest};
use crate::pruning::{PruneMethod, Pruner};
use crate::refine::{refine_random_subset, RefineConfig};
use crate::rng::derive_seed;

/// Name of the leaf-refinement method in configs and result files.
pub const LEAF_REFINEMENT: &str = "rf-lr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    /// Name used in result files; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
}

impl DatasetSpec {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default = "default_k_grid")]
    pub k: Vec<usize>,
    /// Used by `rf-lr`; the seed field is replaced per grid cell.
    #[serde(default)]
    pub refine: Option<RefineConfig>,
    /// Free-form parameters for plugged-in methods.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl MethodSpec {
    pub fn new(name: impl Into<String>, k: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            k,
            refine: None,
            params: BTreeMap::new(),
        }
    }
}

fn default_k_grid() -> Vec<usize> {
    vec![8, 16, 32, 64, 128]
}

fn default_folds() -> usize {
    5
}

fn default_n_trees() -> usize {
    256
}

fn default_max_leaves() -> Vec<usize> {
    vec![64, 128, 256, 512, 1024]
}

fn default_methods() -> Vec<MethodSpec> {
    ["reduced-error", "random", "rank-ie", LEAF_REFINEMENT]
        .into_iter()
        .map(|m| MethodSpec::new(m, default_k_grid()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default = "default_max_leaves")]
    pub max_leaves: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            folds: default_folds(),
            seed: 0,
            n_trees: default_n_trees(),
            max_leaves: default_max_leaves(),
            methods: default_methods(),
            output_dir: None,
            threads: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self, registry: &MethodRegistry) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!("folds = {} (need >= 2)", self.folds)));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees = 0".into()));
        }
        if self.max_leaves.is_empty() || self.max_leaves.contains(&0) {
            return Err(Error::InvalidConfig("max_leaves must be a non-empty list of positive values".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods configured".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !names.insert(m.name.as_str()) {
                return Err(Error::InvalidConfig(format!("method `{}` listed twice", m.name)));
            }
            if m.name != LEAF_REFINEMENT && registry.get(&m.name).is_none() {
                return Err(Error::UnknownMethod(m.name.clone()));
            }
            if m.k.is_empty() {
                return Err(Error::InvalidConfig(format!("method `{}` has an empty K list", m.name)));
            }
            if let Some(&k) = m.k.iter().find(|&&k| k == 0 || k > self.n_trees) {
                return Err(Error::InvalidK { k, m: self.n_trees }.context(format!("method `{}`", m.name)));
            }
            if let Some(refine) = &m.refine {
                refine.validate()?;
            }
        }
        Ok(())
    }
}

/// Pruning methods available to the runner, looked up by name.
#[derive(Clone)]
pub struct MethodRegistry {
    pruners: Vec<Arc<dyn Pruner>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self {
            pruners: PruneMethod::ALL
                .into_iter()
                .map(|m| Arc::new(m) as Arc<dyn Pruner>)
                .collect(),
        }
    }
}

impl MethodRegistry {
    /// Add a pruner; a later registration shadows an earlier one of the same name.
    pub fn register(&mut self, pruner: Arc<dyn Pruner>) {
        self.pruners.insert(0, pruner);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Pruner>> {
        self.pruners.iter().find(|p| p.name() == name)
    }
}

/// One row of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub n_l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub size_bytes: u64,
}

/// Base forest used for one (fold, n_l) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub fold: usize,
    pub n_l: usize,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub results: Vec<ResultRow>,
    pub forests: Vec<ForestRecord>,
}

/// Stable 64-bit label for a method name (FNV-1a).
fn name_label(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Load the dataset named in `config`, run the grid, and write results and
/// reports to `config.output_dir` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let spec = &config.dataset;
    let dataset = Dataset::load(&spec.path, &spec.label_column, &spec.categorical_columns)
        .map_err(|e| e.context(format!("dataset {}", spec.path.display())))?;
    run_experiment_on(config, &dataset, &MethodRegistry::default())
}

/// Run the grid on an already loaded dataset.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    dataset: &Dataset,
    registry: &MethodRegistry,
) -> Result<ExperimentOutcome> {
    config.validate(registry)?;
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| run_grid(config, dataset, registry))
        }
        None => run_grid(config, dataset, registry),
    }
}

fn run_grid(config: &ExperimentConfig, dataset: &Dataset, registry: &MethodRegistry) -> Result<ExperimentOutcome> {
    let name = config.dataset.display_name();
    let folds = kfold(dataset, config.folds, derive_seed(config.seed, &[0xf01d]))?;
    let cells: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| config.max_leaves.iter().map(move |&n_l| (f, n_l)))
        .collect();

    let per_cell = cells
        .par_iter()
        .map(|&(fold, n_l)| {
            let split = &folds[fold];
            let forest_seed = derive_seed(config.seed, &[fold as u64, n_l as u64]);
            let (forest, record) = base_forest(config, dataset, &split.train_indices, fold, n_l, forest_seed)
                .map_err(|e| e.context(format!("dataset {name}, fold {fold}, n_l {n_l}")))?;
            let mut rows = Vec::new();
            for method in &config.methods {
                for &k in &method.k {
                    let seed = derive_seed(config.seed, &[fold as u64, n_l as u64, k as u64, name_label(&method.name)]);
                    let (accuracy, size_bytes) =
                        evaluate_method(registry, method, &forest, dataset, &split.train_indices, &split.test_indices, k, seed)
                            .map_err(|e| {
                                e.context(format!(
                                    "dataset {name}, fold {fold}, method {}, n_l {n_l}, K {k}",
                                    method.name
                                ))
                            })?;
                    rows.push(ResultRow {
                        dataset: name.clone(),
                        method: method.name.clone(),
                        n_l,
                        k,
                        fold,
                        accuracy,
                        size_bytes,
                    });
                }
            }
            Ok((rows, record))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut results = Vec::new();
    let mut forests = Vec::new();
    for (rows, record) in per_cell {
        results.extend(rows);
        forests.push(record);
    }
    let outcome = ExperimentOutcome { results, forests };

    if let Some(dir) = &config.output_dir {
        write_results(&dir.join("results.csv"), &outcome.results)?;
        write_forest_records(&dir.join("forests.csv"), &outcome.forests)?;
        let report = build_report(&outcome.results)?;
        write_report(&report, dir)?;
    }
    Ok(outcome)
}

fn base_forest(
    config: &ExperimentConfig,
    dataset: &Dataset,
    train: &[usize],
    fold: usize,
    n_l: usize,
    seed: u64,
) -> Result<(Forest, ForestRecord)> {
    let cache = config
        .output_dir
        .as_ref()
        .map(|dir| dir.join("forests").join(format!("fold{fold}_nl{n_l}_seed{seed}.json")));
    let (forest, json) = match cache.as_ref().filter(|p| p.exists()) {
        Some(path) => {
            let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            (Forest::from_json(&json)?, json)
        }
        None => {
            let forest = train_forest(dataset, train, config.n_trees, n_l, seed)?;
            let json = forest.to_json()?;
            if let Some(path) = &cache {
                write_atomic(path, json.as_bytes())?;
            }
            (forest, json)
        }
    };
    if forest.n_trees() != config.n_trees {
        return Err(Error::InvalidForest(format!(
            "cached forest has {} trees, config wants {}",
            forest.n_trees(),
            config.n_trees
        )));
    }
    let record = ForestRecord {
        fold,
        n_l,
        seed,
        sha256: sha256_hex(json.as_bytes()),
    };
    Ok((forest, record))
}

#[allow(clippy::too_many_arguments)]
fn evaluate_method(
    registry: &MethodRegistry,
    method: &MethodSpec,
    forest: &Forest,
    dataset: &Dataset,
    train: &[usize],
    test: &[usize],
    k: usize,
    seed: u64,
) -> Result<(f64, u64)> {
    let (model, subset) = if method.name == LEAF_REFINEMENT {
        let refine = RefineConfig {
            seed,
            ..method.refine.clone().unwrap_or_default()
        };
        let (refined, selection) = refine_random_subset(forest, dataset, train, k, &refine)?;
        (refined, selection.subset())
    } else {
        let pruner = registry
            .get(&method.name)
            .ok_or_else(|| Error::UnknownMethod(method.name.clone()))?;
        let selection = pruner.prune(forest, dataset, train, k, seed)?;
        if selection.k() != k {
            return Err(Error::InvalidConfig(format!(
                "pruner `{}` returned {} trees for K = {k}",
                method.name,
                selection.k()
            )));
        }
        (forest.clone(), selection.subset())
    };
    let accuracy = model.accuracy(&subset, dataset, test)?;
    let size = model_size_bytes(&model, &subset, dataset.n_classes())?;
    Ok((accuracy, size))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv buffer: {e}")))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

fn write_forest_records(path: &Path, records: &[ForestRecord]) -> Result<()> {
    write_atomic(path, &csv_bytes(records)?)
}

/// Front and APF of one method on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub dataset: String,
    pub method: String,
    pub report: ApfReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summaries: Vec<MethodSummary>,
    /// Mean rank of each method by APF over datasets.
    pub ranks: Vec<(String, f64)>,
}

/// Accuracy sum, size sum and fold count per (n_l, K).
type Tally = BTreeMap<(usize, usize), (f64, u64, usize)>;

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for s in items {
        if !seen.iter().any(|x| x == s) {
            seen.push(s.to_string());
        }
    }
    seen
}

/// Average each (dataset, method, n_l, K) configuration over folds, build
/// per-method fronts normalised by the dataset's largest model, and rank
/// methods by APF.
pub fn build_report(rows: &[ResultRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::EmptyPoints);
    }
    let datasets = first_seen(rows.iter().map(|r| r.dataset.as_str()));
    let methods = first_seen(rows.iter().map(|r| r.method.as_str()));

    // (dataset, method) -> (n_l, K) -> (accuracy sum, size sum, count)
    let mut cells: BTreeMap<(&str, &str), Tally> = BTreeMap::new();
    for r in rows {
        let e = cells
            .entry((&r.dataset, &r.method))
            .or_default()
            .entry((r.n_l, r.k))
            .or_insert((0.0, 0, 0));
        e.0 += r.accuracy;
        e.1 += r.size_bytes;
        e.2 += 1;
    }

    let mut summaries = Vec::new();
    let mut apf_matrix = Vec::new();
    for dataset in &datasets {
        let points_of = |method: &str| -> Vec<ParetoPoint> {
            cells
                .get(&(dataset.as_str(), method))
                .map(|configs| {
                    configs
                        .iter()
                        .map(|(&(n_l, k), &(acc, size, n))| {
                            let mean_size = (size as f64 / n as f64).round() as u64;
                            ParetoPoint::new(mean_size, acc / n as f64, format!("{method} n_l={n_l} K={k}"))
                        })
                        .collect()
                })
                .unwrap_or_default()
        };
        let s_max = methods
            .iter()
            .flat_map(|m| points_of(m))
            .map(|p| p.size_bytes)
            .max()
            .unwrap_or(0);
        let mut apf_row = Vec::new();
        for method in &methods {
            let points = points_of(method);
            if points.is_empty() {
                return Err(Error::InvalidConfig(format!("method {method} has no results on {dataset}")));
            }
            let report = normalized_apf_with_max(&points, s_max)?;
            apf_row.push(report.apf);
            summaries.push(MethodSummary {
                dataset: dataset.clone(),
                method: method.clone(),
                report,
            });
        }
        apf_matrix.push(apf_row);
    }
    let mean_ranks = rank_table(&apf_matrix)?;
    Ok(Report {
        summaries,
        ranks: methods.into_iter().zip(mean_ranks).collect(),
    })
}

#[derive(Serialize)]
struct FrontRow<'a> {
    dataset: &'a str,
    method: &'a str,
    size_bytes: u64,
    accuracy: f64,
    config_tag: &'a str,
}

#[derive(Serialize)]
struct ApfRow<'a> {
    dataset: &'a str,
    method: &'a str,
    apf: f64,
    s_max: u64,
}

#[derive(Serialize)]
struct RankRow<'a> {
    method: &'a str,
    mean_rank: f64,
}

/// Write `fronts.csv`, `apf.csv` and `ranks.csv` into `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    let fronts: Vec<FrontRow> = report
        .summaries
        .iter()
        .flat_map(|s| {
            s.report.front.iter().map(move |p| FrontRow {
                dataset: &s.dataset,
                method: &s.method,
                size_bytes: p.size_bytes,
                accuracy: p.accuracy,
                config_tag: &p.config_tag,
            })
        })
        .collect();
    let apf: Vec<ApfRow> = report
        .summaries
        .iter()
        .map(|s| ApfRow {
            dataset: &s.dataset,
            method: &s.method,
            apf: s.report.apf,
            s_max: s.report.s_max,
        })
        .collect();
    let ranks: Vec<RankRow> = report
        .ranks
        .iter()
        .map(|(m, r)| RankRow {
            method: m,
            mean_rank: *r,
        })
        .collect();
    write_atomic(&dir.join("fronts.csv"), &csv_bytes(&fronts)?)?;
    write_atomic(&dir.join("apf.csv"), &csv_bytes(&apf)?)?;
    write_atomic(&dir.join("ranks.csv"), &csv_bytes(&ranks)?)
}
