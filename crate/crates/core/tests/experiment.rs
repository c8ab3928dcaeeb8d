use std::sync::Arc;

use forestlr::experiment::{
    read_results, run_experiment, run_experiment_on, sha256_hex, DatasetSpec, ExperimentConfig, MethodRegistry,
    MethodSpec,
};
use forestlr::{
    kfold, synthetic_classification, train_forest, Dataset, Forest, PruneSelection, Pruner, Result,
};

fn toy_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetSpec {
        path: dir.join("toy.csv"),
        label_column: "label".into(),
        categorical_columns: vec![],
        name: Some("toy".into()),
    });
    cfg.folds = 2;
    cfg.n_trees = 16;
    cfg.max_leaves = vec![16];
    cfg.seed = 11;
    cfg.methods = ["reduced-error", "random", "rank-ie"]
        .into_iter()
        .map(|m| MethodSpec::new(m, vec![2, 4]))
        .collect();
    cfg.output_dir = Some(dir.join("out"));
    cfg
}

fn write_toy_csv(dir: &std::path::Path) -> Dataset {
    let ds = synthetic_classification(500, 4, 3, 0.1, 21).unwrap();
    let mut text = String::from("a,b,c,d,label\n");
    for r in 0..ds.n_rows() {
        let x = ds.row(r);
        text.push_str(&format!("{:?},{:?},{:?},{:?},class{}\n", x[0], x[1], x[2], x[3], ds.class(r)));
    }
    std::fs::write(dir.join("toy.csv"), text).unwrap();
    ds
}

#[test]
fn grid_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_csv(dir.path());
    let cfg = toy_config(dir.path());
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.results.len(), 2 * 3 * 2);
    let on_disk = read_results(&dir.path().join("out/results.csv")).unwrap();
    assert_eq!(on_disk, outcome.results);
    for file in ["results.csv", "forests.csv", "fronts.csv", "apf.csv", "ranks.csv"] {
        assert!(dir.path().join("out").join(file).exists(), "{file} missing");
    }
    for fold in 0..2 {
        for method in ["reduced-error", "random", "rank-ie"] {
            for k in [2, 4] {
                let n = outcome
                    .results
                    .iter()
                    .filter(|r| r.fold == fold && r.method == method && r.k == k && r.n_l == 16)
                    .count();
                assert_eq!(n, 1, "fold {fold} {method} K={k}");
            }
        }
    }
}

#[test]
fn cached_forests_match_recorded_hashes() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_csv(dir.path());
    let cfg = toy_config(dir.path());
    let first = run_experiment(&cfg).unwrap();
    for record in &first.forests {
        let path = dir
            .path()
            .join("out/forests")
            .join(format!("fold{}_nl{}_seed{}.json", record.fold, record.n_l, record.seed));
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(sha256_hex(&bytes), record.sha256);
    }
    // A second run reuses the cache and reproduces everything.
    let second = run_experiment(&cfg).unwrap();
    assert_eq!(first, second);
}

#[test]
fn random_with_all_trees_matches_base_forest() {
    let ds = synthetic_classification(400, 5, 2, 0.1, 3).unwrap();
    let mut cfg = ExperimentConfig::new(DatasetSpec {
        path: "unused".into(),
        label_column: "y".into(),
        categorical_columns: vec![],
        name: Some("syn".into()),
    });
    cfg.folds = 3;
    cfg.n_trees = 12;
    cfg.max_leaves = vec![8];
    cfg.seed = 2;
    cfg.methods = vec![MethodSpec::new("random", vec![12])];
    let outcome = run_experiment_on(&cfg, &ds, &MethodRegistry::default()).unwrap();

    let folds = kfold(&ds, 3, forestlr::rng::derive_seed(2, &[0xf01d])).unwrap();
    for row in &outcome.results {
        let split = &folds[row.fold];
        let seed = forestlr::rng::derive_seed(2, &[row.fold as u64, 8]);
        let forest = train_forest(&ds, &split.train_indices, 12, 8, seed).unwrap();
        let acc = forest.accuracy(&forest.all(), &ds, &split.test_indices).unwrap();
        assert_eq!(row.accuracy, acc);
    }
}

struct FirstTrees;

impl Pruner for FirstTrees {
    fn name(&self) -> &str {
        "first"
    }

    fn prune(&self, forest: &Forest, _: &Dataset, _: &[usize], k: usize, seed: u64) -> Result<PruneSelection> {
        PruneSelection::new((0..k).collect(), forest.n_trees(), "first", Some(seed))
    }
}

#[test]
fn custom_pruner_joins_the_grid() {
    let ds = synthetic_classification(200, 3, 2, 0.1, 8).unwrap();
    let mut registry = MethodRegistry::default();
    registry.register(Arc::new(FirstTrees));
    let mut cfg = ExperimentConfig::new(DatasetSpec {
        path: "unused".into(),
        label_column: "y".into(),
        categorical_columns: vec![],
        name: None,
    });
    cfg.folds = 2;
    cfg.n_trees = 6;
    cfg.max_leaves = vec![4];
    cfg.methods = vec![MethodSpec::new("first", vec![1, 3]), MethodSpec::new("random", vec![3])];
    let outcome = run_experiment_on(&cfg, &ds, &registry).unwrap();
    assert_eq!(outcome.results.len(), 2 * 3);

    cfg.methods = vec![MethodSpec::new("nope", vec![1])];
    let err = run_experiment_on(&cfg, &ds, &MethodRegistry::default()).unwrap_err();
    assert!(err.to_string().contains("nope"), "{err}");
}

#[test]
fn bad_k_reports_the_cell() {
    let ds = synthetic_classification(200, 3, 2, 0.1, 8).unwrap();
    let mut cfg = ExperimentConfig::new(DatasetSpec {
        path: "unused".into(),
        label_column: "y".into(),
        categorical_columns: vec![],
        name: Some("syn".into()),
    });
    cfg.folds = 2;
    cfg.n_trees = 4;
    cfg.max_leaves = vec![4];
    cfg.methods = vec![MethodSpec::new("random", vec![9])];
    let err = run_experiment_on(&cfg, &ds, &MethodRegistry::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("K") || msg.contains('9'), "{msg}");
}
