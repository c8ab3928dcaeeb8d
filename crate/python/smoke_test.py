"""Smoke test for the pyforestlr extension.

Build and run from the repository root:

    cargo build --release -p forestlr-python --features extension-module
    cp target/release/libpyforestlr.so python/pyforestlr.so
    python3 python/smoke_test.py
"""

import json

import pyforestlr as fl


def main():
    ds = fl.synthetic_classification(600, 5, 3, label_noise=0.1, seed=4)
    assert (ds.n_rows, ds.n_features, ds.n_classes) == (600, 5, 3)
    train, test = ds.kfold(3, seed=1)[0]

    forest = fl.train_forest(ds, 32, 16, seed=2, rows=train)
    assert forest.n_trees == 32
    base = forest.accuracy(ds, rows=test)

    re = fl.reduced_error_prune(forest, ds, 8, rows=train)
    rnd = fl.random_prune(forest, 8, seed=3)
    ie = fl.rank_prune_individual_error(forest, ds, 8, rows=train)
    for sel in (re, rnd, ie):
        assert sel.k == 8 and len(set(sel.selected)) == 8
        assert json.loads(sel.to_json())["K"] == 8

    full = fl.random_prune(forest, 32, seed=0)
    assert forest.accuracy(ds, rows=test, trees=full.selected) == base

    refined = fl.refine(forest, ds, trees=rnd.selected, rows=train, epochs=5, seed=3)
    w = refined.weights
    assert sum(1 for x in w if x > 0) == 8
    acc = refined.accuracy(ds, rows=test, trees=rnd.selected)

    size = fl.model_size_bytes(refined, trees=rnd.selected)
    assert size == 29 * refined.node_count(trees=rnd.selected)

    front = fl.pareto_front([(10, 0.5), (20, 1.0), (30, 0.9)])
    assert front == [(10, 0.5), (20, 1.0)]
    assert fl.apf([(10, 0.5), (20, 1.0)]) == 0.25

    src, manifest = fl.emit_source(refined, trees=rnd.selected)
    assert "predict" in src
    assert manifest["n_trees"] == 8 and manifest["expected_size_bytes"] == size

    again = fl.Forest.from_json(refined.to_json())
    assert again.predict(ds.row(0), trees=rnd.selected) == refined.predict(ds.row(0), trees=rnd.selected)

    print(f"base {base:.3f}  RF-LR K=8 {acc:.3f}  size {size} B")
    print("smoke test passed")


if __name__ == "__main__":
    main()
