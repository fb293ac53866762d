import json

import numpy as np
import pytest

from cfrules.forest import (Forest, ForestFormatError, TrainingError, build_tree, deserialize,
                            forest_from_trees, serialize, train)
from conftest import make_dataset, random_forest
from oracles import leaf_boxes


def synthetic(n=200, p=3, seed=0, kind="class"):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, p))
    y = (X[:, 0] > 0).astype(float) if kind == "class" else X[:, 0] + 0.1 * rng.standard_normal(n)
    return make_dataset(X, y, kind)


def test_same_seed_gives_identical_serialized_forests():
    ds = synthetic()
    assert train(ds, 20, 10, seed=5).dumps() == train(ds, 20, 10, seed=5).dumps()
    assert train(ds, 20, 10, seed=5).dumps() != train(ds, 20, 10, seed=6).dumps()


def test_separable_single_feature_fits_exactly():
    x = np.linspace(-1, 1, 40)
    ds = make_dataset(x[:, None], (x >= 0).astype(float))
    f = train(ds, 1, 10, bootstrap=False, seed=0)
    assert np.array_equal(f.predict_label(ds.X), ds.y)


def test_bad_hyperparameters_and_constant_targets():
    ds = synthetic()
    for kw in ({"n_trees": 0}, {"max_depth": 0}, {"min_leaf": 0}):
        with pytest.raises(ValueError):
            train(ds, **kw)
    with pytest.raises(TrainingError):
        train(make_dataset(np.ones((5, 1)), np.zeros(5)), 1)
    with pytest.raises(TrainingError):
        train(make_dataset(np.arange(5.0)[:, None], np.full(5, 2.0), "real"), 1)


def test_predict_single_tree_and_class_vectors():
    ds = synthetic(seed=1)
    f = train(ds, 1, 3, seed=0)
    tree = f.trees[0]
    X = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    assert np.array_equal(f.predict(X), tree.value[tree.apply(X)])
    f3 = train(ds, 3, 4, seed=0)
    assert np.allclose(f3.predict(X).sum(axis=1), 1.0)


@pytest.mark.parametrize("kind", ["class", "real"])
def test_predict_equals_weight_expansion(kind):
    ds = synthetic(n=50, seed=3, kind=kind)
    f = train(ds, 3, 4, seed=0)
    X = np.random.default_rng(4).uniform(-1, 1, (30, 3))
    for x in X:
        w = f.point_weights(x)
        assert w.min() >= 0 and abs(w.sum() - 1) < 1e-12
        if kind == "real":
            assert abs(f.predict(x)[0] - w @ f.y) < 1e-9
        else:
            per_class = np.array([w @ (f.y == c) for c in range(2)])
            assert np.allclose(f.predict(x)[0], per_class, atol=1e-9)


def test_point_weights_uniform_within_leaf():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0], [7.0]])
    y = np.array([0, 0, 0, 1, 1, 1, 1, 1.0])
    tree = build_tree([(0, 2.5, 1, 2), None, None], X, y)
    f = forest_from_trees([tree], X, y)
    w = f.point_weights(np.array([1.0]))
    assert np.allclose(w, [1 / 3] * 3 + [0] * 5)
    # a leaf holding exactly rows 3 and 7
    keep = np.array([3, 7])
    Xk = np.array([[0.0], [0.1], [0.2], [5.0], [0.3], [0.4], [0.5], [6.0]])
    tree3 = build_tree([(0, 1.0, 1, 2), None, None], Xk, y)
    w3 = forest_from_trees([tree3], Xk, y).point_weights(np.array([5.5]))
    assert set(np.flatnonzero(w3)) == set(keep) and np.allclose(w3[keep], 0.5)


def test_conditional_cdf_is_nondecreasing():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (200, 2))
    ds = make_dataset(X, X[:, 0] * 3 + rng.standard_normal(200), "real")
    f = train(ds, 10, 6, seed=1)
    grid = np.linspace(-4, 7, 200)
    for x in rng.uniform(0, 1, (20, 2)):
        w = f.point_weights(x)
        cdf = np.array([w @ (f.y <= v) for v in grid])
        assert np.all(np.diff(cdf) >= -1e-12)


def test_split_frequency():
    x = np.linspace(-1, 1, 30)
    X = np.column_stack([np.zeros(30), np.zeros(30), x])
    f = train(make_dataset(X, (x > 0).astype(float)), 4, 3, seed=0, max_features=3)
    assert set(f.split_frequency()) == {2}
    f = train(synthetic(seed=2), 20, 6, seed=0)
    freq = f.split_frequency()
    assert sum(freq.values()) == sum(int((t.feature >= 0).sum()) for t in f.trees)
    assert max(freq, key=freq.get) == 0


def test_serialization_round_trip(tmp_path):
    f = train(synthetic(seed=3), 5, 6, seed=0)
    path = tmp_path / "f.json"
    serialize(f, path)
    g = deserialize(path)
    assert g.n_trees == f.n_trees
    X = np.random.default_rng(0).uniform(-1, 1, (100, 3))
    assert np.array_equal(f.predict(X), g.predict(X))
    doc = json.loads(path.read_text())
    doc["version"] = "other/0"
    path.write_text(json.dumps(doc))
    with pytest.raises(ForestFormatError):
        Forest.load(path)


def test_leaf_regions_partition_space():
    for seed in range(5):
        f = random_forest(seed)
        pts = np.random.default_rng(seed).uniform(-0.5, 1.5, (1000, f.p))
        for ti, tree in enumerate(f.trees):
            regions = [f.leaf_region(ti, int(l)) for l in tree.leaves]
            boxes = leaf_boxes(tree, f.p)
            hits = np.zeros(len(pts), dtype=int)
            for lo, hi in boxes.values():
                hits += np.all((pts > lo) & (pts <= hi), axis=1)
            assert np.all(hits == 1)
            leaf = tree.apply(pts)
            for k, l in enumerate(tree.leaves):
                assert all(regions[k].contains(p) for p in pts[leaf == l])


def test_every_leaf_has_samples():
    for seed in range(10):
        f = random_forest(seed)
        for tree in f.trees:
            assert all(len(tree.samples[int(l)]) > 0 for l in tree.leaves)


def test_training_invariant_to_row_permutation_without_bootstrap():
    ds = synthetic(n=80, seed=7)
    perm = np.random.default_rng(1).permutation(ds.n)
    f = train(ds, 3, 5, bootstrap=False, seed=0, max_features=3)
    g = train(make_dataset(ds.X[perm], ds.y[perm]), 3, 5, bootstrap=False, seed=0, max_features=3)
    X = np.random.default_rng(2).uniform(-1, 1, (200, 3))
    assert np.array_equal(f.predict(X), g.predict(X))
