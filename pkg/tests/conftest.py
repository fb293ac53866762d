import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cfrules.data_model import CATEGORICAL, CONTINUOUS, Dataset, FeatureSpec  # noqa: E402
from cfrules.forest import build_tree, forest_from_trees, train  # noqa: E402

DATA = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def data_path(name):
    return os.path.join(DATA, name)


def have_data(*names):
    return all(os.path.exists(data_path(n)) for n in names)


def make_dataset(X, y, kind="class"):
    X = np.asarray(X, dtype=float)
    feats = tuple(FeatureSpec(f"x{j}", CONTINUOUS) for j in range(X.shape[1]))
    return Dataset(feats, X, y, "y", kind)


def random_forest(seed, n=None, p=None, n_trees=None, depth=None, task=None, integer=False):
    """Small random forest on random data; ``integer`` draws values from a coarse grid."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(20, 60))
    p = p or int(rng.integers(2, 5))
    X = rng.integers(0, 5, size=(n, p)).astype(float) if integer else rng.random((n, p))
    task = task or ("classification" if rng.random() < 0.6 else "regression")
    if task == "classification":
        y = (X[:, 0] + 0.5 * X[:, -1] + 0.3 * rng.standard_normal(n) > X[:, 0].mean() + 0.5 * X[:, -1].mean())
        y = y.astype(float)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        ds = make_dataset(X, y, "class")
    else:
        ds = make_dataset(X, X[:, 0] - X[:, -1] + 0.1 * rng.standard_normal(n), "real")
    return train(ds, n_trees or int(rng.integers(1, 4)), depth or int(rng.integers(1, 4)),
                 min_leaf=1, seed=seed)


# the two-feature toy with 10 green and 17 blue rows in the x0 <= 1 band ------

GREEN, BLUE = 1, 0


def toy_partition():
    """(forest, x, leaves) for the single-tree two-feature toy.

    Band x0 <= 1 is split on x1 at 1, 2, 3 into leaves holding 9 blue, 5 green,
    4 green and 1 green + 8 blue rows; the band x0 > 1 is one blue leaf.
    """
    rows = []

    def put(n, x1_lo, x1_hi, label, x0_lo=0.05, x0_hi=0.95):
        for k in range(n):
            u = (k + 0.5) / n
            rows.append((x0_lo + (x0_hi - x0_lo) * u, x1_lo + (x1_hi - x1_lo) * u, label))

    put(9, 0.1, 0.9, BLUE)        # leaf 2
    put(5, 1.1, 1.9, GREEN)       # leaf 4 (x1 in (1, 2])
    put(4, 2.1, 2.9, GREEN)       # leaf 6 (x1 in (2, 3])
    put(1, 3.5, 3.5, GREEN)       # leaf 7 (x1 > 3)
    put(8, 3.1, 3.9, BLUE)
    put(10, 0.1, 3.9, BLUE, 1.1, 1.9)   # leaf 8 (x0 > 1)
    A = np.array(rows)
    X, y = A[:, :2], A[:, 2]
    nodes = [
        (0, 1.0, 1, 8),
        (1, 1.0, 2, 3),
        None,
        (1, 2.0, 4, 5),
        None,
        (1, 3.0, 6, 7),
        None,
        None,
        None,
    ]
    tree = build_tree(nodes, X, y, "classification", 2)
    forest = forest_from_trees([tree], X, y, "classification", 2)
    x = np.array([0.5, 0.5])
    leaves = {"own": 2, "green_a": 4, "green_b": 6, "upper": 7, "right": 8}
    return forest, x, leaves


def two_leaf_tree(n=40000, seed=0):
    """Single regression tree with leaves 4 and 5 split at x1 = 2.9 under 1 < x0 <= 2."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.uniform(0, 3, n), rng.uniform(0, 4, n)])
    nodes = [(0, 1.0, 1, 2), None, (0, 2.0, 3, 6), (1, 2.9, 4, 5), None, None, None]
    value = {1: 2.0, 4: 0.0, 5: 1.0, 6: -1.0}
    probe = build_tree(nodes, X, np.zeros(n), "regression")
    y = np.array([value[int(l)] for l in probe.apply(X)]) + 0.1 * rng.standard_normal(n)
    tree = build_tree(nodes, X, y, "regression")
    return forest_from_trees([tree], X, y, "regression"), value


@pytest.fixture
def toy():
    return toy_partition()
