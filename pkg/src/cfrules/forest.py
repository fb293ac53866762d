"""CART random forest whose leaf partition backs every estimator.

Trees are grown on a bootstrap sample (optional) and then every training row
is dropped down the finished tree, so a leaf's ``samples`` are *all* training
rows routed to it and its value is their mean. This keeps the forest
prediction exactly equal to the weighted mean ``sum_i w_i(x) Y_i``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .data_model import Dataset, Hyperrectangle

FORMAT_VERSION = "cfrules-forest/1"


class ForestFormatError(ValueError):
    pass


class TrainingError(ValueError):
    pass


@dataclass
class Tree:
    """Preorder node arrays. ``feature == -1`` marks a leaf.

    Routing: ``x`` goes left iff ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray = None
    samples: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def apply(self, X) -> np.ndarray:
        """Leaf id reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def populate(self, X, y, task: str, n_classes: int):
        """Route the training rows and set leaf samples and values."""
        leaf_of = self.apply(X)
        order = np.argsort(leaf_of, kind="stable")
        bounds = np.searchsorted(leaf_of[order], self.leaves)
        ends = np.append(bounds[1:], len(order))
        width = n_classes if task == "classification" else 1
        self.value = np.zeros((self.n_nodes, width))
        self.samples = {}
        for leaf, a, b in zip(self.leaves, bounds, ends):
            rows = order[a:b]
            if len(rows) == 0:
                raise TrainingError(f"leaf {leaf} received no training rows")
            self.samples[int(leaf)] = rows
            self.value[leaf] = _leaf_value(y[rows], task, n_classes)

    def leaf_bounds(self) -> dict:
        """Leaf id -> (lo, hi) arrays; the leaf cell is ``lo < x <= hi``."""
        p = int(self.feature.max()) + 1 if (self.feature >= 0).any() else 0
        return self._bounds(p)

    def _bounds(self, p: int) -> dict:
        out = {}
        stack = [(0, np.full(p, -math.inf), np.full(p, math.inf))]
        while stack:
            node, lo, hi = stack.pop()
            j = self.feature[node]
            if j < 0:
                out[int(node)] = (lo, hi)
                continue
            t = self.threshold[node]
            hl = hi.copy()
            hl[j] = min(hi[j], t)
            lr = lo.copy()
            lr[j] = max(lo[j], t)
            stack.append((self.right[node], lr, hi))
            stack.append((self.left[node], lo, hl))
        return out


def _leaf_value(y, task, n_classes):
    if task == "classification":
        return np.bincount(y.astype(int), minlength=n_classes) / len(y)
    return np.array([y.mean()])


class Forest:
    """An ensemble of CART trees plus the training table it was grown on."""

    def __init__(self, trees, task, X, y, n_classes=0, seed=None, params=None):
        self.trees = list(trees)
        self.task = task
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.n_classes = int(n_classes)
        self.seed = seed
        self.params = dict(params or {})

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_train(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def predict(self, X) -> np.ndarray:
        """Regression: (m,) means. Classification: (m, C) class frequencies."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acc = np.zeros((X.shape[0], self.trees[0].value.shape[1]))
        for tree in self.trees:
            acc += tree.value[tree.apply(X)]
        acc /= self.n_trees
        return acc[:, 0] if self.task == "regression" else acc

    def predict_label(self, X) -> np.ndarray:
        """Class code (argmax, lowest code on ties) or the regression value."""
        out = self.predict(X)
        if self.task == "classification":
            return np.argmax(out, axis=1).astype(float)
        return out

    def apply(self, X) -> np.ndarray:
        """(m, n_trees) leaf ids."""
        return np.stack([t.apply(X) for t in self.trees], axis=1)

    def point_weights(self, x) -> np.ndarray:
        """Dense length-n weight vector of the forest at ``x``."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        k = self.n_trees
        rows, share = [], []
        for tree in self.trees:
            leaf_rows = tree.samples[int(tree.apply(x)[0])]
            rows.append(leaf_rows)
            share.append(np.full(len(leaf_rows), 1.0 / (k * len(leaf_rows))))
        return np.bincount(np.concatenate(rows), weights=np.concatenate(share),
                           minlength=self.n_train)

    def split_frequency(self) -> dict:
        """Feature index -> number of internal nodes splitting on it."""
        counts = np.zeros(self.p, dtype=int)
        for tree in self.trees:
            f = tree.feature[tree.feature >= 0]
            counts += np.bincount(f, minlength=self.p)
        return {j: int(c) for j, c in enumerate(counts) if c > 0}

    def leaf_region(self, tree_index: int, leaf: int) -> Hyperrectangle:
        """Closed-interval view of a leaf cell, supported on the split features of its path."""
        lo, hi = self._leaf_bounds[tree_index][leaf]
        return Hyperrectangle({j: (lo[j], hi[j]) for j in range(self.p)
                               if lo[j] > -math.inf or hi[j] < math.inf})

    @cached_property
    def _leaf_bounds(self) -> list:
        return [t._bounds(self.p) for t in self.trees]

    @cached_property
    def flat(self):
        from ._engine import FlatForest
        return FlatForest(self)

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        trees = []
        for t in self.trees:
            nodes = []
            for i in range(t.n_nodes):
                if t.feature[i] >= 0:
                    nodes.append({"id": i, "feature": int(t.feature[i]),
                                  "threshold": float(t.threshold[i]),
                                  "left": int(t.left[i]), "right": int(t.right[i])})
                else:
                    nodes.append({"id": i, "leaf": True,
                                  "value": [float(v) for v in t.value[i]],
                                  "samples": [int(r) for r in t.samples[i]]})
            trees.append({"nodes": nodes})
        return {
            "version": FORMAT_VERSION,
            "task": self.task,
            "seed": self.seed,
            "n_classes": self.n_classes,
            "params": self.params,
            "train": {"X": self.X.tolist(), "y": self.y.tolist()},
            "trees": trees,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if not isinstance(d, dict) or d.get("version") != FORMAT_VERSION:
            raise ForestFormatError(f"unsupported forest format: {d.get('version') if isinstance(d, dict) else d!r}")
        try:
            X = np.array(d["train"]["X"], dtype=float)
            y = np.array(d["train"]["y"], dtype=float)
            trees = []
            for td in d["trees"]:
                nodes = td["nodes"]
                n = len(nodes)
                feature = np.full(n, -1, dtype=np.int64)
                threshold = np.full(n, np.nan)
                left = np.full(n, -1, dtype=np.int64)
                right = np.full(n, -1, dtype=np.int64)
                value = np.zeros((n, len(next(nd["value"] for nd in nodes if nd.get("leaf")))))
                samples = {}
                for nd in nodes:
                    i = nd["id"]
                    if nd.get("leaf"):
                        value[i] = nd["value"]
                        samples[i] = np.array(nd["samples"], dtype=np.int64)
                    else:
                        feature[i], threshold[i] = nd["feature"], nd["threshold"]
                        left[i], right[i] = nd["left"], nd["right"]
                trees.append(Tree(feature, threshold, left, right, value, samples))
        except (KeyError, TypeError, ValueError, StopIteration) as exc:
            raise ForestFormatError(f"malformed forest file: {exc}") from None
        return cls(trees, d["task"], X, y, d.get("n_classes", 0), d.get("seed"), d.get("params"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ForestFormatError(f"{path}: not JSON: {exc}") from None
        return cls.from_dict(d)


def serialize(forest: Forest, path):
    forest.save(path)


def deserialize(path) -> Forest:
    return Forest.load(path)


# training ----------------------------------------------------------------

def train(ds: Dataset, n_trees: int = 20, max_depth: int | None = 10, min_leaf: int | None = None,
          bootstrap: bool = True, seed: int = 0, max_features=None) -> Forest:
    """Grow a CART forest on ``ds`` (Gini for class targets, variance for real ones).

    ``max_features`` is the number of features tried per split; default
    sqrt(p) for classification and p/3 for regression. When none of the sampled
    features admits a valid split, the remaining ones are tried in turn.
    """
    if n_trees < 1 or (max_depth is not None and max_depth < 1) or (min_leaf is not None and min_leaf < 1):
        raise ValueError("n_trees, max_depth and min_leaf must be >= 1")
    task = "classification" if ds.target_kind == "class" else "regression"
    if min_leaf is None:
        min_leaf = 1 if task == "classification" else 5
    p = ds.p
    if max_features is None:
        max_features = max(1, int(math.sqrt(p))) if task == "classification" else max(1, p // 3)
    max_features = int(min(max(1, max_features), p))
    n_classes = len(ds.classes) if task == "classification" else 0
    if task == "classification" and len(np.unique(ds.y)) < 2:
        raise TrainingError("classification target has a single class")
    if task == "regression" and np.ptp(ds.y) == 0:
        raise TrainingError("regression target is constant")

    X, y = ds.X, ds.y
    depth_cap = max_depth if max_depth is not None else 10 ** 9
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, ds.n, ds.n) if bootstrap else np.arange(ds.n)
        tree = _grow(X[idx], y[idx], task, n_classes, depth_cap, min_leaf, max_features, rng)
        tree.populate(X, y, task, n_classes)
        trees.append(tree)
    params = {"n_trees": n_trees, "max_depth": max_depth, "min_leaf": min_leaf,
              "bootstrap": bootstrap, "max_features": max_features}
    return Forest(trees, task, X, y, n_classes, seed, params)


def _grow(X, y, task, n_classes, max_depth, min_leaf, max_features, rng) -> Tree:
    feature, threshold, left, right = [], [], [], []
    onehot = np.eye(n_classes)[y.astype(int)] if task == "classification" else None

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        return len(feature) - 1

    # ids are assigned on pop; pushing right before left yields preorder
    stack = [(-1, None, np.arange(len(y)), 0)]
    while stack:
        parent, side, idx, depth = stack.pop()
        node = new_node()
        if side == "left":
            left[parent] = node
        elif side == "right":
            right[parent] = node
        if depth >= max_depth or len(idx) < 2 * min_leaf or _is_pure(y[idx], task):
            continue
        found = _best_split(X[idx], y[idx], onehot[idx] if onehot is not None else None,
                            task, min_leaf, max_features, rng)
        if found is None:
            continue
        j, t = found
        go_left = X[idx, j] <= t
        feature[node], threshold[node] = j, t
        stack.append((node, "right", idx[~go_left], depth + 1))
        stack.append((node, "left", idx[go_left], depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64))


def _is_pure(y, task) -> bool:
    return bool(np.all(y == y[0]))


def _best_split(X, y, onehot, task, min_leaf, max_features, rng):
    p = X.shape[1]
    best_cost, best_j, best_t = math.inf, None, None
    for pos, j in enumerate(rng.permutation(p)):
        if pos >= max_features and best_j is not None:
            break
        found = _scan_feature(X[:, j], y, onehot, task, min_leaf)
        if found is None:
            continue
        cost, t = found
        if cost < best_cost or (cost == best_cost and j < best_j):
            best_cost, best_j, best_t = cost, int(j), t
    if best_j is None:
        return None
    return best_j, best_t


def _scan_feature(x, y, onehot, task, min_leaf):
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n_left = np.arange(1, n)
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not valid.any():
        return None
    if task == "classification":
        c_left = np.cumsum(onehot[order], axis=0)[:-1]
        c_right = c_left[-1] + onehot[order[-1]] - c_left
        score = (c_left ** 2).sum(axis=1) / n_left + (c_right ** 2).sum(axis=1) / (n - n_left)
    else:
        ys = y[order]
        s_left = np.cumsum(ys)[:-1]
        s_right = ys.sum() - s_left
        score = s_left ** 2 / n_left + s_right ** 2 / (n - n_left)
    score = np.where(valid, score, -math.inf)
    i = int(np.argmax(score))
    t = (xs[i] + xs[i + 1]) / 2.0
    if not xs[i] <= t < xs[i + 1]:
        t = xs[i]
    return -float(score[i]), float(t)


def build_tree(nodes, X, y, task="classification", n_classes=None) -> Tree:
    """Tree from an explicit preorder node list, populated with ``(X, y)``.

    Each entry is ``None`` for a leaf or ``(feature, threshold, left_id, right_id)``.
    """
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int64)
    threshold = np.full(n, np.nan)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    for i, nd in enumerate(nodes):
        if nd is not None:
            feature[i], threshold[i], left[i], right[i] = nd
    tree = Tree(feature, threshold, left, right)
    y = np.asarray(y, dtype=float)
    if task == "classification" and n_classes is None:
        n_classes = int(y.max()) + 1
    tree.populate(np.asarray(X, dtype=float), y, task, n_classes or 0)
    return tree


def forest_from_trees(trees, X, y, task="classification", n_classes=None) -> Forest:
    y = np.asarray(y, dtype=float)
    if task == "classification" and n_classes is None:
        n_classes = int(y.max()) + 1
    return Forest(trees, task, X, y, n_classes or 0, seed=None, params={"hand_built": True})
