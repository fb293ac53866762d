"""Counterfactual samples drawn inside a rule.

The energy is the isolation-forest anomaly score (higher means more
anomalous); simulated annealing resamples coordinates of ``S`` from their
empirical pools inside the rule rectangle and keeps the least anomalous state.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data_model import Hyperrectangle

EULER_GAMMA = 0.5772156649


def average_path_length(n) -> np.ndarray:
    """c(n): mean unsuccessful-search path length in a BST of n nodes."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n > 2
    out[n == 2] = 1.0
    m = n[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return out


class IsolationForest:
    """Isolation trees on random subsamples, stored as flat node arrays."""

    def __init__(self, feature, threshold, left, right, value, roots, psi, n_trees, seed):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value          # depth + c(size) at leaves
        self.roots = roots
        self.psi = int(psi)
        self.n_trees = int(n_trees)
        self.seed = seed
        self.c_psi = float(average_path_length(self.psi))
        self.tau = math.nan

    def path_lengths(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _mean_path(self.feature, self.threshold, self.left, self.right, self.value,
                          self.roots, X)

    def score(self, X) -> np.ndarray:
        """Anomaly score ``2 ** (-E[h(x)] / c(psi))`` in (0, 1)."""
        return np.exp2(-self.path_lengths(X) / self.c_psi)

    def score_one(self, x) -> float:
        return float(self.score(np.asarray(x, dtype=float)[None, :])[0])

    def is_inlier(self, X) -> np.ndarray:
        return self.score(X) <= self.tau

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "roots": self.roots.tolist(), "psi": self.psi,
                "n_trees": self.n_trees, "seed": self.seed, "tau": self.tau}

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationForest":
        ints = {k: np.array(d[k], dtype=np.int64) for k in ("feature", "left", "right", "roots")}
        forest = cls(ints["feature"], np.array(d["threshold"], dtype=float), ints["left"],
                     ints["right"], np.array(d["value"], dtype=float), ints["roots"], d["psi"],
                     d["n_trees"], d.get("seed"))
        forest.tau = float(d["tau"])
        return forest

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "IsolationForest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@njit(cache=True)
def _mean_path(feature, threshold, left, right, value, roots, X):
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        total = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            total += value[node]
        out[i] = total / roots.shape[0]
    return out


def fit_isolation_forest(X, n_trees: int = 100, psi: int | None = None, seed=0,
                         contamination: float = 0.1) -> IsolationForest:
    """Fit on the rows of ``X`` (array or Dataset).

    ``tau`` is set to the ``1 - contamination`` quantile of the training scores.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    n, p = X.shape
    psi = min(256, n) if psi is None else int(psi)
    if not 2 <= psi <= n:
        raise ValueError(f"psi must lie in [2, n={n}], got {psi}")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    limit = math.ceil(math.log2(psi))
    rng = np.random.default_rng(seed)
    feature, threshold, left, right, value, roots = [], [], [], [], [], []
    for _ in range(n_trees):
        sub = X[rng.choice(n, size=psi, replace=False)]
        roots.append(len(feature))
        stack = [(sub, 0, -1, False)]
        while stack:
            rows, depth, parent, is_right = stack.pop()
            node = len(feature)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            lo, hi = rows.min(axis=0), rows.max(axis=0)
            splittable = np.flatnonzero(hi > lo)
            if depth >= limit or len(rows) <= 1 or len(splittable) == 0:
                value[node] = depth + float(average_path_length(len(rows)))
                continue
            j = int(rng.choice(splittable))
            t = rng.uniform(lo[j], hi[j])
            if t <= lo[j]:
                t = np.nextafter(lo[j], hi[j])
            feature[node], threshold[node] = j, t
            go_left = rows[:, j] < t
            stack.append((rows[~go_left], depth + 1, node, True))
            stack.append((rows[go_left], depth + 1, node, False))
    forest = IsolationForest(np.array(feature, dtype=np.int64), np.array(threshold),
                             np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                             np.array(value), np.array(roots, dtype=np.int64), psi, n_trees, seed)
    forest.tau = float(np.quantile(forest.score(X), 1.0 - contamination))
    return forest


@dataclass(frozen=True)
class AnnealingConfig:
    max_iter: int = 1000
    T0: float = 1.0
    r: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")
        if not 0 < self.r < 1:
            raise ValueError("cooling rate r must lie in (0, 1)")

    def to_json(self) -> dict:
        return {"max_iter": self.max_iter, "T0": self.T0, "r": self.r, "seed": self.seed}


@dataclass
class Recourse:
    x_cf: np.ndarray
    changed: tuple
    energy: float
    rule_id: int = 0
    accepted_by_model: bool | None = None
    instance_id: object = None
    seed: int | None = None
    trace: list = field(default_factory=list, repr=False)      # best energy after each step
    accepted: list = field(default_factory=list, repr=False)   # energy change of accepted moves

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "x_cf": [float(v) for v in self.x_cf],
            "changed_features": [int(j) for j in self.changed],
            "energy": float(self.energy),
            "rule_id": self.rule_id,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Recourse":
        return cls(np.array(d["x_cf"], dtype=float), tuple(d["changed_features"]), d["energy"],
                   d.get("rule_id", 0), instance_id=d.get("instance_id"), seed=d.get("seed"))


class EmptyPoolError(ValueError):
    """No training row falls inside the rule rectangle."""


def value_pools(X, S, rect: Hyperrectangle) -> dict:
    """Per coordinate of ``S``, the values ``X[i, j]`` of rows with ``X[i, S]`` in ``rect``."""
    X = np.asarray(X, dtype=float)
    S = tuple(S)
    inside = rect.restrict(S).contains_rows(X)
    pools = {j: X[inside, j] for j in S}
    for j in S:
        if len(pools[j]) == 0:
            raise EmptyPoolError(f"empty value pool for feature {j} in {rect!r}")
    return pools


def sample_recourse(x, S, rule, X, iforest: IsolationForest,
                    cfg: AnnealingConfig = AnnealingConfig(), rule_id: int = 0) -> Recourse:
    """Simulated annealing inside rectangle ``rule_id`` of ``rule``.

    ``rule`` is a CounterfactualRule or a bare Hyperrectangle. ``X`` holds the
    training rows whose values feed the pools. ``max_iter`` counts visited
    states, the initial one included.
    """
    rect = rule if isinstance(rule, Hyperrectangle) else _rectangle(rule, rule_id)
    x = np.asarray(x, dtype=float)
    S = tuple(sorted(S))
    if not S:
        raise ValueError("S must be nonempty")
    pools = value_pools(getattr(X, "X", X), S, rect)
    rng = np.random.default_rng(cfg.seed)
    z = x.copy()
    for j in S:
        z[j] = pools[j][rng.integers(len(pools[j]))]
    energy = iforest.score_one(z)
    best, best_e = z.copy(), energy
    trace, accepted = [best_e], []
    T = cfg.T0
    k = len(S)
    for _ in range(cfg.max_iter - 1):
        bits = int(rng.integers(1, 2 ** k))
        z_new = z.copy()
        for b, j in enumerate(S):
            if bits >> b & 1:
                z_new[j] = pools[j][rng.integers(len(pools[j]))]
        e_new = iforest.score_one(z_new)
        delta = e_new - energy
        u = rng.random()
        if delta < 0 or (delta > 0 and math.exp(-delta / T) > u):
            z, energy = z_new, e_new
            accepted.append(delta)
            if energy < best_e:
                best, best_e = z.copy(), energy
        trace.append(best_e)
        T *= cfg.r
    return Recourse(best, S, best_e, rule_id, seed=cfg.seed, trace=trace, accepted=accepted)


def _rectangle(rule, rule_id):
    if rule.empty:
        raise ValueError("cannot sample from an empty rule")
    return rule.rectangles[rule_id]


def l1_project(x, rect: Hyperrectangle, categorical=()) -> np.ndarray:
    """Closest point of ``rect`` to ``x`` (l1 and l2), off-support coordinates untouched.

    Coordinates listed in ``categorical`` snap to the nearest integer code in
    the interval when one exists.
    """
    z = np.array(x, dtype=float)
    cat = set(categorical)
    for j, (lo, hi) in rect.intervals.items():
        v = min(max(z[j], lo), hi)
        if j in cat and v != round(v):
            a, b = math.ceil(lo), math.floor(hi)
            if a <= b:
                v = float(min(max(round(z[j]), a), b))
        z[j] = v
    return z


def dump_jsonl(recourses, path) -> None:
    with open(path, "w") as fh:
        for r in recourses:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def load_jsonl(path) -> list:
    with open(path) as fh:
        return [Recourse.from_json(json.loads(line)) for line in fh if line.strip()]
