"""Recourse metrics and the local-rule experiment loop.

Rates come with their denominators. Classification results are split by
direction: ``pos`` holds queries predicted 1 (target 0), ``neg`` queries
predicted 0 (target 1).
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data_model import TargetSet
from .divergent import EXHAUSTIVE
from .recourse import AnnealingConfig, EmptyPoolError, Recourse, sample_recourse
from .rules import explain_local

SIGMAS = (0.01, 0.025, 0.05)


def fingerprint(config: dict) -> str:
    """Short hash of a resolved configuration."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _as_list(recourses):
    recourses = list(recourses)
    if not recourses:
        raise ValueError("no recourses to evaluate")
    return recourses


def _cf_matrix(recourses):
    return np.array([r.x_cf for r in recourses], dtype=float)


def in_target(model, X, targets) -> np.ndarray:
    """Whether the model output on each row lies in its target."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pred = model.predict_label(X)
    if isinstance(targets, TargetSet):
        return targets.contains(pred)
    return np.array([t.contains(v) for t, v in zip(targets, pred)], dtype=bool)


def accuracy(model, recourses, target) -> float:
    """Fraction of recourses whose prediction lies in ``target`` (one TargetSet or one per recourse)."""
    recourses = _as_list(recourses)
    return float(in_target(model, _cf_matrix(recourses), target).mean())


def plausibility(iforest, recourses) -> float:
    """Fraction of recourses scored as inliers (score <= tau)."""
    recourses = _as_list(recourses)
    return float(iforest.is_inlier(_cf_matrix(recourses)).mean())


def sparsity(recourses, queries) -> float:
    """Mean number of changed coordinates."""
    recourses = _as_list(recourses)
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    return float(np.mean(np.sum(_cf_matrix(recourses) != Q, axis=1)))


def quantile_edges(X_train, bins: int = 10) -> list:
    """Inner edges of equal-frequency bins per column."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    X_train = np.asarray(X_train, dtype=float)
    qs = np.arange(1, bins) / bins
    return [np.unique(np.quantile(X_train[:, j], qs)) for j in range(X_train.shape[1])]


def cost(recourses, queries, X_train, categorical_mask=None, bins: int = 10) -> float:
    """Mean summed bin distance; a categorical change costs 1."""
    recourses = _as_list(recourses)
    Z = _cf_matrix(recourses)
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    p = Z.shape[1]
    cat = np.zeros(p, dtype=bool) if categorical_mask is None else np.asarray(categorical_mask)
    edges = quantile_edges(X_train, bins)
    total = np.zeros(len(Z))
    for j in range(p):
        if cat[j]:
            total += Z[:, j] != Q[:, j]
        else:
            bz = np.searchsorted(edges[j], Z[:, j], side="right")
            bq = np.searchsorted(edges[j], Q[:, j], side="right")
            total += np.abs(bz - bq)
    return float(total.mean())


def perturb(x_cf, changed, sigma, rng, categorical_mask=None) -> np.ndarray:
    """Gaussian noise (std ``sigma``) on changed continuous coordinates, clipped to [0, 1]."""
    z = np.array(x_cf, dtype=float)
    cols = [j for j in changed if categorical_mask is None or not categorical_mask[j]]
    if sigma > 0 and cols:
        z[cols] = np.clip(z[cols] + rng.normal(0.0, sigma, size=len(cols)), 0.0, 1.0)
    return z


def stability(model, recourses, sigmas=SIGMAS, trials: int = 1, seed=0,
              categorical_mask=None) -> dict:
    """Per ``sigma``, fraction of (recourse, trial) pairs whose perturbed action keeps the output.

    Features are expected on the [0, 1] scale. Noise is seeded per recourse
    (by instance id, else position), so any subset sees the same draws.
    """
    recourses = _as_list(recourses)
    Z = _cf_matrix(recourses)
    base = model.predict_label(Z)
    keys = [int(r.instance_id) if isinstance(r.instance_id, (int, np.integer)) else i
            for i, r in enumerate(recourses)]
    out = {}
    for k, sigma in enumerate(sigmas):
        rngs = [np.random.default_rng([int(seed), k, key]) for key in keys]
        same = []
        for _ in range(trials):
            P = np.array([perturb(r.x_cf, r.changed, sigma, g, categorical_mask)
                          for r, g in zip(recourses, rngs)])
            same.append(model.predict_label(P) == base)
        out[float(sigma)] = float(np.mean(same))
    return out


# experiment loop --------------------------------------------------------------

OK, NO_SUBSET, NO_RULE, DEGENERATE, EMPTY_POOL = "ok", "no_subset", "no_rule", "degenerate", "empty_pool"


@dataclass
class InstanceResult:
    instance_id: int
    direction: str
    status: str
    target: TargetSet
    x: np.ndarray
    rule: object = None
    recourse: Recourse | None = None

    def to_json(self, features=None) -> dict:
        return {
            "instance_id": self.instance_id,
            "direction": self.direction,
            "status": self.status,
            "target": self.target.to_json(),
            "rule": self.rule.to_json(features) if self.rule is not None else None,
            "recourse": self.recourse.to_json() if self.recourse is not None else None,
        }


@dataclass
class DirectionMetrics:
    n_queries: int = 0
    n_recourses: int = 0
    n_degenerate: int = 0
    n_failed: int = 0
    accuracy: float = math.nan
    plausibility: float = math.nan
    sparsity: float = math.nan
    cost: float = math.nan
    stability: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in self.__dict__.items()}


@dataclass
class MetricReport:
    directions: dict
    config: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.config)

    def __getitem__(self, key) -> DirectionMetrics:
        return self.directions[key]

    def to_json(self) -> dict:
        return {"fingerprint": self.fingerprint, "config": self.config, "notes": self.notes,
                "directions": {k: v.to_json() for k, v in self.directions.items()}}

    def to_table(self) -> str:
        keys = list(self.directions)
        rows = [("queries", "n_queries"), ("recourses", "n_recourses"), ("degenerate", "n_degenerate"),
                ("failed", "n_failed"), ("Acc", "accuracy"), ("Psb", "plausibility"),
                ("Sparsity", "sparsity"), ("Cost", "cost")]
        sigmas = sorted({s for d in self.directions.values() for s in d.stability})
        lines = ["metric".ljust(14) + "".join(k.rjust(10) for k in keys)]
        for label, attr in rows:
            lines.append(label.ljust(14) + "".join(_fmt(getattr(self.directions[k], attr)).rjust(10)
                                                   for k in keys))
        for s in sigmas:
            lines.append(f"Stab s={s:g}".ljust(14) + "".join(
                _fmt(self.directions[k].stability.get(s, math.nan)).rjust(10) for k in keys))
        lines.append(f"fingerprint {self.fingerprint}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(v)
    return "n/a" if v is None or math.isnan(v) else f"{v:.2f}"


def directions_for(model, X, target=None) -> list:
    """(direction, TargetSet) per row: flip the predicted class, or use the fixed ``target``."""
    if target is not None:
        return [("all", target)] * len(X)
    pred = model.predict_label(X)
    return [("pos", TargetSet.of_class(0)) if v == 1 else ("neg", TargetSet.of_class(1)) for v in pred]


def explain_instance(explainer, iforest, X_train, x, target, pi=0.9, pi_c=0.9, K=10,
                     strategy=EXHAUSTIVE, cfg: AnnealingConfig = AnnealingConfig(), exclude=(),
                     max_subsets=None):
    """Rule search plus annealing for one query: (status, rule, recourse)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rules = explain_local(explainer, x, target, pi, pi_c, K, strategy, seed=cfg.seed,
                              exclude=exclude, max_subsets=max_subsets)
    head = rules[0]
    if head.degenerate:
        return DEGENERATE, head, None
    if head.empty:
        reason = head.diagnostics.get("reason")
        return (NO_SUBSET if reason else NO_RULE), head, None
    for rule in rules:
        for k in range(len(rule.rectangles)):
            try:
                return OK, rule, sample_recourse(x, rule.S, rule, X_train, iforest, cfg, rule_id=k)
            except EmptyPoolError:
                continue
    return EMPTY_POOL, head, None


def instance_seed(seed, instance_id) -> int:
    return int(np.random.SeedSequence([int(seed), int(instance_id)]).generate_state(1)[0])


_STATE = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)


def _run_one(task):
    i, x, direction, target = task
    s = _STATE
    cfg = AnnealingConfig(s["cfg"].max_iter, s["cfg"].T0, s["cfg"].r, instance_seed(s["seed"], i))
    status, rule, rec = explain_instance(s["explainer"], s["iforest"], s["X_train"], x, target,
                                         s["pi"], s["pi_c"], s["K"], s["strategy"], cfg,
                                         s["exclude"], s["max_subsets"])
    if rec is not None:
        rec.instance_id = i
    return InstanceResult(i, direction, status, target, x, rule, rec)


def run_local(model, explainer, iforest, X_train, queries, ids=None, target=None, pi=0.9, pi_c=0.9,
              K=10, strategy=EXHAUSTIVE, cfg: AnnealingConfig = AnnealingConfig(), seed=0, exclude=(),
              max_subsets=None, jobs: int = 1) -> list:
    """Explain and sample a recourse for every query row; results keep the input order.

    Per-instance seeds derive from ``seed`` and the instance id, so ``jobs``
    does not change the output.
    """
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    ids = list(range(len(Q))) if ids is None else [int(i) for i in ids]
    dirs = directions_for(model, Q, target)
    tasks = [(i, Q[k], d, t) for k, (i, (d, t)) in enumerate(zip(ids, dirs))]
    state = dict(explainer=explainer, iforest=iforest, X_train=np.asarray(X_train, dtype=float),
                 pi=pi, pi_c=pi_c, K=K, strategy=strategy, cfg=cfg, seed=seed,
                 exclude=tuple(exclude), max_subsets=max_subsets)
    if jobs <= 1:
        _init_worker(state)
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(state,)) as pool:
        return list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def summarize(results, model, iforest, X_train, categorical_mask=None, bins: int = 10,
              sigmas=(), trials: int = 1, seed=0, config=None) -> MetricReport:
    """Aggregate per-direction metrics; rates are over the produced recourses."""
    groups = {}
    for r in results:
        groups.setdefault(r.direction, []).append(r)
    if set(groups) - {"all"}:
        groups = {"pos": groups.get("pos", []), "neg": groups.get("neg", []), **groups}
    groups["overall"] = list(results)
    out = {}
    for name, rs in groups.items():
        m = DirectionMetrics(n_queries=len(rs))
        m.n_degenerate = sum(r.status == DEGENERATE for r in rs)
        done = [r for r in rs if r.recourse is not None]
        m.n_recourses = len(done)
        m.n_failed = m.n_queries - m.n_recourses - m.n_degenerate
        if done:
            recs = [r.recourse for r in done]
            Q = np.array([r.x for r in done])
            m.accuracy = accuracy(model, recs, [r.target for r in done])
            m.plausibility = plausibility(iforest, recs)
            m.sparsity = sparsity(recs, Q)
            m.cost = cost(recs, Q, X_train, categorical_mask, bins)
            if sigmas:
                m.stability = stability(model, recs, sigmas, trials, seed, categorical_mask)
        out[name] = m
    if "all" in out:
        del out["all"]
    notes = {"rates_over": "produced recourses", "sigma_is": "standard deviation",
             "cost_bins": bins, "noise_on": "changed continuous coordinates"}
    return MetricReport(out, dict(config or {}), notes)
