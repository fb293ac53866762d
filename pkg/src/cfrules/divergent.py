"""Search for minimal divergent explanations.

A subset ``S`` is divergent when freeing ``S`` (holding the rest of ``x``, or
of a region ``R``, fixed) reaches the target with probability at least ``pi``.
The search returns every divergent subset of the smallest size found.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._engine import EmptySupportError
from .data_model import Hyperrectangle, TargetSet
from .forest import Forest
from .projected import cdp
from .regional import cdp_rule

EXHAUSTIVE = "exhaustive"
PATH_SAMPLED = "path_sampled"


@dataclass(frozen=True)
class DivergentExplanation:
    S: tuple
    cdp: float
    minimal: bool
    search_space: dict = field(default_factory=dict, compare=False)


@dataclass
class SearchResult:
    """Minimal-size divergent subsets, or ``best`` alone when none reached ``pi``."""

    explanations: list
    best: DivergentExplanation | None = None
    evaluated: int = 0

    def __iter__(self):
        return iter(self.explanations)

    def __len__(self):
        return len(self.explanations)

    def __getitem__(self, i):
        return self.explanations[i]

    def __bool__(self):
        return bool(self.explanations)

    def top(self) -> DivergentExplanation:
        """Highest CDP, ties broken lexicographically."""
        return max(self.explanations, key=lambda e: (e.cdp, tuple(-j for j in e.S)))


def candidate_features(forest: Forest, K: int = 10, exclude=()) -> list[int]:
    """Top-``K`` features by split count (ties: lower index); unused features dropped."""
    if K < 1:
        raise ValueError("K must be >= 1")
    freq = {j: c for j, c in forest.split_frequency().items() if j not in set(exclude)}
    if K > forest.p:
        warnings.warn(f"K={K} exceeds the {forest.p} features; truncating", stacklevel=2)
    return sorted(freq, key=lambda j: (-freq[j], j))[:K]


def path_subsets(forest: Forest, features=None) -> list[tuple]:
    """Distinct feature sets met along root-to-node paths, restricted to ``features``."""
    allowed = set(range(forest.p) if features is None else features)
    seen = set()
    for tree in forest.trees:
        stack = [(0, frozenset())]
        while stack:
            node, feats = stack.pop()
            j = tree.feature[node]
            if j < 0:
                continue
            if j in allowed:
                feats = feats | {int(j)}
            seen.add(feats)
            stack.append((tree.left[node], feats))
            stack.append((tree.right[node], feats))
    seen.discard(frozenset())
    return sorted((tuple(sorted(s)) for s in seen), key=lambda s: (len(s), s))


def _search(objective, candidates, pi, strategy, m, seed, path_sets, tag):
    if not 0 < pi <= 1:
        raise ValueError("pi must lie in (0, 1]")
    space = {"K": len(candidates), "strategy": strategy, "candidates": list(candidates)}
    best = None
    evaluated = 0

    def evaluate(S):
        nonlocal best, evaluated
        try:
            value = objective(S)
        except EmptySupportError:
            value = 0.0
        evaluated += 1
        if best is None or value > best.cdp:
            best = DivergentExplanation(S, value, False, space)
        return value

    if strategy == EXHAUSTIVE:
        for size in range(0, len(candidates) + 1):
            hits = []
            for S in itertools.combinations(sorted(candidates), size):
                value = evaluate(S)
                if value >= pi:
                    hits.append(DivergentExplanation(S, value, True, space))
            if hits:
                return SearchResult(hits, best, evaluated)
    elif strategy == PATH_SAMPLED:
        pool = list(path_sets)
        if len(pool) > m:
            rng = np.random.default_rng(seed)
            pick = np.sort(rng.choice(len(pool), size=m, replace=False))
            pool = [pool[i] for i in pick]
        pool.sort(key=lambda s: (len(s), s))
        space["m"] = m
        hits = []
        for S in pool:
            if hits and len(S) > len(hits[0].S):
                break
            value = evaluate(S)
            if value >= pi:
                hits.append(DivergentExplanation(S, value, False, space))
        if hits:
            return SearchResult(hits, best, evaluated)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    warnings.warn(f"no subset reached pi={pi} for {tag}; best cdp={best.cdp:.3f} at S={best.S}",
                  stacklevel=3)
    return SearchResult([], best, evaluated)


def minimal_divergent(forest: Forest, x, target: TargetSet, pi: float = 0.9, K: int = 10,
                      strategy: str = EXHAUSTIVE, m: int = 2000, seed: int = 0,
                      exclude=()) -> SearchResult:
    """Smallest subsets ``S`` with ``cdp(x, S) >= pi``.

    ``exhaustive`` enumerates subsets of the top-``K`` split features by
    increasing size (certified minimal within that set). ``path_sampled``
    evaluates up to ``m`` feature sets drawn from tree paths and flags its
    results as not certified. ``exclude`` lists immutable features.
    """
    cands = candidate_features(forest, min(K, forest.p), exclude)
    paths = path_subsets(forest, cands) if strategy == PATH_SAMPLED else ()
    return _search(lambda S: cdp(forest, x, S, target), cands, pi, strategy, m, seed, paths, "x")


def minimal_divergent_rule(forest: Forest, R: Hyperrectangle, target: TargetSet, pi: float = 0.9,
                           K: int = 10, strategy: str = EXHAUSTIVE, m: int = 2000, seed: int = 0,
                           exclude=()) -> SearchResult:
    """As :func:`minimal_divergent` with the rule CDP ``P(Y in target | X_Sbar in R_Sbar)``."""
    cands = candidate_features(forest, min(K, forest.p), exclude)
    paths = path_subsets(forest, cands) if strategy == PATH_SAMPLED else ()
    return _search(lambda S: cdp_rule(forest, R, S, target), cands, pi, strategy, m, seed, paths, "R")
