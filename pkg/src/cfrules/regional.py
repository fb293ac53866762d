"""Regional-forest weights: conditions mixing fixed values and intervals.

A region condition on feature ``j`` sends the traversal left when the
interval lies at or below the threshold, right when it lies above, and both
ways when ``lo <= t < hi``. Rows of all reached leaves are pooled (no
reweighting across the leaves a region straddles) after filtering on the
region coordinates. Fixed-value coordinates filter like the projected forest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._engine import FREE, POINT, REGION, EmptySupportError
from .data_model import Hyperrectangle, TargetSet
from .forest import Forest

__all__ = ["Condition", "EmptySupportError", "regional_weights", "regional_pool",
           "crp_local", "cdp_rule", "crp_rule"]


@dataclass
class Condition:
    """Per-feature constraint: point value, closed interval, or free.

    A degenerate interval ``[v, v]`` is stored as the point ``v``.
    """

    points: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        points = {int(j): float(v) for j, v in self.points.items()}
        clash = set(points) & {int(j) for j in self.regions}
        if clash:
            raise ValueError(f"features {sorted(clash)} carry both a point and a region")
        regions = {}
        for j, (a, b) in self.regions.items():
            a, b = float(a), float(b)
            if not a <= b:
                raise ValueError(f"empty interval [{a}, {b}] on feature {j}")
            if a == b:
                points[int(j)] = a
            else:
                regions[int(j)] = (a, b)
        self.points, self.regions = points, regions

    @classmethod
    def build(cls, x=None, point_on=(), rect: Hyperrectangle | None = None) -> "Condition":
        points = {j: x[j] for j in point_on}
        regions = dict(rect.intervals) if rect is not None else {}
        for j in points:
            regions.pop(j, None)
        return cls(points, regions)

    @property
    def constrained(self) -> set:
        return set(self.points) | set(self.regions)

    def arrays(self, p: int):
        kinds = np.full(p, FREE)
        lo = np.full(p, -math.inf)
        hi = np.full(p, math.inf)
        for j, v in self.points.items():
            kinds[j], lo[j], hi[j] = POINT, v, v
        for j, (a, b) in self.regions.items():
            kinds[j], lo[j], hi[j] = REGION, a, b
        return kinds, lo, hi


def regional_pool(forest: Forest, cond: Condition):
    return forest.flat.pool(*cond.arrays(forest.p))


def regional_weights(forest: Forest, cond: Condition) -> tuple[np.ndarray, int]:
    """(weights, leaf_mass). Raises EmptySupportError when nothing is pooled."""
    pool = regional_pool(forest, cond)
    return pool.weights(), pool.leaf_mass


def _mass(forest, cond) -> int:
    return int(forest.flat.counts(*cond.arrays(forest.p)).sum())


def _probability(forest, cond, target):
    return forest.flat.probability(*cond.arrays(forest.p), target)


def crp_local(forest: Forest, x, S, rect: Hyperrectangle, target: TargetSet) -> tuple[float, float]:
    """(CRP, plausibility) of moving ``x_S`` into ``rect`` with ``x_Sbar`` fixed.

    Plausibility is the pooled mass with ``X_S`` in ``rect`` over the mass with
    ``X_S`` free, both given ``X_Sbar = x_Sbar``.
    """
    S = set(S)
    fixed = [j for j in range(forest.p) if j not in S]
    num = Condition.build(x, fixed, rect.restrict(S))
    prob, mass = _probability(forest, num, target)
    den = _mass(forest, Condition.build(x, fixed))
    return prob, mass / den


def _rule_condition(forest, R: Hyperrectangle, S) -> Condition:
    S = set(S)
    return Condition.build(rect=R.restrict([j for j in range(forest.p) if j not in S]))


def cdp_rule(forest: Forest, R: Hyperrectangle, S, target: TargetSet) -> float:
    """P(Y in target | X_Sbar in R_Sbar)."""
    return _probability(forest, _rule_condition(forest, R, S), target)[0]


def crp_rule(forest: Forest, R: Hyperrectangle, S, rect: Hyperrectangle,
             target: TargetSet) -> tuple[float, float]:
    """(CRP, plausibility) for the region ``R`` with ``X_S`` moved into ``rect``."""
    outer = _rule_condition(forest, R, S)
    inner = Condition(outer.points, {**outer.regions, **rect.restrict(S).intervals})
    prob, mass = _probability(forest, inner, target)
    den = _mass(forest, outer)
    return prob, mass / den


def rule_support_rows(forest: Forest, R: Hyperrectangle, S) -> np.ndarray:
    """Rows with positive weight in the CDP of rule ``R`` and subset ``S``."""
    return np.unique(regional_pool(forest, _rule_condition(forest, R, S)).rows)
