"""Projected-forest weights and the CDP/SDP estimators.

Conditioning on a subset ``cond`` means routing ``x`` through each tree using
only splits on ``cond`` (both children are explored at any other split). The
cell of ``x`` in a tree is the intersection of the reached leaves projected
onto ``cond``; its members are the training rows whose ``cond`` coordinates
fall in that cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._engine import FREE, POINT
from .data_model import Hyperrectangle, TargetSet
from .forest import Forest


@dataclass
class ProjectedCell:
    tree: int
    leaves: np.ndarray        # leaf ids (local to the tree) reached by the traversal
    region: Hyperrectangle    # cell on the conditioning features, (lo, hi] read as closed
    members: np.ndarray       # training rows in the cell


def _as_index_set(cond, p) -> np.ndarray:
    mask = np.zeros(p, dtype=bool)
    mask[list(cond)] = True
    return mask


def _point_condition(forest: Forest, cond, x):
    mask = _as_index_set(cond, forest.p)
    vals = np.where(mask, np.asarray(x, dtype=float), 0.0)
    return np.where(mask, POINT, FREE), vals, vals


def _point_pool(forest: Forest, cond, x):
    return forest.flat.pool(*_point_condition(forest, cond, x))


def projected_weights(forest: Forest, cond, x) -> np.ndarray:
    """Dense weight vector of the projected forest conditioned on ``x[cond]``.

    ``x`` is a full-length feature vector; coordinates outside ``cond`` are
    ignored. With ``cond`` empty every row gets ``1/n``.
    """
    return _point_pool(forest, cond, x).weights()


def projected_cells(forest: Forest, cond, x) -> list[ProjectedCell]:
    """Per-tree view of the projected traversal (for inspection and tests)."""
    flat = forest.flat
    mask = _as_index_set(cond, forest.p)
    x = np.asarray(x, dtype=float)
    lo, hi = flat.point_cell(np.where(mask, x, 0.0), mask)
    pool = _point_pool(forest, cond, x)
    cells = []
    for ti, members in enumerate(pool.per_tree()):
        reached = pool.reached[flat.tree_of[pool.reached] == ti] - flat.offsets[ti]
        region = Hyperrectangle({j: (lo[ti, j], hi[ti, j]) for j in np.flatnonzero(mask)
                                 if lo[ti, j] > -math.inf or hi[ti, j] < math.inf})
        cells.append(ProjectedCell(ti, reached, region, members))
    return cells


def sdp(forest: Forest, x, S, target: TargetSet) -> float:
    """P(Y in target | X_S = x_S)."""
    return forest.flat.probability(*_point_condition(forest, S, x), target)[0]


def cdp(forest: Forest, x, S, target: TargetSet) -> float:
    """P(Y in target | X_Sbar = x_Sbar): the features in ``S`` are free to move."""
    S = set(S)
    return sdp(forest, x, [j for j in range(forest.p) if j not in S], target)


def support_rows(forest: Forest, x, S) -> np.ndarray:
    """Rows with positive weight in the CDP of ``S`` at ``x``."""
    return np.flatnonzero(projected_weights(forest, [j for j in range(forest.p) if j not in set(S)], x) > 0)
