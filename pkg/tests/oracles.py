"""Slow reference implementations used as test oracles.

They work from materialized leaf boxes and direct membership tests and share
no code with the package estimators beyond the Forest container.
"""
import itertools
import math

import numpy as np


def leaf_boxes(tree, p):
    """Leaf id -> (lo, hi) with the leaf cell ``lo < x <= hi``, by explicit path walk."""
    out = {}

    def walk(node, lo, hi):
        j = tree.feature[node]
        if j < 0:
            out[int(node)] = (lo, hi)
            return
        t = tree.threshold[node]
        walk(tree.left[node], lo, [min(h, t) if k == j else h for k, h in enumerate(hi)])
        walk(tree.right[node], [max(l, t) if k == j else l for k, l in enumerate(lo)], hi)

    walk(0, [-math.inf] * p, [math.inf] * p)
    return out


def leaf_rows(tree, X, leaf):
    lo, hi = leaf
    X = np.asarray(X, dtype=float)
    return np.flatnonzero(np.all((X > lo) & (X <= hi), axis=1))


def _point_ok(box, x, point):
    lo, hi = box
    return all(lo[j] < x[j] <= hi[j] for j in point)


def oracle_pool(forest, x, point=(), region=None):
    """Per-tree pooled row sets under point coordinates ``point`` (values from ``x``)
    and a closed box ``region`` {j: (a, b)}; other features free."""
    region = region or {}
    X = forest.X
    p = forest.p
    pools = []
    for tree in forest.trees:
        boxes = leaf_boxes(tree, p)
        point_reached = [b for b in boxes.values() if _point_ok(b, x, point)]
        cell_lo = {j: max(b[0][j] for b in point_reached) for j in point}
        cell_hi = {j: min(b[1][j] for b in point_reached) for j in point}
        reached = [b for b in point_reached
                   if all(b[0][j] < hi and lo <= b[1][j] for j, (lo, hi) in region.items())]
        rows = set()
        for b in reached:
            for i in leaf_rows(tree, X, b):
                ok = all(cell_lo[j] < X[i, j] <= cell_hi[j] for j in point)
                ok = ok and all(lo <= X[i, j] <= hi for j, (lo, hi) in region.items())
                if ok:
                    rows.add(int(i))
        pools.append(sorted(rows))
    return pools


def oracle_weights(forest, x, point=(), region=None):
    pools = oracle_pool(forest, x, point, region)
    nonempty = [r for r in pools if r]
    w = np.zeros(forest.n_train)
    for rows in nonempty:
        w[rows] += 1.0 / (len(nonempty) * len(rows))
    return w


def oracle_cdp(forest, x, S, target):
    point = [j for j in range(forest.p) if j not in set(S)]
    w = oracle_weights(forest, x, point)
    return float(w @ target.contains(forest.y))


def oracle_reached(forest, x, point=(), region=None):
    """Per tree, leaves whose box meets the condition (direct intersection test)."""
    region = region or {}
    out = []
    for tree in forest.trees:
        boxes = leaf_boxes(tree, forest.p)
        out.append(sorted(l for l, b in boxes.items() if _point_ok(b, x, point)
                          and all(b[0][j] < hi and lo <= b[1][j] for j, (lo, hi) in region.items())))
    return out


def oracle_minimal_subsets(value, p, pi):
    """All subsets of the smallest size with ``value(S) >= pi``, over all 2^p subsets."""
    scored = {S: value(S) for k in range(p + 1) for S in itertools.combinations(range(p), k)}
    hits = [S for S, v in scored.items() if v >= pi]
    if not hits:
        return set()
    m = min(len(S) for S in hits)
    return {S for S in hits if len(S) == m}


def grid_union(rects, grid):
    """Membership of each grid point in the union of closed boxes."""
    inside = np.zeros(len(grid), dtype=bool)
    for r in rects:
        inside |= r.contains_rows(grid)
    return inside
