"""Vectorised traversal of all trees of a forest at once.

A condition is given per feature as a closed box ``[lo, hi]`` plus a kind:

* point (``lo == hi == x_j``): classic routing, ``x_j <= t`` goes left;
* region: left if ``lo <= t``, right if ``hi > t`` (both when ``lo <= t < hi``);
* free: both children.

The pooled rows of a tree are the training rows that

* lie in the tree's projected cell of the point coordinates, i.e. on the same
  side as ``x`` of every split on a point feature met while routing the point
  features and ignoring every other split, and
* lie inside the closed box on the region coordinates.

Every pooled row sits in a leaf reached by the traversal. Pools are computed
as per-tree row bitsets: each split node stores the rows it sends left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

POINT, REGION, FREE = 0, 1, 2


class EmptySupportError(ValueError):
    """No training row satisfies the condition in any tree."""


@dataclass
class Pool:
    rows: np.ndarray          # pooled training row ids, grouped by tree
    tree_of: np.ndarray       # tree index of each pooled row
    counts: np.ndarray        # pooled rows per tree
    reached: np.ndarray       # global ids of reached leaves
    n_train: int

    @property
    def leaf_mass(self) -> int:
        return int(self.counts.sum())

    def weights(self) -> np.ndarray:
        """Uniform within each tree, averaged over trees with a non-empty pool."""
        nonempty = int((self.counts > 0).sum())
        if nonempty == 0:
            raise EmptySupportError("no training row satisfies the condition")
        share = 1.0 / (nonempty * self.counts[self.tree_of])
        return np.bincount(self.rows, weights=share, minlength=self.n_train)

    def per_tree(self) -> list:
        out = []
        start = 0
        for c in self.counts:
            out.append(self.rows[start:start + c])
            start += c
        return out


class FlatForest:
    def __init__(self, forest):
        self.forest = forest
        self.X = forest.X
        self.Xc = np.ascontiguousarray(forest.X, dtype=np.float64)
        self.n_train = forest.n_train
        self.n_trees = forest.n_trees
        self.p = forest.p
        feats, thr, lefts, rights, tree_of, offsets = [], [], [], [], [], []
        off = 0
        for ti, t in enumerate(forest.trees):
            offsets.append(off)
            feats.append(t.feature)
            thr.append(t.threshold)
            lefts.append(np.where(t.left >= 0, t.left + off, -1))
            rights.append(np.where(t.right >= 0, t.right + off, -1))
            tree_of.append(np.full(t.n_nodes, ti))
            off += t.n_nodes
        self.offsets = np.array(offsets)
        self.feature = np.concatenate(feats)
        self.threshold = np.concatenate(thr)
        self.left = np.concatenate(lefts)
        self.right = np.concatenate(rights)
        self.tree_of = np.concatenate(tree_of)
        self.n_nodes = off
        self.is_leaf = self.feature < 0
        self.internal = np.flatnonzero(~self.is_leaf)
        self.safe_feature = np.where(self.is_leaf, 0, self.feature)
        self.roots = self.offsets.copy()

        # breadth-first levels: (children, parents, is_left)
        levels = []
        frontier = self.roots
        while True:
            parents = frontier[~self.is_leaf[frontier]]
            if len(parents) == 0:
                break
            children = np.concatenate([self.left[parents], self.right[parents]])
            par = np.concatenate([parents, parents])
            is_left = np.concatenate([np.ones(len(parents), bool), np.zeros(len(parents), bool)])
            levels.append((children, par, is_left))
            frontier = children
        self.levels = levels

        # leaf rows in CSR layout, ordered by global leaf id
        self.leaf_start = np.zeros(self.n_nodes, dtype=np.int64)
        self.leaf_count = np.zeros(self.n_nodes, dtype=np.int64)
        chunks = []
        pos = 0
        self.leaf_of_row = np.empty((self.n_trees, self.n_train), dtype=np.int64)
        for ti, t in enumerate(forest.trees):
            for leaf in t.leaves:
                rows = t.samples[int(leaf)]
                g = leaf + self.offsets[ti]
                self.leaf_start[g] = pos
                self.leaf_count[g] = len(rows)
                chunks.append(rows)
                pos += len(rows)
                self.leaf_of_row[ti, rows] = g
        self.leaf_rows = np.concatenate(chunks).astype(np.int64)

        # per split node, bitset of the training rows sent left
        self.n_words = (self.n_train + 63) // 64
        self.bits_index = np.full(self.n_nodes, -1, dtype=np.int64)
        self.bits_index[self.internal] = np.arange(len(self.internal))
        self.node_bits = _node_bits(self.feature, self.threshold, self.internal, self.Xc, self.n_words)
        self.all_rows = pack_rows(np.ones(self.n_train, dtype=bool))
        self._targets = {}

    def reach(self, lo, hi) -> np.ndarray:
        """Boolean mask of nodes reached under routing boxes ``[lo, hi]``."""
        f = self.safe_feature
        ok_left = lo[f] <= self.threshold
        ok_right = hi[f] > self.threshold
        reach = np.zeros(self.n_nodes, dtype=bool)
        reach[self.roots] = True
        for children, par, is_left in self.levels:
            reach[children] = reach[par] & np.where(is_left, ok_left[par], ok_right[par])
        return reach

    def point_cell(self, x, point_mask, reach=None) -> tuple[np.ndarray, np.ndarray]:
        """Per-tree bounds ``(lo, hi]`` of the projected cell of ``x`` on the point features."""
        if reach is None:
            reach = self.reach(np.where(point_mask, x, -math.inf), np.where(point_mask, x, math.inf))
        cell_lo = np.full((self.n_trees, self.p), -math.inf)
        cell_hi = np.full((self.n_trees, self.p), math.inf)
        nodes = self.internal[reach[self.internal] & point_mask[self.feature[self.internal]]]
        if len(nodes):
            f = self.feature[nodes]
            t = self.threshold[nodes]
            tr = self.tree_of[nodes]
            below = t < x[f]
            np.maximum.at(cell_lo, (tr[below], f[below]), t[below])
            np.minimum.at(cell_hi, (tr[~below], f[~below]), t[~below])
        return cell_lo, cell_hi

    def _cells(self, kinds, lo, hi) -> np.ndarray:
        """(n_trees, n_words) bitsets of the pooled rows of each tree."""
        kinds = np.ascontiguousarray(kinds, dtype=np.int64)
        lo = np.ascontiguousarray(lo, dtype=np.float64)
        hi = np.ascontiguousarray(hi, dtype=np.float64)
        base = self.all_rows
        region = np.flatnonzero(kinds == REGION)
        if len(region):
            inside = np.ones(self.n_train, dtype=bool)
            for j in region:
                v = self.Xc[:, j]
                inside &= (v >= lo[j]) & (v <= hi[j])
            base = pack_rows(inside)
        return _cell_bits(self.feature, self.threshold, self.left, self.right, self.roots,
                          self.bits_index, self.node_bits, kinds, lo, base)

    def pool(self, kinds, lo, hi) -> Pool:
        """Pool of training rows under a per-feature condition.

        ``kinds`` holds POINT/REGION/FREE per feature; ``lo``/``hi`` the box
        (for points ``lo == hi``).
        """
        cells = self._cells(kinds, lo, hi)
        member = np.unpackbits(cells.view(np.uint8), axis=1, bitorder="little")[:, :self.n_train]
        tree_of, rows = np.nonzero(member)
        counts = np.bincount(tree_of, minlength=self.n_trees)
        route_lo = np.where(kinds == FREE, -math.inf, lo)
        route_hi = np.where(kinds == FREE, math.inf, hi)
        leaves = np.flatnonzero(self.reach(route_lo, route_hi) & self.is_leaf)
        return Pool(rows, tree_of, counts, leaves, self.n_train)

    def counts(self, kinds, lo, hi) -> np.ndarray:
        """Pooled rows per tree."""
        return _count_bits(self._cells(kinds, lo, hi), self.all_rows)[0]

    def probability(self, kinds, lo, hi, target) -> tuple[float, int]:
        """(sum_i w_i 1{Y_i in target}, leaf_mass) without materialising the pool."""
        if target not in self._targets:
            self._targets[target] = pack_rows(target.contains(self.forest.y))
        counts, hits = _count_bits(self._cells(kinds, lo, hi), self._targets[target])
        nonempty = counts > 0
        if not nonempty.any():
            raise EmptySupportError("no training row satisfies the condition")
        return float(np.mean(hits[nonempty] / counts[nonempty])), int(counts.sum())


def pack_rows(mask) -> np.ndarray:
    """Boolean row mask as little-endian uint64 words (row r is bit r % 64 of word r // 64)."""
    mask = np.asarray(mask, dtype=bool)
    words = (len(mask) + 63) // 64
    padded = np.zeros(words * 64, dtype=bool)
    padded[:len(mask)] = mask
    return np.packbits(padded, bitorder="little").view(np.uint64)


@njit(cache=True)
def _node_bits(feature, threshold, internal, X, n_words):
    out = np.zeros((internal.shape[0], n_words), dtype=np.uint64)
    for k in range(internal.shape[0]):
        node = internal[k]
        f = feature[node]
        t = threshold[node]
        for r in range(X.shape[0]):
            if X[r, f] <= t:
                out[k, r >> 6] |= np.uint64(1) << np.uint64(r & 63)
    return out


@njit(cache=True)
def _cell_bits(feature, threshold, left, right, roots, bits_index, node_bits, kinds, lo, base):
    # A row lies in the projected cell of a tree iff it sits on the query's side
    # of every point-feature split met while routing the point features (every
    # other split explores both children). Such rows, once also inside the
    # region box, always fall in a leaf reached by the full traversal.
    n_trees = roots.shape[0]
    n_words = base.shape[0]
    out = np.empty((n_trees, n_words), dtype=np.uint64)
    stack = np.empty(feature.shape[0], dtype=np.int64)
    for t in range(n_trees):
        acc = base.copy()
        stack[0] = roots[t]
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            f = feature[node]
            if f < 0:
                continue
            if kinds[f] == 0:
                bits = node_bits[bits_index[node]]
                if lo[f] <= threshold[node]:
                    for w in range(n_words):
                        acc[w] &= bits[w]
                    stack[top] = left[node]
                else:
                    for w in range(n_words):
                        acc[w] &= ~bits[w]
                    stack[top] = right[node]
                top += 1
            else:
                stack[top] = left[node]
                stack[top + 1] = right[node]
                top += 2
        out[t] = acc
    return out


@njit(cache=True)
def _popcount(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _count_bits(cells, target):
    n_trees, n_words = cells.shape
    counts = np.zeros(n_trees, dtype=np.int64)
    hits = np.zeros(n_trees, dtype=np.int64)
    for t in range(n_trees):
        for w in range(n_words):
            c = cells[t, w]
            counts[t] += _popcount(c)
            hits[t] += _popcount(c & target[w])
    return counts, hits
