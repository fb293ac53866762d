"""Local and regional counterfactual rules built from forest leaves.

Rectangles here stand for half-open leaf cells ``(lo, hi]`` written with their
endpoints, so two rectangles that only share a face are treated as disjoint
and as adjacent (mergeable).
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ._engine import EmptySupportError
from .data_model import Hyperrectangle, TargetSet
from .divergent import EXHAUSTIVE, minimal_divergent, minimal_divergent_rule
from .forest import Forest
from .projected import cdp, support_rows
from .regional import cdp_rule, crp_local, crp_rule, rule_support_rows

LOCAL = "local"
REGIONAL = "regional"


@dataclass
class CounterfactualRule:
    scope: str
    S: tuple
    rectangles: list
    crp: list
    plausibility: list
    target: TargetSet
    pi_c: float
    anchor: object = None           # the instance x or the region R
    cdp: float | None = None
    degenerate: bool = False        # target already reached without any change
    diagnostics: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.rectangles

    @property
    def score(self) -> float:
        """Best plausibility-weighted CRP over the rectangles."""
        if self.empty:
            return -1.0
        return max(c * q for c, q in zip(self.crp, self.plausibility))

    def to_json(self, features=None) -> dict:
        names = [features[j].name if features else j for j in self.S]
        return {
            "scope": self.scope,
            "S": names,
            "rectangles": [r.to_json(features) for r in self.rectangles],
            "crp": list(self.crp),
            "plausibility": list(self.plausibility),
            "cdp": self.cdp,
            "target": self.target.to_json(),
            "pi_c": self.pi_c,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_json(cls, d: dict, features=None) -> "CounterfactualRule":
        index = {f.name: j for j, f in enumerate(features)} if features else {}
        S = tuple(index.get(s, s) if isinstance(s, str) else int(s) for s in d["S"])
        rects = [Hyperrectangle.from_json(r, features) for r in d["rectangles"]]
        return cls(d["scope"], S, rects, list(d["crp"]), list(d["plausibility"]),
                   TargetSet.from_json(d["target"]), d["pi_c"], cdp=d.get("cdp"),
                   degenerate=d.get("degenerate", False))


# rectangle algebra ----------------------------------------------------------

def _others_key(rect: Hyperrectangle, d: int):
    return tuple((j, iv) for j, iv in rect.intervals.items() if j != d)


def _sweep(rects: list, accept=None) -> tuple[list, bool]:
    """One pass over every dimension, merging runs of touching intervals."""
    changed = False
    dims = sorted({j for r in rects for j in r.support})
    for d in dims:
        groups = defaultdict(list)
        for r in rects:
            groups[(tuple(r.support), _others_key(r, d))].append(r)
        out = []
        for members in groups.values():
            members.sort(key=lambda r: r.intervals[d])
            cur = members[0]
            for nxt in members[1:]:
                a1, a2 = cur.intervals[d]
                b1, b2 = nxt.intervals[d]
                if b1 <= a2:
                    merged = Hyperrectangle({**cur.intervals, d: (a1, max(a2, b2))})
                    if merged == cur or accept is None or accept(merged):
                        changed |= merged != cur or nxt != cur
                        cur = merged
                        continue
                out.append(cur)
                cur = nxt
            out.append(cur)
        rects = out
    return rects, changed


def merge_rectangles(rects, accept=None) -> list:
    """Fixpoint of pairwise merging.

    Two rectangles with the same support merge when they agree on all but one
    dimension and on that one overlap or share an endpoint. ``accept``, when
    given, must approve every merged rectangle.
    """
    rects = list(dict.fromkeys(rects))
    if not rects:
        return []
    changed = True
    while changed:
        rects, changed = _sweep(rects, accept)
    return sorted(dict.fromkeys(rects), key=_order_key)


def _order_key(r: Hyperrectangle):
    return tuple(r.intervals.items())


def _interiors_overlap(a: Hyperrectangle, b: Hyperrectangle) -> bool:
    for j in a.support:
        lo = max(a.intervals[j][0], b.intervals[j][0])
        hi = min(a.intervals[j][1], b.intervals[j][1])
        if not lo < hi:
            return False
    return True


def subtract(a: Hyperrectangle, b: Hyperrectangle) -> list:
    """Pieces of ``a`` outside ``b`` (both on the same support)."""
    if not _interiors_overlap(a, b):
        return [a]
    pieces = []
    rest = dict(a.intervals)
    for j in a.support:
        a1, a2 = rest[j]
        b1, b2 = b.intervals[j]
        if a1 < b1:
            pieces.append(Hyperrectangle({**rest, j: (a1, b1)}))
        if b2 < a2:
            pieces.append(Hyperrectangle({**rest, j: (b2, a2)}))
        rest[j] = (max(a1, b1), min(a2, b2))
    return pieces


# rule construction ------------------------------------------------------------

def candidate_leaves(forest: Forest, support: np.ndarray, S) -> list:
    """S-projections of the leaves (in any tree) holding a support row, deduplicated."""
    S = sorted(S)
    support = np.asarray(support, dtype=np.int64)
    if len(support) == 0:
        return []
    flat = forest.flat
    out = {}
    for ti in range(forest.n_trees):
        for g in np.unique(flat.leaf_of_row[ti, support]):
            leaf = int(g - flat.offsets[ti])
            out.setdefault(forest.leaf_region(ti, leaf).project(S), None)
    return list(out)


def _build(scope, forest, S, target, pi_c, support, evaluate, anchor, base_cdp):
    S = tuple(sorted(S))
    cache = {}

    def score(rect):
        if rect not in cache:
            try:
                cache[rect] = evaluate(rect)
            except EmptySupportError:
                cache[rect] = (0.0, 0.0)
        return cache[rect]

    def passes(rect):
        return score(rect)[0] >= pi_c

    cands = candidate_leaves(forest, support, S)
    possible = [r for r in cands if passes(r)]
    diag = {"n_candidates": len(cands), "n_possible": len(possible)}
    if not possible:
        if cands:
            best = max(cands, key=lambda r: score(r)[0])
            diag["best_candidate"] = best
            diag["best_crp"] = score(best)[0]
        return CounterfactualRule(scope, S, [], [], [], target, pi_c, anchor, base_cdp,
                                  diagnostics=diag)

    # merge, then fall back to constituents where the merged box fails
    verified = []
    for box in merge_rectangles(possible):
        if passes(box):
            verified.append(box)
        else:
            verified.extend(r for r in possible if all(
                box.intervals[j][0] <= r.intervals[j][0] and r.intervals[j][1] <= box.intervals[j][1]
                for j in S))
    verified = list(dict.fromkeys(verified))
    verified.sort(key=lambda r: (-score(r)[1], -score(r)[0], _order_key(r)))

    # make the boxes disjoint, most plausible first
    kept = []
    for box in verified:
        pieces = [box]
        for other in kept:
            pieces = [q for piece in pieces for q in subtract(piece, other)]
        kept.extend(q for q in pieces if passes(q))
    final = merge_rectangles(kept, accept=passes)
    final.sort(key=lambda r: (-score(r)[1], -score(r)[0], _order_key(r)))
    return CounterfactualRule(scope, S, final, [score(r)[0] for r in final],
                              [score(r)[1] for r in final], target, pi_c, anchor, base_cdp,
                              diagnostics=diag)


def _target_reached_local(forest, x, target, pi_c) -> bool:
    label = forest.predict_label(np.asarray(x, dtype=float).reshape(1, -1))[0]
    return bool(target.contains(label)) or cdp(forest, x, (), target) >= pi_c


def build_local_rule(forest: Forest, x, S, target: TargetSet, pi_c: float = 0.9) -> CounterfactualRule:
    """Union of possible leaves (CRP >= pi_c given ``x_Sbar``) merged into maximal boxes over ``S``."""
    if not 0 < pi_c <= 1:
        raise ValueError("pi_c must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    S = tuple(sorted(S))
    if _target_reached_local(forest, x, target, pi_c):
        return CounterfactualRule(LOCAL, S, [], [], [], target, pi_c, x, None, degenerate=True)
    base = cdp(forest, x, S, target)
    return _build(LOCAL, forest, S, target, pi_c, support_rows(forest, x, S),
                  lambda r: crp_local(forest, x, S, r, target), x, base)


def build_regional_rule(forest: Forest, R: Hyperrectangle, S, target: TargetSet,
                        pi_c: float = 0.9) -> CounterfactualRule:
    """Regional counterpart of :func:`build_local_rule` for observations in ``R``."""
    if not 0 < pi_c <= 1:
        raise ValueError("pi_c must lie in (0, 1]")
    S = tuple(sorted(S))
    try:
        already = cdp_rule(forest, R, (), target) >= pi_c
    except EmptySupportError:
        already = False
    if already:
        return CounterfactualRule(REGIONAL, S, [], [], [], target, pi_c, R, None, degenerate=True)
    try:
        base = cdp_rule(forest, R, S, target)
    except EmptySupportError:
        base = 0.0
    return _build(REGIONAL, forest, S, target, pi_c, rule_support_rows(forest, R, S),
                  lambda r: crp_rule(forest, R, S, r, target), R, base)


def explain_local(forest: Forest, x, target: TargetSet, pi: float = 0.9, pi_c: float = 0.9,
                  K: int = 10, strategy: str = EXHAUSTIVE, m: int = 2000, seed: int = 0,
                  exclude=(), max_subsets: int | None = None) -> list:
    """Rules for every minimal divergent subset of ``x``, best score first.

    Returns a single empty rule carrying diagnostics when no subset reaches
    ``pi``, and a degenerate rule when ``x`` already has the target outcome.
    ``max_subsets`` caps how many subsets (highest CDP first) get a rule.
    """
    x = np.asarray(x, dtype=float)
    if _target_reached_local(forest, x, target, pi_c):
        return [CounterfactualRule(LOCAL, (), [], [], [], target, pi_c, x, None, degenerate=True)]
    found = minimal_divergent(forest, x, target, pi, K, strategy, m, seed, exclude)
    if not found:
        best = found.best
        return [CounterfactualRule(LOCAL, best.S if best else (), [], [], [], target, pi_c, x,
                                   best.cdp if best else None,
                                   diagnostics={"reason": "no divergent subset", "best": best})]
    return _rules_for(found, max_subsets, lambda S: build_local_rule(forest, x, S, target, pi_c))


def explain_regional(forest: Forest, R: Hyperrectangle, target: TargetSet, pi: float = 0.9,
                     pi_c: float = 0.9, K: int = 10, strategy: str = EXHAUSTIVE, m: int = 2000,
                     seed: int = 0, exclude=(), max_subsets: int | None = None) -> list:
    """Regional counterpart of :func:`explain_local`."""
    found = minimal_divergent_rule(forest, R, target, pi, K, strategy, m, seed, exclude)
    if not found:
        best = found.best
        return [CounterfactualRule(REGIONAL, best.S if best else (), [], [], [], target, pi_c, R,
                                   best.cdp if best else None,
                                   diagnostics={"reason": "no divergent subset", "best": best})]
    return _rules_for(found, max_subsets, lambda S: build_regional_rule(forest, R, S, target, pi_c))


def _rules_for(found, max_subsets, build):
    ranked = sorted(found, key=lambda e: (-e.cdp, e.S))
    if max_subsets is not None:
        ranked = ranked[:max_subsets]
    rules = [build(e.S) for e in ranked]
    rules.sort(key=lambda r: -r.score)
    return rules
