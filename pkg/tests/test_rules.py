import itertools

import numpy as np
import pytest

from cfrules.data_model import Hyperrectangle, TargetSet
from cfrules.regional import crp_local, crp_rule
from cfrules.rules import (CounterfactualRule, build_local_rule, explain_local, explain_regional,
                           merge_rectangles, subtract)
from conftest import GREEN, random_forest
from oracles import grid_union

H = Hyperrectangle


def test_merge_adjacent_and_leave_misaligned():
    assert merge_rectangles([H({0: (0, 1), 1: (0, 1)}), H({0: (1, 2), 1: (0, 1)})]) == [H({0: (0, 2), 1: (0, 1)})]
    pair = [H({0: (0, 1), 1: (0, 1)}), H({0: (1, 2), 1: (0, 2)})]
    assert merge_rectangles(pair) == sorted(pair, key=lambda r: tuple(r.intervals.items()))
    four = [H({0: (a, a + 1), 1: (b, b + 1)}) for a in (0, 1) for b in (0, 1)]
    assert merge_rectangles(four) == [H({0: (0, 2), 1: (0, 2)})]
    assert merge_rectangles([]) == []


def test_merge_preserves_union_on_a_grid():
    rng = np.random.default_rng(0)
    grid = rng.uniform(-0.5, 4.5, (10000, 2))
    grid[:2000] = rng.integers(0, 5, (2000, 2))
    for _ in range(30):
        cells = [H({0: (a, a + 1), 1: (b, b + 1)}) for a in range(4) for b in range(4) if rng.random() < 0.5]
        merged = merge_rectangles(cells)
        assert len(merged) <= len(cells)
        assert np.array_equal(grid_union(merged, grid), grid_union(cells, grid))


def test_subtract_covers_difference():
    a, b = H({0: (0, 3), 1: (0, 3)}), H({0: (1, 2), 1: (1, 4)})
    pieces = subtract(a, b)
    pts = np.random.default_rng(1).uniform(0, 3, (5000, 2))
    inside_a_not_b = a.contains_rows(pts) & ~((pts[:, 0] > 1) & (pts[:, 0] < 2) & (pts[:, 1] > 1))
    assert np.array_equal(grid_union(pieces, pts), inside_a_not_b)


def test_toy_local_and_regional_rules(toy):
    f, x, leaves = toy
    t = TargetSet.of_class(GREEN)
    (rule,) = explain_local(f, x, t, pi=0.3)
    assert rule.S == (1,) and rule.rectangles == [H({1: (1.0, 3.0)})]
    assert rule.crp == [1.0] and abs(rule.plausibility[0] - 1 / 3) < 1e-12
    assert rule.cdp == 10 / 27
    (reg,) = explain_regional(f, f.leaf_region(0, leaves["upper"]), t, pi=0.3)
    assert reg.S == (1,) and reg.rectangles == [H({1: (1.0, 3.0)})]


def _interiors_meet(a, b):
    return all(max(a.intervals[j][0], b.intervals[j][0]) < min(a.intervals[j][1], b.intervals[j][1])
               for j in a.support)


def test_local_rules_are_disjoint_and_meet_pi_c():
    built = 0
    for seed in range(40):
        f = random_forest(seed, p=3, n_trees=3, depth=3, task="classification")
        for x in f.X[:3]:
            t = TargetSet.of_class(1 - int(f.predict_label(x[None])[0]))
            for S in ([0], [0, 1], list(range(f.p))):
                rule = build_local_rule(f, x, S, t, 0.7)
                if rule.degenerate:
                    continue
                built += not rule.empty
                for r, c in zip(rule.rectangles, rule.crp):
                    assert tuple(r.support) == rule.S
                    assert c >= 0.7 and abs(crp_local(f, x, rule.S, r, t)[0] - c) < 1e-12
                for a, b in itertools.combinations(rule.rectangles, 2):
                    assert not _interiors_meet(a, b)
    assert built > 10


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_regional_rules_meet_pi_c():
    for seed in range(15):
        f = random_forest(seed, p=3, n_trees=2, depth=3, task="classification")
        R = f.leaf_region(0, int(f.trees[0].leaves[0]))
        for rule in explain_regional(f, R, TargetSet.of_class(1), pi=0.6, pi_c=0.7):
            for r, c in zip(rule.rectangles, rule.crp):
                assert c >= 0.7 and abs(crp_rule(f, R, rule.S, r, TargetSet.of_class(1))[0] - c) < 1e-12


def test_degenerate_when_already_in_target(toy):
    f, x, _ = toy
    (rule,) = explain_local(f, x, TargetSet.of_class(0))
    assert rule.degenerate and rule.empty and rule.score == -1.0


def test_no_divergent_subset_gives_empty_rule_with_diagnostics(toy):
    f, x, _ = toy
    with pytest.warns(UserWarning):
        (rule,) = explain_local(f, x, TargetSet.of_class(GREEN), pi=0.99)
    assert rule.empty and not rule.degenerate and rule.diagnostics["reason"] == "no divergent subset"


def test_json_round_trip(toy):
    f, x, _ = toy
    (rule,) = explain_local(f, x, TargetSet.of_class(GREEN), pi=0.3)
    back = CounterfactualRule.from_json(rule.to_json())
    assert back.S == rule.S and back.rectangles == rule.rectangles
    assert back.crp == rule.crp and back.plausibility == rule.plausibility and back.target == rule.target


def test_bad_pi_c(toy):
    f, x, _ = toy
    with pytest.raises(ValueError):
        build_local_rule(f, x, [1], TargetSet.of_class(GREEN), 1.5)
