"""Two-feature toy: one tree, 10 green and 17 blue rows in the x0 <= 1 band.

Prints the CDP of freeing x1, the local rule for x = (0.5, 0.5) and the
regional rule for the upper leaf.
"""
import numpy as np

from cfrules import TargetSet, build_tree, cdp, explain_local, explain_regional, forest_from_trees

GREEN, BLUE = 1, 0


def toy():
    rows = []

    def put(n, lo, hi, label, x0_lo=0.05, x0_hi=0.95):
        for k in range(n):
            u = (k + 0.5) / n
            rows.append((x0_lo + (x0_hi - x0_lo) * u, lo + (hi - lo) * u, label))

    put(9, 0.1, 0.9, BLUE)
    put(5, 1.1, 1.9, GREEN)
    put(4, 2.1, 2.9, GREEN)
    put(1, 3.5, 3.5, GREEN)
    put(8, 3.1, 3.9, BLUE)
    put(10, 0.1, 3.9, BLUE, 1.1, 1.9)
    A = np.array(rows)
    nodes = [(0, 1.0, 1, 8), (1, 1.0, 2, 3), None, (1, 2.0, 4, 5), None, (1, 3.0, 6, 7), None, None, None]
    tree = build_tree(nodes, A[:, :2], A[:, 2], "classification", 2)
    return forest_from_trees([tree], A[:, :2], A[:, 2], "classification", 2)


if __name__ == "__main__":
    f = toy()
    x = np.array([0.5, 0.5])
    green = TargetSet.of_class(GREEN)
    print(f"cdp(S={{x1}}) = {cdp(f, x, [1], green):.4f}  (10/27 = {10 / 27:.4f})")
    (rule,) = explain_local(f, x, green, pi=0.3)
    print("local rule   S =", rule.S, "boxes =", [r.intervals for r in rule.rectangles],
          "crp =", rule.crp, "plausibility =", [round(p, 3) for p in rule.plausibility])
    (reg,) = explain_regional(f, f.leaf_region(0, 7), green, pi=0.3)
    print("regional rule for leaf 7   S =", reg.S, "boxes =", [r.intervals for r in reg.rectangles])
