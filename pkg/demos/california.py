"""Regression recourse: move low-priced California districts into [2.0, 2.5] (x100k).

``--model`` picks the query model the explainer imitates: the protocol forest
(5 trees, depth 5) or a bigger one (20 trees, depth 10). Prints coverage and
metrics over the recourses produced.
"""
import argparse
import os
from collections import Counter

import numpy as np

from cfrules import AnnealingConfig, TargetSet, load_dataset, prepare, run_local, summarize

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--model", choices=["small", "large"], default="small")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    ds = load_dataset(os.path.join(DATA, "california.csv"), os.path.join(DATA, "california.schema.json"))
    size = {"small": (5, 5), "large": (20, 10)}[a.model]
    su = prepare(ds, seed=a.seed, model_trees=size[0], model_depth=size[1])
    ids = np.flatnonzero(su.test.y < 1.0)[: a.queries]
    res = run_local(su.model, su.explainer, su.iforest, su.train.X, su.test.X[ids], ids=ids,
                    target=TargetSet.of_interval(2.0, 2.5), cfg=AnnealingConfig(1000), seed=a.seed,
                    jobs=a.jobs)
    print("statuses:", dict(Counter(r.status for r in res)))
    print(summarize(res, su.model, su.iforest, su.train.X, config={"model": a.model}).to_table())
    names = [f.name for f in ds.features]
    for r in res:
        if r.recourse is not None:
            rule = r.rule
            boxes = [{names[j]: iv for j, iv in box.intervals.items()} for box in rule.rectangles[:1]]
            print(f"instance {r.instance_id}: S={[names[j] for j in rule.S]} first box {boxes}")
            break


if __name__ == "__main__":
    main()
