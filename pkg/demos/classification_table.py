"""Local-rule recourse metrics per class direction on Compas or Diabetes.

    python demos/classification_table.py compas --queries 400
    python demos/classification_table.py diabetes --seeds 10
"""
import argparse
import os

import numpy as np

from cfrules import AnnealingConfig, load_dataset, prepare, run_local, summarize

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dataset", choices=["compas", "diabetes"])
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--queries", type=int, default=None, help="first N test rows per seed")
    ap.add_argument("--max-iter", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    ds = load_dataset(os.path.join(DATA, f"{a.dataset}.csv"), os.path.join(DATA, f"{a.dataset}.schema.json"))
    for seed in range(a.seeds):
        su = prepare(ds, seed=seed, normalize=True)
        Q = su.test.X[: a.queries]
        res = run_local(su.model, su.explainer, su.iforest, su.train.X, Q, cfg=AnnealingConfig(a.max_iter),
                        seed=seed, jobs=a.jobs)
        rep = summarize(res, su.model, su.iforest, su.train.X, su.train.categorical_mask,
                        sigmas=(0.01, 0.025, 0.05), trials=5, seed=seed, config={"seed": seed})
        acc = np.mean(su.model.predict_label(su.test.X) == su.test.y)
        print(f"--- {a.dataset} seed {seed}  (query model test accuracy {acc:.3f})")
        print(rep.to_table())


if __name__ == "__main__":
    main()
