"""Model setup shared by the experiments, the demos and the CLI.

A query model ``f`` is trained on the labels; the explainer forest is then
trained on ``f``'s predictions over the training rows, so rules describe ``f``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import Dataset, minmax_normalize, split
from .forest import Forest, train
from .recourse import IsolationForest, fit_isolation_forest


@dataclass
class Setup:
    train: Dataset
    test: Dataset
    model: Forest          # the query model f
    explainer: Forest      # forest fitted to f's predictions
    iforest: IsolationForest


def prepare(ds: Dataset, seed: int = 0, normalize: bool = False, model_trees: int = 5,
            model_depth: int | None = 5, explainer_trees: int = 20, explainer_depth: int | None = 10,
            iforest_trees: int = 100, train_fraction: float = 0.75) -> Setup:
    tr, te = split(ds, train_fraction, seed)
    if normalize:
        tr, te = minmax_normalize(tr, te)
    model = train(tr, model_trees, model_depth, seed=seed + 1)
    labels = model.predict_label(tr.X)
    explainer = train(tr.with_target(np.asarray(labels, dtype=float)), explainer_trees,
                      explainer_depth, seed=seed)
    iforest = fit_isolation_forest(tr.X, iforest_trees, seed=seed)
    return Setup(tr, te, model, explainer, iforest)
