"""Command line entry point: ``cfrules <command> [options]``.

Settings come from defaults, then an optional ``key = value`` config file,
then flags (``--set key=value`` or the dedicated flags), later sources
winning. Every output file carries the fingerprint of the resolved config.

Exit codes: 0 success, 2 config error, 3 data error, 4 query error, 5 internal.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import operator
import os
import sys
import warnings

import numpy as np

from .data_model import (Dataset, Hyperrectangle, IngestionError, TargetSet, load_dataset, minmax_normalize,
                         split, split_indices)
from .divergent import EXHAUSTIVE, PATH_SAMPLED
from .evaluation import (InstanceResult, OK, directions_for, fingerprint, instance_seed,
                         run_local, stability, summarize)
from .forest import Forest, ForestFormatError, train
from .recourse import (AnnealingConfig, EmptyPoolError, IsolationForest, Recourse, fit_isolation_forest,
                       sample_recourse)
from .rules import CounterfactualRule, explain_regional

log = logging.getLogger("cfrules")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_QUERY, EXIT_INTERNAL = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class QueryError(ValueError):
    pass


def _opt_int(v):
    return None if str(v).lower() in ("", "none") else int(v)


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return tuple(float(s) for s in str(v).split(",") if s.strip())


# key: (parser, default)
KEYS = {
    "data": (str, ""),
    "schema": (str, ""),
    "out": (str, "cfrules-run"),
    "query_mode": (str, "labels"),
    "prediction_column": (str, ""),
    "seed": (int, 0),
    "train_fraction": (float, 0.75),
    "normalize": (_bool, False),
    "model_trees": (int, 5),
    "model_depth": (_opt_int, 5),
    "explainer_trees": (int, 20),
    "explainer_depth": (_opt_int, 10),
    "iforest_trees": (int, 100),
    "contamination": (float, 0.1),
    "pi": (float, 0.9),
    "pi_c": (float, 0.9),
    "K": (int, 10),
    "strategy": (str, EXHAUSTIVE),
    "m": (int, 2000),
    "max_subsets": (_opt_int, None),
    "exclude": (str, ""),
    "target": (str, ""),
    "ids": (str, "all"),
    "max_iter": (int, 1000),
    "T0": (float, 1.0),
    "r": (float, 0.95),
    "bins": (int, 10),
    "sigmas": (_floats, (0.01, 0.025, 0.05)),
    "trials": (int, 1),
    "jobs": (int, 1),
}
# labels: explainer on raw labels; prediction_column: explainer on supplied
# predictions; model: an internal query forest f, explainer on f's predictions
QUERY_MODES = ("labels", "prediction_column", "model")
# keys that shape the trained models
MODEL_KEYS = ("data", "schema", "query_mode", "prediction_column", "seed", "train_fraction", "normalize",
              "model_trees", "model_depth", "explainer_trees", "explainer_depth", "iforest_trees",
              "contamination")
# keys that cannot change any output
RUNTIME_KEYS = ("jobs", "out")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    with fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


def resolve(file_values: dict, overrides: dict) -> dict:
    """Typed config from defaults, file values and overrides (in that order)."""
    cfg = {k: d for k, (_, d) in KEYS.items()}
    for source in (file_values, overrides):
        for key, val in source.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if val is None:
                continue
            try:
                cfg[key] = KEYS[key][0](val) if isinstance(val, str) else val
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    if cfg["query_mode"] not in QUERY_MODES:
        raise ConfigError(f"query_mode must be one of {QUERY_MODES}")
    if cfg["query_mode"] == "prediction_column" and not cfg["prediction_column"]:
        raise ConfigError("query_mode=prediction_column needs prediction_column")
    if cfg["strategy"] not in (EXHAUSTIVE, PATH_SAMPLED):
        raise ConfigError(f"strategy must be {EXHAUSTIVE!r} or {PATH_SAMPLED!r}")
    for key in ("pi", "pi_c"):
        if not 0 < cfg[key] <= 1:
            raise ConfigError(f"{key} must lie in (0, 1]")
    if not 0 < cfg["train_fraction"] < 1:
        raise ConfigError("train_fraction must lie in (0, 1)")
    if cfg["K"] < 1 or cfg["jobs"] < 1 or cfg["bins"] < 2 or cfg["trials"] < 1:
        raise ConfigError("K, jobs and trials must be >= 1 and bins >= 2")
    try:
        AnnealingConfig(cfg["max_iter"], cfg["T0"], cfg["r"], cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg["sigmas"] = list(cfg["sigmas"])
    return cfg


def config_fingerprint(cfg: dict, keys=None) -> str:
    keys = [k for k in (keys or cfg) if k not in RUNTIME_KEYS]
    return fingerprint({k: cfg[k] for k in keys})


# data and models ----------------------------------------------------------------

class Run:
    """Dataset split, models and helpers for one resolved config."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.fp = config_fingerprint(cfg)
        if not cfg["data"] or not cfg["schema"]:
            raise ConfigError("data and schema must be set")
        if not os.path.exists(cfg["schema"]):
            raise ConfigError(f"schema file not found: {cfg['schema']}")
        try:
            ds = load_dataset(cfg["data"], cfg["schema"])
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise IngestionError(f"cannot load dataset: {exc}") from None
        self.preds = None
        if cfg["query_mode"] == "prediction_column":
            self.preds = _prediction_column(cfg["data"], cfg["prediction_column"], ds)
        self.full = ds
        perm_tr, perm_te = split_indices(ds.n, cfg["train_fraction"], cfg["seed"])
        tr, te = split(ds, cfg["train_fraction"], cfg["seed"])
        if cfg["normalize"]:
            tr, te = minmax_normalize(tr, te)
        self.train, self.test = tr, te
        self.train_rows, self.test_rows = perm_tr, perm_te
        self.model = self.explainer = self.iforest = None

    @property
    def features(self):
        return self.full.features

    @property
    def out(self) -> str:
        return self.cfg["out"]

    def path(self, name) -> str:
        return os.path.join(self.out, name)

    def fit(self):
        c = self.cfg
        if c["query_mode"] == "model":
            self.model = train(self.train, c["model_trees"], c["model_depth"], seed=c["seed"] + 1)
            labels = self.model.predict_label(self.train.X)
        elif c["query_mode"] == "prediction_column":
            labels = self.preds[self.train_rows]
        else:
            labels = self.train.y
        self.explainer = train(self.train.with_target(np.asarray(labels, dtype=float)),
                               c["explainer_trees"], c["explainer_depth"], seed=c["seed"])
        if self.model is None:
            self.model = self.explainer
        self.iforest = fit_isolation_forest(self.train.X, c["iforest_trees"], seed=c["seed"],
                                            contamination=c["contamination"])

    def save(self):
        os.makedirs(self.out, exist_ok=True)
        self.model.save(self.path("model.json"))
        self.explainer.save(self.path("explainer.json"))
        self.iforest.save(self.path("iforest.json"))

    def load(self):
        meta = self.path("train_summary.json")
        if not os.path.exists(meta):
            raise ConfigError(f"no trained models in {self.out}; run 'train' first")
        with open(meta) as fh:
            trained = json.load(fh)
        if trained.get("model_fingerprint") != config_fingerprint(self.cfg, MODEL_KEYS):
            raise ConfigError(f"models in {self.out} were trained with a different configuration")
        try:
            self.model = Forest.load(self.path("model.json"))
            self.explainer = Forest.load(self.path("explainer.json"))
            self.iforest = IsolationForest.load(self.path("iforest.json"))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ForestFormatError(f"cannot read models: {exc}") from None

    # queries ----------------------------------------------------------------

    def select(self, spec: str | None = None) -> np.ndarray:
        """Test-set indices from ``all``, a comma list, or a ``y<v`` style filter."""
        spec = (spec or self.cfg["ids"]).strip()
        n = self.test.n
        if spec == "all":
            return np.arange(n)
        for sym, op in (("<=", operator.le), (">=", operator.ge), ("<", operator.lt), (">", operator.gt)):
            if spec.startswith("y" + sym):
                try:
                    v = float(spec[1 + len(sym):])
                except ValueError:
                    raise QueryError(f"bad filter {spec!r}") from None
                return np.flatnonzero(op(self.test.y, v))
        try:
            ids = np.array([int(s) for s in spec.split(",") if s.strip()], dtype=np.int64)
        except ValueError:
            raise QueryError(f"bad instance ids {spec!r}") from None
        bad = ids[(ids < 0) | (ids >= n)]
        if len(bad):
            raise QueryError(f"unknown instance id {int(bad[0])} (test set has {n} rows)")
        return ids

    def target(self) -> TargetSet | None:
        """Configured target, or None for per-instance class flipping."""
        spec = self.cfg["target"].strip()
        if not spec:
            if self.explainer.task != "classification":
                raise ConfigError("regression needs target = lo,hi")
            if self.explainer.n_classes != 2:
                raise ConfigError("automatic targets need a binary outcome; set target")
            return None
        if "," in spec:
            try:
                lo, hi = (float(s) for s in spec.split(","))
                return TargetSet.of_interval(lo, hi)
            except ValueError as exc:
                raise ConfigError(f"bad target {spec!r}: {exc}") from None
        if spec in self.full.classes:
            return TargetSet.of_class(self.full.classes.index(spec))
        try:
            return TargetSet.of_class(int(spec))
        except ValueError:
            raise ConfigError(f"unknown target class {spec!r}") from None

    def exclude(self) -> tuple:
        names = [s.strip() for s in self.cfg["exclude"].split(",") if s.strip()]
        index = {f.name: j for j, f in enumerate(self.features)}
        unknown = [s for s in names if s not in index]
        if unknown:
            raise ConfigError(f"unknown features in exclude: {unknown}")
        return tuple(index[s] for s in names)

    def annealing(self) -> AnnealingConfig:
        c = self.cfg
        return AnnealingConfig(c["max_iter"], c["T0"], c["r"], c["seed"])

    def header(self, kind: str) -> dict:
        return {"kind": kind, "fingerprint": self.fp,
                "config": {k: v for k, v in self.cfg.items() if k not in RUNTIME_KEYS}}


def _prediction_column(path, column, ds: Dataset) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise IngestionError(f"{path}: missing prediction column {column!r}")
        raw = [row[column].strip() for row in reader]
    if ds.target_kind == "real":
        try:
            return np.array([float(v) for v in raw])
        except ValueError as exc:
            raise IngestionError(f"{path}: bad prediction value: {exc}") from None
    lookup = {c: i for i, c in enumerate(ds.classes)}
    try:
        return np.array([lookup[v] if v in lookup else int(float(v)) for v in raw], dtype=float)
    except ValueError as exc:
        raise IngestionError(f"{path}: bad prediction label: {exc}") from None


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, default=_default)
        fh.write("\n")


def _write_jsonl(path, header, records):
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, default=_default) + "\n")
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_default) + "\n")


def _read_jsonl(path):
    try:
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from None
    if lines and lines[0].get("kind") in ("rules", "recourses"):
        return lines[0], lines[1:]
    return {}, lines


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isnan(o):
        return None
    if hasattr(o, "to_json"):
        return o.to_json()
    return str(o)


# commands -------------------------------------------------------------------------

def cmd_train(run: Run, args) -> int:
    run.fit()
    run.save()
    summary = {
        **run.header("train_summary"),
        "model_fingerprint": config_fingerprint(run.cfg, MODEL_KEYS),
        "n_train": run.train.n, "n_test": run.test.n, "p": run.train.p,
        "task": run.model.task,
        "train_fidelity": float(np.mean(run.explainer.predict_label(run.train.X)
                                        == run.model.predict_label(run.train.X)))
        if run.model.task == "classification" else None,
        "iforest_tau": run.iforest.tau,
    }
    if run.model.task == "classification":
        summary["train_accuracy"] = float(np.mean(run.model.predict_label(run.train.X) == run.train.y))
        summary["test_accuracy"] = float(np.mean(run.model.predict_label(run.test.X) == run.test.y))
    else:
        summary["train_rmse"] = float(np.sqrt(np.mean((run.model.predict(run.train.X) - run.train.y) ** 2)))
        summary["test_rmse"] = float(np.sqrt(np.mean((run.model.predict(run.test.X) - run.test.y) ** 2)))
    _write_json(run.path("train_summary.json"), summary)
    shown = {k: v for k, v in summary.items() if k not in ("config", "kind")}
    print(json.dumps(shown, sort_keys=True, indent=1))
    return EXIT_OK


def _local_results(run: Run, ids) -> list:
    c = run.cfg
    return run_local(run.model, run.explainer, run.iforest, run.train.X, run.test.X[ids], ids=ids,
                     target=run.target(), pi=c["pi"], pi_c=c["pi_c"], K=c["K"], strategy=c["strategy"],
                     cfg=run.annealing(), seed=c["seed"], exclude=run.exclude(),
                     max_subsets=c["max_subsets"], jobs=c["jobs"])


def cmd_explain_local(run: Run, args) -> int:
    run.load()
    ids = run.select()
    results = _local_results(run, ids)
    records = []
    for res in results:
        rule = res.rule
        records.append({
            "instance_id": res.instance_id, "direction": res.direction, "status": res.status,
            "target": res.target.to_json(),
            "rule": rule.to_json() if rule is not None else None,
            "rule_named": rule.to_json(run.features) if rule is not None else None,
            "fingerprint": run.fp,
        })
    header = {**run.header("rules"), "scope": "local", "pi": run.cfg["pi"], "pi_c": run.cfg["pi_c"]}
    out = args.output or run.path("rules_local.jsonl")
    _write_jsonl(out, header, records)
    counts = {}
    for r in records:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    print(f"{len(records)} rule records -> {out}  {counts}  pi={run.cfg['pi']} pi_c={run.cfg['pi_c']}"
          f"  fingerprint {run.fp}")
    return EXIT_OK


def _region(run: Run, args) -> Hyperrectangle:
    if args.region and args.leaf:
        raise ConfigError("give either --region or --leaf")
    if args.region:
        try:
            with open(args.region) as fh:
                doc = json.load(fh)
            return Hyperrectangle.from_json(doc, run.features)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise QueryError(f"bad region file {args.region}: {exc}") from None
    if args.leaf:
        try:
            t, leaf = (int(s) for s in args.leaf.split(":"))
            tree = run.explainer.trees[t]
            if tree.feature[leaf] >= 0:
                raise IndexError
        except (ValueError, IndexError):
            raise QueryError(f"no leaf {args.leaf!r} (expected tree:leaf)") from None
        return run.explainer.leaf_region(t, leaf)
    raise ConfigError("explain-regional needs --region or --leaf")


def cmd_explain_regional(run: Run, args) -> int:
    run.load()
    R = _region(run, args)
    target = run.target()
    if target is None:
        inside = R.contains_rows(run.explainer.X) if R.support else np.ones(run.explainer.n_train, bool)
        labels = run.explainer.y[inside]
        if len(labels) == 0:
            raise QueryError("region holds no training row; set target explicitly")
        target = TargetSet.of_class(1 - int(np.bincount(labels.astype(int), minlength=2).argmax()))
    c = run.cfg
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rules = explain_regional(run.explainer, R, target, c["pi"], c["pi_c"], c["K"], c["strategy"],
                                 c["m"], c["seed"], run.exclude(), c["max_subsets"])
    doc = {**run.header("regional_rules"), "pi": c["pi"], "pi_c": c["pi_c"],
           "region": R.to_json(), "region_named": R.to_json(run.features), "target": target.to_json(),
           "rules": [r.to_json() for r in rules], "rules_named": [r.to_json(run.features) for r in rules]}
    out = args.output or run.path("rules_regional.json")
    _write_json(out, doc)
    head = rules[0]
    what = "degenerate" if head.degenerate else ("empty" if head.empty else
                                                 f"S={[run.features[j].name for j in head.S]}")
    print(f"{len(rules)} regional rule(s) -> {out}  best: {what}  fingerprint {run.fp}")
    return EXIT_OK


def cmd_sample(run: Run, args) -> int:
    run.load()
    path = args.rules or run.path("rules_local.jsonl")
    _, records = _read_jsonl(path)
    recs = []
    for rec in records:
        rule = rec.get("rule")
        if rule is None or not rule.get("rectangles"):
            continue
        i = int(rec["instance_id"])
        if not 0 <= i < run.test.n:
            raise QueryError(f"unknown instance id {i} in {path}")
        cr = CounterfactualRule.from_json(rule)
        cfg = AnnealingConfig(run.cfg["max_iter"], run.cfg["T0"], run.cfg["r"],
                              instance_seed(run.cfg["seed"], i))
        for k in range(len(cr.rectangles)):
            try:
                r = sample_recourse(run.test.X[i], cr.S, cr, run.train.X, run.iforest, cfg, rule_id=k)
            except EmptyPoolError:
                continue
            r.instance_id = i
            recs.append(r)
            break
    if not recs:
        warnings.warn(f"no usable rule in {path}; writing an empty recourse file", stacklevel=1)
    out = args.output or run.path("recourses.jsonl")
    _write_jsonl(out, {**run.header("recourses"), "annealing": run.annealing().to_json()},
                 [{**r.to_json(), "fingerprint": run.fp} for r in recs])
    print(f"{len(recs)} recourses -> {out}  fingerprint {run.fp}")
    return EXIT_OK


def _collect(run: Run, args) -> list:
    """InstanceResults from rule/recourse files, or a fresh run over the selected ids."""
    if not args.recourses:
        return _local_results(run, run.select())
    _, recs = _read_jsonl(args.recourses)
    by_id = {int(r["instance_id"]): Recourse.from_json(r) for r in recs}
    statuses = {}
    if args.rules:
        _, rules = _read_jsonl(args.rules)
        statuses = {int(r["instance_id"]): (r["status"], r["direction"], TargetSet.from_json(r["target"]))
                    for r in rules}
    ids = sorted(set(by_id) | set(statuses))
    for i in ids:
        if not 0 <= i < run.test.n:
            raise QueryError(f"unknown instance id {i}")
    fixed = run.target()
    dirs = directions_for(run.model, run.test.X[ids], fixed) if ids else []
    out = []
    for i, (d, t) in zip(ids, dirs):
        status, d, t = statuses.get(i, (OK, d, t))
        rec = by_id.get(i)
        if rec is None and status == OK:
            status = "empty_pool"
        out.append(InstanceResult(i, d, status if rec is None else OK, t, run.test.X[i], None, rec))
    return out


def cmd_evaluate(run: Run, args) -> int:
    run.load()
    results = _collect(run, args)
    report = summarize(results, run.model, run.iforest, run.train.X, run.train.categorical_mask,
                       run.cfg["bins"], run.cfg["sigmas"] if args.with_stability else (),
                       run.cfg["trials"], run.cfg["seed"], run.header("report")["config"])
    doc = report.to_json()
    _write_json(args.output or run.path("report.json"), doc)
    table = report.to_table()
    with open(run.path("report.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


def cmd_stability(run: Run, args) -> int:
    run.load()
    results = _collect(run, args)
    done = [r for r in results if r.recourse is not None]
    groups = {"overall": done}
    if any(r.direction in ("pos", "neg") for r in done):
        groups = {"pos": [r for r in done if r.direction == "pos"],
                  "neg": [r for r in done if r.direction == "neg"], "overall": done}
    table = {}
    for name, rs in groups.items():
        table[name] = (stability(run.model, [r.recourse for r in rs], run.cfg["sigmas"], run.cfg["trials"],
                                 run.cfg["seed"], run.train.categorical_mask) if rs else {})
    sigmas = [float(s) for s in run.cfg["sigmas"]]
    doc = {**run.header("stability"), "sigma_is": "standard deviation",
           "n": {k: len(v) for k, v in groups.items()},
           "rows": [{"sigma": s, **{k: table[k].get(s) for k in groups}} for s in sigmas]}
    _write_json(args.output or run.path("stability.json"), doc)
    lines = ["sigma".ljust(8) + "".join(k.rjust(10) for k in groups)]
    for s in sigmas:
        lines.append(f"{s:<8g}" + "".join(
            ("n/a" if table[k].get(s) is None else f"{table[k][s]:.3f}").rjust(10) for k in groups))
    lines.append("n".ljust(8) + "".join(str(len(v)).rjust(10) for v in groups.values()))
    lines.append(f"fingerprint {run.fp}")
    text = "\n".join(lines)
    with open(run.path("stability.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "explain-local": cmd_explain_local,
    "explain-regional": cmd_explain_regional,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "stability": cmd_stability,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--data")
    common.add_argument("--schema")
    common.add_argument("--out", help="run directory for models and outputs")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes for per-instance work")
    common.add_argument("--target", help="class label or lo,hi interval")
    common.add_argument("--pi", type=float)
    common.add_argument("--pi-c", dest="pi_c", type=float)
    common.add_argument("-K", dest="K", type=int)
    common.add_argument("--output", help="output file (default: inside the run directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cfrules", description="Counterfactual rules from random forests.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="fit query model, explainer and isolation forest")
    p = sub.add_parser("explain-local", parents=[common], help="local rules for test instances")
    p.add_argument("--ids", help="'all', comma-separated test indices, or a filter like 'y<1.0'")
    p = sub.add_parser("explain-regional", parents=[common], help="regional rule for a region")
    p.add_argument("--region", help="JSON file {feature: [lo, hi]}")
    p.add_argument("--leaf", help="explainer leaf as tree:node")
    p = sub.add_parser("sample", parents=[common], help="sample recourses from a local rule file")
    p.add_argument("--rules", help="rules JSONL from explain-local")
    for name in ("evaluate", "stability"):
        p = sub.add_parser(name, parents=[common], help=f"{name} metrics for recourses")
        p.add_argument("--recourses", help="recourse JSONL from sample (default: run the pipeline)")
        p.add_argument("--rules", help="rules JSONL giving statuses and targets")
        p.add_argument("--ids")
        if name == "evaluate":
            p.add_argument("--with-stability", action="store_true", help="add stability rows")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("data", "schema", "out", "seed", "jobs", "target", "pi", "pi_c", "K", "ids"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(file_values, _overrides(args))
        run = Run(cfg)
        if args.output:
            os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
        os.makedirs(run.out, exist_ok=True)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, ForestFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QueryError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
