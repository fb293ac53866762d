"""Rebuild the bundled CSV files from the PyPI wheels that ship the raw data.

Usage::

    pip download --no-deps responsibly==0.1.2 keel-ds==0.2.5 pytorch-widedeep==1.7.0 -d wheels/
    python data/prepare_datasets.py wheels/

Each dataset is written as ``<name>.csv`` plus a ``<name>.schema.json`` sidecar
that ``cfrules.load_dataset`` understands.
"""
import glob
import io
import json
import os
import sys
import zipfile

import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))


def _wheel(folder, prefix):
    matches = sorted(glob.glob(os.path.join(folder, prefix + "*.whl")))
    if not matches:
        raise SystemExit(f"no {prefix}*.whl in {folder}")
    return zipfile.ZipFile(matches[-1])


def _write(name, df, features, target):
    df.to_csv(os.path.join(HERE, name + ".csv"), index=False)
    with open(os.path.join(HERE, name + ".schema.json"), "w") as fh:
        json.dump({"features": features, "target": target}, fh, indent=2)
    print(f"{name}: {df.shape[0]} rows, {len(features)} features")


def compas(folder):
    raw = _wheel(folder, "responsibly").read("responsibly/dataset/compas/compas-scores-two-years.csv")
    df = pd.read_csv(io.BytesIO(raw))
    # ProPublica screening filter
    df = df[(df.days_b_screening_arrest <= 30) & (df.days_b_screening_arrest >= -30)
            & (df.is_recid != -1) & (df.c_charge_degree != "O") & (df.score_text != "N/A")]
    stay = pd.to_datetime(df.c_jail_out) - pd.to_datetime(df.c_jail_in)
    out = pd.DataFrame({
        "age": df.age,
        "sex": df.sex,
        "race": df.race,
        "juv_fel_count": df.juv_fel_count,
        "juv_misd_count": df.juv_misd_count,
        "juv_other_count": df.juv_other_count,
        "priors_count": df.priors_count,
        "c_charge_degree": df.c_charge_degree,
        "length_of_stay": stay.dt.days.clip(lower=0),
        "days_b_screening_arrest": df.days_b_screening_arrest,
        "two_year_recid": df.two_year_recid.map({0: "no", 1: "yes"}),
        "is_violent_recid": df.is_violent_recid.map({0: "no", 1: "yes"}),
        # label 1 = medium/high COMPAS risk score
        "high_risk": (df.score_text != "Low").astype(int),
    })
    cats = {
        "sex": ["Female", "Male"],
        "race": sorted(out.race.unique()),
        "c_charge_degree": ["F", "M"],
        "two_year_recid": ["no", "yes"],
        "is_violent_recid": ["no", "yes"],
    }
    features = []
    for col in out.columns[:-1]:
        if col in cats:
            features.append({"name": col, "kind": "categorical", "categories": cats[col]})
        else:
            features.append({"name": col, "kind": "continuous"})
    _write("compas", out, features, {"name": "high_risk", "kind": "class", "classes": ["0", "1"]})


def diabetes(folder):
    raw = _wheel(folder, "keel_ds").read("keel_ds/data/balanced/raw/pima.dat").decode()
    cols = ["pregnancies", "glucose", "blood_pressure", "skin_thickness", "insulin",
            "bmi", "pedigree", "age", "outcome"]
    df = pd.read_csv(io.StringIO(raw), header=None, names=cols)
    df["outcome"] = (df.outcome.str.strip() == "tested_positive").astype(int)
    features = [{"name": c, "kind": "continuous"} for c in cols[:-1]]
    _write("diabetes", df, features, {"name": "outcome", "kind": "class", "classes": ["0", "1"]})


def california(folder):
    raw = _wheel(folder, "pytorch_widedeep").read(
        "pytorch_widedeep/datasets/data/california_housing.parquet.brotli")
    df = pd.read_parquet(io.BytesIO(raw))
    features = [{"name": c, "kind": "continuous"} for c in df.columns[:-1]]
    _write("california", df, features, {"name": "MedHouseVal", "kind": "real"})


if __name__ == "__main__":
    folder = sys.argv[1] if len(sys.argv) > 1 else "."
    compas(folder)
    diabetes(folder)
    california(folder)
