# igsf/reporting.py
"""
Result files for one experiment.

- rmse_frame / estimates_frame / observations_frame -> long-format DataFrames
- summary_frame(artifacts)                          -> time-averaged RMSE and pairwise win-rates
- write_csv(df, path)                               -> '%.17g' floats, '\n' line endings, atomic
- write_meta(path, doc)                             -> meta.json, validated against meta_schema.json

All writes go to a temp file in the target directory and are moved into place with os.replace,
so an interrupted run never leaves a truncated file behind.
"""

import json
import os
import pathlib
import tempfile
from typing import Any, Dict, Union

import numpy as np
import pandas as pd
from jsonschema import validate as jsonschema_validate, ValidationError as SchemaValidationError

from igsf.errors import IgsfError, E_INTERNAL
from igsf.experiments import metrics
from igsf.experiments.problem import RunArtifacts

_ROOT = pathlib.Path(__file__).resolve().parents[1]
with open(_ROOT / "schemas" / "meta_schema.json", "r", encoding="utf-8") as f:
    META_SCHEMA = json.load(f)

FLOAT_FORMAT = "%.17g"

RMSE_FILE = "rmse.csv"
ESTIMATES_FILE = "estimates.csv"
OBSERVATIONS_FILE = "observations.csv"
META_FILE = "meta.json"
SUMMARY_FILE = "summary.csv"

METRIC_TIME_AVG_RMSE = "time_avg_rmse"
METRIC_WIN_RATE = "win_rate"


def atomic_write_text(path: Union[str, pathlib.Path], text: str) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def write_csv(df: pd.DataFrame, path: Union[str, pathlib.Path]) -> pathlib.Path:
    return atomic_write_text(path, df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def _step_grid(artifacts: RunArtifacts):
    T = artifacts.steps
    return np.arange(1, T + 1), np.asarray(artifacts.times, dtype=float)[1:T + 1]


def rmse_frame(artifacts: RunArtifacts, label: str) -> pd.DataFrame:
    """One row per (step, RMSE component)."""
    series = artifacts.rmse[label]
    steps, times = _step_grid(artifacts)
    names = artifacts.rmse_names()
    k = len(names)
    return pd.DataFrame({
        "step": np.repeat(steps, k),
        "time": np.repeat(times, k),
        "component": np.tile(names, len(steps)),
        "rmse": series.reshape(-1),
    })


def _long(values: np.ndarray, artifacts: RunArtifacts, names, value_col: str) -> pd.DataFrame:
    """runs×T×J cube -> rows ordered by (step, run, component)."""
    M, T, J = values.shape
    steps, times = _step_grid(artifacts)
    cube = np.transpose(values, (1, 0, 2))
    return pd.DataFrame({
        "step": np.repeat(steps, M * J),
        "time": np.repeat(times, M * J),
        "run": np.tile(np.repeat(np.arange(M), J), T),
        "component": np.tile(list(names), M * T),
        value_col: cube.reshape(-1),
    })


def estimates_frame(artifacts: RunArtifacts, label: str) -> pd.DataFrame:
    df = _long(artifacts.estimates[label], artifacts, artifacts.component_names, "estimate")
    df["truth"] = np.transpose(artifacts.truths, (1, 0, 2)).reshape(-1)
    return df


def observation_names(d: int):
    return [f"z{j}" for j in range(1, d + 1)]


def observations_frame(artifacts: RunArtifacts) -> pd.DataFrame:
    d = artifacts.observations.shape[2]
    return _long(artifacts.observations, artifacts, observation_names(d), "observation")


def summary_frame(artifacts: RunArtifacts) -> pd.DataFrame:
    """Time-averaged RMSE per filter and component, then win-rates for every ordered filter pair."""
    names = artifacts.rmse_names()
    rows = []
    for label, series in artifacts.rmse.items():
        for name, value in zip(names, series.mean(axis=0)):
            rows.append({"metric": METRIC_TIME_AVG_RMSE, "filter": label, "opponent": "",
                         "component": name, "value": float(value)})

    errors = {label: metrics.time_averaged_error(est, artifacts.truths, artifacts.rmse_components)
              for label, est in artifacts.estimates.items()}
    for a in errors:
        for b in errors:
            if a == b:
                continue
            for name, value in zip(names, metrics.win_rate(errors[a], errors[b])):
                rows.append({"metric": METRIC_WIN_RATE, "filter": a, "opponent": b,
                             "component": name, "value": float(value)})
    return pd.DataFrame(rows, columns=["metric", "filter", "opponent", "component", "value"])


def write_meta(path: Union[str, pathlib.Path], doc: Dict[str, Any]) -> pathlib.Path:
    try:
        jsonschema_validate(instance=doc, schema=META_SCHEMA)
    except SchemaValidationError as ve:
        raise IgsfError(f"meta document failed schema validation: {ve.message}",
                        {"path": list(ve.absolute_path)}, code=E_INTERNAL)
    return atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_filter_outputs(artifacts: RunArtifacts, label: str, directory: Union[str, pathlib.Path],
                         meta: Dict[str, Any]) -> pathlib.Path:
    """rmse.csv, estimates.csv, observations.csv and meta.json for one filter."""
    directory = pathlib.Path(directory)
    write_csv(rmse_frame(artifacts, label), directory / RMSE_FILE)
    write_csv(estimates_frame(artifacts, label), directory / ESTIMATES_FILE)
    write_csv(observations_frame(artifacts), directory / OBSERVATIONS_FILE)
    write_meta(directory / META_FILE, meta)
    return directory
