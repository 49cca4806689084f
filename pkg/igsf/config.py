# igsf/config.py
"""
Run configuration: JSON text -> validated Config.

- parse_config(text, overrides=None) -> Config
- resolve_config(data, overrides=None) -> Config
- serialize_config(config) -> canonical JSON text (round-trips through parse_config)

Named experiments carry their published filter settings; a filter entry only needs a
"kind", everything else is filled from EXPERIMENT_DEFAULTS and then the generic defaults.
"""

import copy
import json
import os
import pathlib
from typing import Any, Dict, List, Optional

from jsonschema import validate as jsonschema_validate, ValidationError as SchemaValidationError
from pydantic import ValidationError

from igsf.errors import ConfigError
from igsf.experiments import resolve_params
from igsf.schemas import Config

_ROOT = pathlib.Path(__file__).resolve().parents[1]
_SCHEMA_PATH = _ROOT / "schemas" / "run_config_schema.json"
with open(_SCHEMA_PATH, "r", encoding="utf-8") as f:
    RUN_CONFIG_SCHEMA = json.load(f)

DEFAULT_OUT_DIR = "results"

_FRAME_BANK = {"n_particles": 400, "n_mixands": 10, "iterations": 10, "alpha1": 2.0,
               "schedule": "constant-then-zero"}

# per experiment: default filter list and per-kind settings
EXPERIMENT_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "growth": {
        "filters": ["igsf-bank", "gspf"],
        "kinds": {
            "igsf-bank": {"n_particles": 1000, "n_mixands": 10, "iterations": 5, "alpha1": 1.0,
                          "schedule": "exp-decay"},
            "gspf": {"n_particles": 1000, "n_mixands": 10},
        },
    },
    "tracking": {
        "filters": ["igsf-bank", "asir"],
        "kinds": {
            "igsf-bank": {"n_particles": 200, "n_mixands": 5, "iterations": 10, "alpha1": 10.0,
                          "schedule": "exp-decay"},
            "asir": {"n_particles": 200},
        },
    },
    "frame5": {
        "filters": ["enkf", "igsf", "igsf-adp", "igsf-bank"],
        "kinds": {
            "igsf-bank": dict(_FRAME_BANK),
            "igsf-adp": {**_FRAME_BANK, "n_mixands": 1},
            "igsf": {**_FRAME_BANK, "n_mixands": 1, "schedule": "none", "alpha1": 0.0},
            "enkf": {"n_particles": 400},
        },
    },
    "frame20": {
        "filters": ["enkf", "igsf", "igsf-adp", "igsf-bank"],
        "kinds": {
            "igsf-bank": {**_FRAME_BANK, "iterations": 8, "alpha1": 3.0},
            "igsf-adp": {**_FRAME_BANK, "n_mixands": 1, "iterations": 8, "alpha1": 3.0},
            "igsf": {**_FRAME_BANK, "n_mixands": 1, "iterations": 8, "schedule": "none", "alpha1": 0.0},
            "enkf": {"n_particles": 400},
        },
    },
    "linear": {
        "filters": ["kalman", "igsf-bank", "enkf", "sir", "asir", "gspf"],
        "kinds": {
            "kalman": {"n_particles": 2},
            "igsf-bank": {"n_particles": 5000, "n_mixands": 1, "iterations": 0},
            "enkf": {"n_particles": 5000},
            "sir": {"n_particles": 5000},
            "asir": {"n_particles": 5000},
            "gspf": {"n_particles": 5000, "n_mixands": 1},
        },
    },
}

# kinds whose schedule/mixand count is fixed regardless of experiment
_KIND_FIXED = {
    "igsf-adp": {"n_mixands": 1},
    "igsf": {"n_mixands": 1, "schedule": "none"},
}


def _env_number(name: str, cast):
    raw = os.getenv(name)
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got '{raw}'", name)


def _env_defaults() -> Dict[str, Any]:
    out = {"out_dir": os.getenv("IGSF_OUT_DIR", DEFAULT_OUT_DIR)}
    if os.getenv("IGSF_WORKERS"):
        out["workers"] = _env_number("IGSF_WORKERS", int)
    if os.getenv("IGSF_JITTER"):
        out["jitter"] = _env_number("IGSF_JITTER", float)
    return out


def _resolve_params(experiment: str, params: Dict[str, Any]) -> Dict[str, Any]:
    """Experiment parameters with every default filled in."""
    try:
        return resolve_params(experiment, params).model_dump(mode="json")
    except ValidationError as ve:
        err = ve.errors()[0]
        raise ConfigError(f"invalid experiment parameters: {err['msg']}",
                          _field_of(["params", *err.get("loc", ())]),
                          {"errors": [e["msg"] for e in ve.errors()]})


def _fill_filter(experiment: str, entry: Dict[str, Any]) -> Dict[str, Any]:
    kind = entry["kind"]
    filled = dict(EXPERIMENT_DEFAULTS[experiment]["kinds"].get(kind, {}))
    filled.update(_KIND_FIXED.get(kind, {}))
    filled.update(entry)
    filled.setdefault("label", kind)
    return filled


def _select_filters(data: Dict[str, Any], names: List[str]) -> List[Dict[str, Any]]:
    """--filter NAME: keep configured entries whose label matches, add defaults for bare kinds."""
    by_label = {f.get("label", f["kind"]): f for f in data.get("filters", [])}
    return [by_label.get(name, {"kind": name, "label": name}) for name in names]


def _field_of(loc) -> str:
    return ".".join(str(p) for p in loc) if loc else None


def resolve_config(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Config:
    """Validate raw config data, apply overrides and defaults, return the Config model."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = copy.deepcopy(data)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    filter_names = overrides.pop("filters", None)
    data.update(overrides)
    if filter_names:
        data["filters"] = _select_filters(data, filter_names)

    try:
        jsonschema_validate(instance=data, schema=RUN_CONFIG_SCHEMA)
    except SchemaValidationError as ve:
        raise ConfigError(f"config failed schema validation: {ve.message}", _field_of(list(ve.absolute_path)))

    experiment = data["experiment"]
    entries = data.get("filters") or [{"kind": k} for k in EXPERIMENT_DEFAULTS[experiment]["filters"]]
    resolved = {**_env_defaults(), **data, "filters": [_fill_filter(experiment, e) for e in entries],
                "params": _resolve_params(experiment, data.get("params"))}

    try:
        return Config(**resolved)
    except ValidationError as ve:
        err = ve.errors()[0]
        raise ConfigError(f"invalid config: {err['msg']}", _field_of(err.get("loc")),
                          {"errors": [e["msg"] for e in ve.errors()]})


def parse_config(text: str, overrides: Optional[Dict[str, Any]] = None) -> Config:
    try:
        data = json.loads(text) if text and text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e.msg}", "syntax", {"line": e.lineno, "column": e.colno})
    return resolve_config(data, overrides)


def serialize_config(config: Config) -> str:
    return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"
