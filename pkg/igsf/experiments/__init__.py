# igsf/experiments/__init__.py
"""Named benchmark problems: name -> make_problem(params, seed, run)."""

from typing import Any, Callable, Dict

from pydantic import BaseModel

from igsf.errors import ParameterError
from igsf.experiments import growth, linear, shear_frame, tracking
from igsf.experiments.problem import Problem

# name -> builder of the validated parameter model (defaults filled)
PARAMS: Dict[str, Callable[..., BaseModel]] = {
    "growth": growth.GrowthModelParams,
    "tracking": tracking.TrackingScenario,
    "frame5": shear_frame.frame5_spec,
    "frame20": shear_frame.frame20_spec,
    "linear": linear.LinearModelSpec,
}

EXPERIMENTS: Dict[str, Callable[..., Problem]] = {
    "growth": growth.make_problem,
    "tracking": tracking.make_problem,
    "frame5": shear_frame.make_problem,
    "frame20": shear_frame.make_problem,
    "linear": linear.make_problem,
}


def _check(name: str) -> None:
    if name not in EXPERIMENTS:
        raise ParameterError(f"unknown experiment '{name}'", {"allowed": sorted(EXPERIMENTS)})


def resolve_params(name: str, params: Dict[str, Any] = None) -> BaseModel:
    """Raises pydantic.ValidationError on bad parameters."""
    _check(name)
    return PARAMS[name](**(params or {}))


def make_problem(name: str, params: dict, seed: int, run: int) -> Problem:
    _check(name)
    model = params if isinstance(params, BaseModel) else resolve_params(name, params)
    return EXPERIMENTS[name](model, seed, run)
