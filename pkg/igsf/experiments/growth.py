# igsf/experiments/growth.py
"""
Univariate nonstationary growth benchmark.

  X_{i+1} = (γ1 X_i + γ2 X_i² + 8 cos(ϑ i)) h + G ΔB_i
  Z_{i+1} = X_{i+1}² + G_z (ΔB_z)_i
with ΔB ~ N(0, h). The reference state starts uniform on [0, 1].
"""

import math
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from igsf.experiments.problem import Problem
from igsf.models import DiscreteModel, MeasurementModel
from igsf.numerics import RngStream, derive_stream_id

TRUTH_PURPOSE = "truth:growth"


class GrowthModelParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma1: float = 0.2
    gamma2: float = 0.01
    theta: float = 1.2
    h: float = Field(1.0, gt=0)
    process_var: float = Field(10.0, ge=0)
    meas_var: float = Field(0.01, ge=0)
    steps: int = Field(50, ge=1)
    prior_mean: float = 0.5
    prior_var: float = Field(2.0, gt=0)
    x0: Optional[float] = None


def _drift(p: GrowthModelParams, X: np.ndarray, i: int) -> np.ndarray:
    return (p.gamma1 * X + p.gamma2 * X * X + 8.0 * math.cos(p.theta * i)) * p.h


def growth_model(p: GrowthModelParams) -> DiscreteModel:
    g = math.sqrt(p.process_var * p.h)

    def step(X: np.ndarray, i: int, noise: np.ndarray) -> np.ndarray:
        return _drift(p, X, i) + g * noise

    return DiscreteModel(state_dim=1, step=step, noise_dim=1, dt=p.h)


def growth_measurement(p: GrowthModelParams) -> MeasurementModel:
    return MeasurementModel(obs_dim=1, function=lambda X, t: X * X, noise_cov=np.array([[p.meas_var * p.h]]))


def gen_growth(p: GrowthModelParams, seed: int, run: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Truth X_1..X_T and observations Z_1..Z_T for one run."""
    stream = RngStream.for_purpose(seed, run, 0, TRUTH_PURPOSE)
    g, gz = math.sqrt(p.process_var * p.h), math.sqrt(p.meas_var * p.h)
    x = float(p.x0) if p.x0 is not None else float(stream.uniform())

    truth, obs = np.empty(p.steps), np.empty(p.steps)
    for i in range(p.steps):
        w, v = stream.normal(2)
        x = float(_drift(p, np.array(x), i)) + g * w
        truth[i], obs[i] = x, x * x + gz * v
    return truth, obs


def make_problem(params: Union[dict, GrowthModelParams], seed: int, run: int) -> Problem:
    p = params if isinstance(params, GrowthModelParams) else GrowthModelParams(**(params or {}))
    truth, obs = gen_growth(p, seed, run)
    return Problem(
        name="growth",
        model=growth_model(p),
        mm=growth_measurement(p),
        prior_mean=np.array([p.prior_mean]),
        prior_cov=np.array([[p.prior_var]]),
        times=np.arange(p.steps + 1) * p.h,
        truth=truth[:, None],
        observations=obs[:, None],
        component_names=["x"],
        rmse_components=[0],
        truth_stream_id=derive_stream_id(run, 0, TRUTH_PURPOSE),
    )
