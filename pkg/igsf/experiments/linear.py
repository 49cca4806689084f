# igsf/experiments/linear.py
"""Two-state linear-Gaussian system: the configuration where the exact Kalman filter is the answer."""

from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from igsf.experiments.problem import LinearGaussian, Problem
from igsf.models import DiscreteModel, MeasurementModel
from igsf.numerics import RngStream, derive_stream_id, chol_psd

TRUTH_PURPOSE = "truth:linear"

Matrix = List[List[float]]


class LinearModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    F: Matrix = [[1.0, 0.1], [0.0, 0.9]]
    Q: Matrix = [[0.05, 0.0], [0.0, 0.1]]
    H: Matrix = [[1.0, 0.0]]
    R: Matrix = [[0.5]]
    m0: List[float] = [0.0, 1.0]
    P0: Matrix = [[1.0, 0.0], [0.0, 1.0]]
    steps: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _shapes(self):
        n, d = len(self.m0), len(self.H)
        expected = {"F": (n, n), "Q": (n, n), "H": (d, n), "R": (d, d), "P0": (n, n)}
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise ValueError(f"{name} must have shape {shape}")
        return self

    def matrices(self) -> LinearGaussian:
        return LinearGaussian(*(np.asarray(getattr(self, k), dtype=float) for k in ("F", "Q", "H", "R")))


def linear_model(spec: LinearModelSpec) -> DiscreteModel:
    lg = spec.matrices()
    Lq, _ = chol_psd(lg.Q, site="linear_process")

    def step(X: np.ndarray, i: int, noise: np.ndarray) -> np.ndarray:
        return X @ lg.F.T + noise @ Lq.T

    return DiscreteModel(state_dim=lg.F.shape[0], step=step, noise_dim=lg.F.shape[0])


def linear_measurement(spec: LinearModelSpec) -> MeasurementModel:
    lg = spec.matrices()
    return MeasurementModel(obs_dim=lg.H.shape[0], function=lambda X, t: X @ lg.H.T, noise_cov=lg.R)


def gen_linear(spec: LinearModelSpec, seed: int, run: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    stream = RngStream.for_purpose(seed, run, 0, TRUTH_PURPOSE)
    lg = spec.matrices()
    n, d = lg.F.shape[0], lg.H.shape[0]
    Lq, _ = chol_psd(lg.Q, site="linear_process")
    Lr, _ = chol_psd(lg.R, site="linear_measurement")
    L0, _ = chol_psd(np.asarray(spec.P0, dtype=float), site="prior")

    x = np.asarray(spec.m0, dtype=float) + L0 @ stream.normal(n)
    truth, obs = np.empty((spec.steps, n)), np.empty((spec.steps, d))
    for i in range(spec.steps):
        x = lg.F @ x + Lq @ stream.normal(n)
        truth[i], obs[i] = x, lg.H @ x + Lr @ stream.normal(d)
    return truth, obs


def make_problem(params: Union[dict, LinearModelSpec], seed: int, run: int) -> Problem:
    spec = params if isinstance(params, LinearModelSpec) else LinearModelSpec(**(params or {}))
    truth, obs = gen_linear(spec, seed, run)
    n = truth.shape[1]
    return Problem(
        name="linear",
        model=linear_model(spec),
        mm=linear_measurement(spec),
        prior_mean=np.asarray(spec.m0, dtype=float),
        prior_cov=np.asarray(spec.P0, dtype=float),
        times=np.arange(spec.steps + 1, dtype=float),
        truth=truth,
        observations=obs,
        component_names=[f"x{j}" for j in range(1, n + 1)],
        rmse_components=list(range(n)),
        linear=spec.matrices(),
        truth_stream_id=derive_stream_id(run, 0, TRUTH_PURPOSE),
    )
