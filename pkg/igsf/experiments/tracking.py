# igsf/experiments/tracking.py
"""
Manoeuvring target tracked from bearing and range.

Truth:   Ξ_{i+1} = Υ Ξ_i + Λ (a_i + m_i),  Ξ = [X, X_v, Y, Y_v]
         m_i is the manoeuvre acceleration when t_i hits a manoeuvre time, else 0
Sensor:  Z = [atan2(Y − y0, X − x0), |(X, Y) − (x0, y0)|] + v
The filter uses the plain constant-velocity model with random acceleration a_i only.
"""

from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from igsf.errors import BearingUndefinedError
from igsf.experiments.problem import Problem
from igsf.models import DiscreteModel, MeasurementModel, angular_residual, wrap_angle
from igsf.numerics import RngStream, derive_stream_id, chol_psd

TRUTH_PURPOSE = "truth:tracking"

COMPONENTS = ["X", "Xv", "Y", "Yv"]


class TrackingScenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    delta: float = Field(0.1, gt=0)
    horizon: float = Field(80.0, gt=0)
    initial_state: Tuple[float, float, float, float] = (0.5, 3.0, 1.0, 1.0)
    # (time s, accel x, accel y)
    maneuvers: List[Tuple[float, float, float]] = [(20.0, -40.0, 40.0), (30.0, 25.0, -25.0), (60.0, 25.0, -25.0)]
    accel_cov: Tuple[float, float] = (8.0, 8.0)
    sensor: Tuple[float, float] = (0.0, 0.0)
    meas_cov: Tuple[float, float] = (0.2, 35.0)
    prior_mean: Tuple[float, float, float, float] = (0.0, 40.0, 0.2, 0.075)
    prior_var: Tuple[float, float, float, float] = (1.0, 100.0, 1.0, 100.0)

    @model_validator(mode="after")
    def _check(self):
        if any(v < 0 for v in self.accel_cov + self.meas_cov):
            raise ValueError("noise variances must be >= 0")
        for t, _, _ in self.maneuvers:
            if not 0.0 <= t <= self.horizon:
                raise ValueError(f"maneuver time {t} outside [0, {self.horizon}]")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.delta))


def transition_matrices(delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """(Υ, Λ) for the discretized constant-velocity model."""
    upsilon = np.array([[1.0, delta, 0.0, 0.0],
                        [0.0, 1.0, 0.0, 0.0],
                        [0.0, 0.0, 1.0, delta],
                        [0.0, 0.0, 0.0, 1.0]])
    lam = np.array([[0.5 * delta ** 2, 0.0],
                    [delta, 0.0],
                    [0.0, 0.5 * delta ** 2],
                    [0.0, delta]])
    return upsilon, lam


def bearing_range(X: np.ndarray, sensor: Tuple[float, float]) -> np.ndarray:
    """(k, 4) states -> (k, 2) [bearing, range]."""
    dx = X[:, 0] - sensor[0]
    dy = X[:, 2] - sensor[1]
    return np.column_stack([np.arctan2(dy, dx), np.hypot(dx, dy)])


def _factor(variances) -> np.ndarray:
    cov = np.diag(np.asarray(variances, dtype=float))
    return chol_psd(cov, site="tracking")[0] if cov.any() else np.zeros_like(cov)


def tracking_model(sc: TrackingScenario) -> DiscreteModel:
    upsilon, lam = transition_matrices(sc.delta)
    B = lam @ _factor(sc.accel_cov)

    def step(X: np.ndarray, i: int, noise: np.ndarray) -> np.ndarray:
        return X @ upsilon.T + noise @ B.T

    return DiscreteModel(state_dim=4, step=step, noise_dim=2, dt=sc.delta)


def tracking_measurement(sc: TrackingScenario) -> MeasurementModel:
    return MeasurementModel(
        obs_dim=2,
        function=lambda X, t: bearing_range(X, sc.sensor),
        noise_cov=np.diag(sc.meas_cov),
        residual=angular_residual([0]),
    )


def gen_tracking(sc: TrackingScenario, seed: int, run: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Truth Ξ_1..Ξ_T (T×4) and bearing/range observations (T×2)."""
    stream = RngStream.for_purpose(seed, run, 0, TRUTH_PURPOSE)
    upsilon, lam = transition_matrices(sc.delta)
    La, Lv = _factor(sc.accel_cov), _factor(sc.meas_cov)
    kicks = {int(round(t / sc.delta)): np.array([ax, ay]) for t, ax, ay in sc.maneuvers}

    T = sc.steps
    truth, obs = np.empty((T, 4)), np.empty((T, 2))
    x = np.asarray(sc.initial_state, dtype=float)
    for i in range(T):
        a = La @ stream.normal(2) + kicks.get(i, 0.0)
        x = upsilon @ x + lam @ a
        if x[0] == sc.sensor[0] and x[2] == sc.sensor[1]:
            raise BearingUndefinedError("target coincides with the sensor", {"step": i + 1})
        z = bearing_range(x[None, :], sc.sensor)[0] + Lv @ stream.normal(2)
        truth[i], obs[i] = x, (wrap_angle(z[0]), abs(z[1]))
    return truth, obs


def make_problem(params: Union[dict, TrackingScenario], seed: int, run: int) -> Problem:
    sc = params if isinstance(params, TrackingScenario) else TrackingScenario(**(params or {}))
    truth, obs = gen_tracking(sc, seed, run)
    return Problem(
        name="tracking",
        model=tracking_model(sc),
        mm=tracking_measurement(sc),
        prior_mean=np.asarray(sc.prior_mean, dtype=float),
        prior_cov=np.diag(sc.prior_var),
        times=np.arange(sc.steps + 1) * sc.delta,
        truth=truth,
        observations=obs,
        component_names=list(COMPONENTS),
        rmse_components=[0, 2],
        truth_stream_id=derive_stream_id(run, 0, TRUTH_PURPOSE),
    )
