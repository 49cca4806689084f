# igsf/experiments/shear_frame.py
"""
n-storey shear frame with unknown stiffness and damping.

  Ẍ + C Ẋ + S X = F(t) + G Ḃ(t),   f^(j)(t) = f0 cos(ω t),   unit masses

First-order state interleaves displacement and velocity per floor: [x1, v1, …, xn, vn].
The filter state appends the 2n parameters [s1..sn, c1..cn] as zero-drift Brownian
coordinates, so J = 4n. Observations are the noisy floor displacements.
"""

from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from igsf.errors import ParameterError
from igsf.experiments.problem import Problem
from igsf.models import ANCHOR_PARTICLE, AugmentedSpec, ContinuousModel, MeasurementModel, augment
from igsf.numerics import RngStream, derive_stream_id, chol_psd, discretize_input, discretize_lti


TRUTH_PURPOSE = "truth:frame"


class ShearFrameSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(5, ge=1)
    stiffness: Optional[List[float]] = None
    damping: Optional[List[float]] = None
    f0: float = 30.0
    forcing_freq: float = 5.0
    noise_intensity: float = Field(0.1, ge=0)
    noise_fraction: float = Field(0.005, ge=0)
    h: float = Field(0.01, gt=0)
    horizon: float = Field(10.0, gt=0)
    initial_state: Optional[List[float]] = None
    param_bias: float = Field(1.3, gt=0)
    param_prior_frac: float = Field(0.2, gt=0)
    state_prior_std: float = Field(1e-3, gt=0)
    param_noise_scale: float = Field(1e-2, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _uniform_defaults(cls, data):
        if isinstance(data, dict):
            n = data.get("n", 5)
            data = {"stiffness": [100.0] * n, "damping": [5.0] * n, **{k: v for k, v in data.items() if v is not None}}
        return data

    @model_validator(mode="after")
    def _check(self):
        if len(self.stiffness) != self.n or len(self.damping) != self.n:
            raise ValueError("stiffness and damping need one entry per floor")
        if min(self.stiffness) <= 0 or min(self.damping) <= 0:
            raise ValueError("stiffness and damping must be > 0")
        if self.initial_state is not None and len(self.initial_state) != 2 * self.n:
            raise ValueError("initial_state needs 2n entries")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.h))

    @property
    def true_params(self) -> np.ndarray:
        return np.concatenate([self.stiffness, self.damping]).astype(float)


def frame5_spec(**overrides) -> ShearFrameSpec:
    return ShearFrameSpec(**{"n": 5, **overrides})


def frame20_spec(**overrides) -> ShearFrameSpec:
    stiffness = [100.0] * 18 + [98.0, 98.0]
    # quieter sensors than frame5
    return ShearFrameSpec(**{"n": 20, "stiffness": stiffness, "noise_fraction": 0.0025, **overrides})


def _tridiag(k: np.ndarray) -> np.ndarray:
    n = k.size
    M = np.zeros((n, n))
    for j in range(n):
        M[j, j] = k[j] + (k[j + 1] if j + 1 < n else 0.0)
        if j + 1 < n:
            M[j, j + 1] = M[j + 1, j] = -k[j + 1]
    return M


def build_shear_frame(n: int, s, c) -> Tuple[np.ndarray, np.ndarray]:
    """Stiffness and damping matrices (symmetric tridiagonal, last diagonal s_n / c_n)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if s.size != n or c.size != n:
        raise ParameterError(f"need {n} stiffness and damping values, got {s.size} and {c.size}")
    return _tridiag(s), _tridiag(c)


def _interleave(n: int) -> np.ndarray:
    """Index map from [x; v] block order to [x1, v1, x2, v2, …]."""
    return np.ravel(np.column_stack([np.arange(n), n + np.arange(n)]))


def frame_drift(n: int, S: np.ndarray, C: np.ndarray) -> np.ndarray:
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -S
    A[n:, n:] = -C
    p = _interleave(n)
    return A[np.ix_(p, p)]


def velocity_input(n: int, M: np.ndarray) -> np.ndarray:
    """2n×m matrix putting M on the velocity rows of the interleaved state."""
    B = np.zeros((2 * n, M.shape[1]))
    B[1::2] = M
    return B


def _forcing(spec: ShearFrameSpec):
    ones = np.ones(spec.n)
    return lambda t: spec.f0 * np.cos(spec.forcing_freq * t) * ones


def _integrate(spec: ShearFrameSpec, stream: Optional[RngStream]) -> np.ndarray:
    """States at t_1..t_T with the true parameters; noise-free when stream is None."""
    n, h = spec.n, spec.h
    S, C = build_shear_frame(n, spec.stiffness, spec.damping)
    A = frame_drift(n, S, C)
    G = velocity_input(n, spec.noise_intensity * np.eye(n))
    Phi, SigmaD = discretize_lti(A, G, h)
    _, B0, B1 = discretize_input(A, velocity_input(n, np.eye(n)), h)
    L = chol_psd(SigmaD, site="frame_truth")[0] if (stream is not None and SigmaD.any()) else None
    f = _forcing(spec)

    x = np.zeros(2 * n) if spec.initial_state is None else np.asarray(spec.initial_state, dtype=float)
    out = np.empty((spec.steps, 2 * n))
    for i in range(spec.steps):
        u0, u1 = f(i * h), f((i + 1) * h)
        x = Phi @ x + B0 @ u0 + B1 @ ((u1 - u0) / h)
        if L is not None:
            x = x + L @ stream.normal(2 * n)
        out[i] = x
    return out


def clean_displacement_rms(spec: ShearFrameSpec) -> np.ndarray:
    """Per-floor RMS displacement of the noise-free response."""
    X = _integrate(spec, None)[:, 0::2]
    return np.sqrt(np.mean(X * X, axis=0))


def measurement_std(spec: ShearFrameSpec) -> np.ndarray:
    return spec.noise_fraction * clean_displacement_rms(spec)


def gen_frame(spec: ShearFrameSpec, seed: int, run: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Truth (T×2n interleaved states) and noisy displacements (T×n)."""
    stream = RngStream.for_purpose(seed, run, 0, TRUTH_PURPOSE)
    states = _integrate(spec, stream)
    std = measurement_std(spec)
    obs = states[:, 0::2] + stream.normal((spec.steps, spec.n)) * std
    return states, obs


def frame_filter_model(spec: ShearFrameSpec, prior_params: np.ndarray) -> ContinuousModel:
    """Augmented 4n model; each particle's own parameters set its drift."""
    n = spec.n
    G = velocity_input(n, spec.noise_intensity * np.eye(n))

    def drift(anchor: np.ndarray, t: float) -> np.ndarray:
        s, c = anchor[2 * n:3 * n], anchor[3 * n:4 * n]
        return frame_drift(n, *build_shear_frame(n, s, c))

    base = ContinuousModel(
        state_dim=2 * n,
        drift_matrix=drift,
        diffusion=lambda t: G,
        forcing_matrix=velocity_input(n, np.eye(n)),
        forcing=_forcing(spec),
        anchor=ANCHOR_PARTICLE,
    )
    spec_mu = AugmentedSpec.with_default_intensity(
        2 * n, prior_params, spec.param_prior_frac * spec.true_params, scale=spec.param_noise_scale,
    )
    return augment(base, spec_mu)


def component_names(n: int) -> List[str]:
    states = [name for j in range(1, n + 1) for name in (f"x{j}", f"v{j}")]
    return states + [f"s{j}" for j in range(1, n + 1)] + [f"c{j}" for j in range(1, n + 1)]


def make_problem(params: Union[dict, ShearFrameSpec], seed: int, run: int) -> Problem:
    spec = params if isinstance(params, ShearFrameSpec) else ShearFrameSpec(**(params or {}))
    n = spec.n
    states, obs = gen_frame(spec, seed, run)
    true_params = spec.true_params
    prior_params = spec.param_bias * true_params

    std = measurement_std(spec)
    if not np.all(std > 0):
        raise ParameterError("measurement noise must be positive on every floor", {"std": std.tolist()})

    H_idx = np.arange(0, 2 * n, 2)
    mm = MeasurementModel(obs_dim=n, function=lambda X, t: X[:, H_idx], noise_cov=np.diag(std ** 2))

    prior_mean = np.concatenate([np.zeros(2 * n), prior_params])
    prior_std = np.concatenate([np.full(2 * n, spec.state_prior_std), spec.param_prior_frac * true_params])
    truth = np.hstack([states, np.tile(true_params, (spec.steps, 1))])

    return Problem(
        name=f"frame{n}",
        model=frame_filter_model(spec, prior_params),
        mm=mm,
        prior_mean=prior_mean,
        prior_cov=np.diag(prior_std ** 2),
        times=np.arange(spec.steps + 1) * spec.h,
        truth=truth,
        observations=obs,
        component_names=component_names(n),
        rmse_components=list(range(4 * n)),
        truth_stream_id=derive_stream_id(run, 0, TRUTH_PURPOSE),
    )
