# igsf/models.py
"""
State-space model abstraction.

- ContinuousModel: dX = Q̃(anchor, t) X dt + forcing + G̃(t) dB, linearized about an anchor
  (phase-space linearization) and advanced with exact LTI transition formulas
- DiscreteModel:   explicit map X_{i+1} = Ψ(X_i, i, noise)
- MeasurementModel: Z = H(X, t) + v, v ~ N(0, Σ_Z)
- AugmentedSpec / augment(): unknown parameters appended as zero-drift Brownian states

Particle arrays are row-major: shape (γ, J), one particle per row. Model callables
(drift builders, Ψ, H) take those 2-D arrays directly.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import block_diag

from igsf.errors import DimensionError, NumericalError, ParameterError
from igsf.numerics import (
    DEFAULT_JITTER, RngStream, chol_psd, discretize_input, discretize_lti, mat_exp,
)

ANCHOR_MEAN = "mean"
ANCHOR_PARTICLE = "particle"

DriftBuilder = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ContinuousModel:
    state_dim: int
    drift_matrix: DriftBuilder
    diffusion: Callable[[float], np.ndarray]
    n_params: int = 0
    forcing_matrix: Optional[np.ndarray] = None
    forcing: Optional[Callable[[float], np.ndarray]] = None
    anchor: str = ANCHOR_MEAN
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if self.anchor not in (ANCHOR_MEAN, ANCHOR_PARTICLE):
            raise ParameterError(f"unknown linearization anchor '{self.anchor}'")
        if (self.forcing is None) != (self.forcing_matrix is None):
            raise ParameterError("forcing and forcing_matrix must be given together")
        if self.forcing_matrix is not None and np.shape(self.forcing_matrix)[0] != self.state_dim:
            raise DimensionError("forcing_matrix must have state_dim rows")


@dataclass(frozen=True)
class DiscreteModel:
    state_dim: int
    step: Callable[[np.ndarray, int, np.ndarray], np.ndarray]
    noise_dim: int
    dt: float = 1.0


@dataclass(frozen=True)
class MeasurementModel:
    obs_dim: int
    function: Callable[[np.ndarray, float], np.ndarray]
    noise_cov: np.ndarray
    residual: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if cov.shape != (self.obs_dim, self.obs_dim):
            raise DimensionError(f"noise_cov must be {self.obs_dim}x{self.obs_dim}, got {cov.shape}")
        if not np.allclose(cov, cov.T):
            raise ParameterError("measurement noise covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ParameterError("measurement noise covariance must be positive definite") from e
        object.__setattr__(self, "noise_cov", cov)

    def innovation(self, z: np.ndarray, hx: np.ndarray) -> np.ndarray:
        """z − H(x), row-wise when hx is (k, d)."""
        if self.residual is None:
            return z - hx
        return self.residual(z, hx)


@dataclass(frozen=True)
class AugmentedSpec:
    n_x: int
    n_mu: int
    g_mu: np.ndarray
    prior_mean: np.ndarray
    prior_std: np.ndarray

    def __post_init__(self):
        for name in ("g_mu", "prior_mean", "prior_std"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (self.n_mu,):
                raise DimensionError(f"{name} must have length n_mu={self.n_mu}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if np.any(self.g_mu < 0):
            raise ParameterError("parameter pseudo-noise intensities must be >= 0")

    @property
    def state_dim(self) -> int:
        return self.n_x + self.n_mu

    @classmethod
    def with_default_intensity(cls, n_x: int, prior_mean: Sequence[float], prior_std: Sequence[float],
                               scale: float = 1e-2) -> "AugmentedSpec":
        """G_μ = scale × |prior mean| per unit time."""
        mean = np.asarray(prior_mean, dtype=float)
        return cls(n_x=n_x, n_mu=mean.size, g_mu=scale * np.abs(mean),
                   prior_mean=mean, prior_std=np.asarray(prior_std, dtype=float))


def augment(base: ContinuousModel, spec: AugmentedSpec) -> ContinuousModel:
    """Append spec.n_mu parameter states with zero drift and diffusion diag(g_mu).

    The base drift builder receives the full augmented anchor and reads the parameter
    entries it needs from positions n_x onward.
    """
    if base.state_dim != spec.n_x:
        raise DimensionError(f"base model has {base.state_dim} states, spec expects n_x={spec.n_x}")
    if spec.n_mu == 0:
        return base

    n_x, J = spec.n_x, spec.state_dim
    g_mu = np.diag(spec.g_mu)

    def drift(anchor: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros((J, J))
        out[:n_x, :n_x] = base.drift_matrix(anchor, t)
        return out

    def diffusion(t: float) -> np.ndarray:
        return block_diag(base.diffusion(t), g_mu)

    forcing_matrix = None
    if base.forcing_matrix is not None:
        Bf = np.asarray(base.forcing_matrix, dtype=float)
        forcing_matrix = np.vstack([Bf, np.zeros((spec.n_mu, Bf.shape[1]))])

    return ContinuousModel(
        state_dim=J,
        drift_matrix=drift,
        diffusion=diffusion,
        n_params=base.n_params + spec.n_mu,
        forcing_matrix=forcing_matrix,
        forcing=base.forcing,
        anchor=base.anchor,
        jitter=base.jitter,
    )


def psl_linearize(model: ContinuousModel, anchor: np.ndarray, t_i: float) -> np.ndarray:
    """Q̃(anchor, t_i), valid on (t_i, t_{i+1}]."""
    J = model.state_dim
    Q = np.asarray(model.drift_matrix(np.asarray(anchor, dtype=float), t_i), dtype=float)
    if Q.shape != (J, J):
        raise DimensionError(f"drift builder returned {Q.shape}, expected {(J, J)}")
    if model.n_params and np.any(Q[J - model.n_params:, :]):
        raise ParameterError("parameter rows of the drift matrix must be zero")
    return Q


def _check_particles(particles: np.ndarray, J: int) -> np.ndarray:
    X = np.asarray(particles, dtype=float)
    if X.ndim != 2 or X.shape[1] != J:
        raise DimensionError(f"particles must have shape (γ, {J}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericalError("non-finite particle states")
    return X


def _step_index(model: DiscreteModel, t_i: float, step_index: Optional[int]) -> int:
    return int(step_index) if step_index is not None else int(round(t_i / model.dt))


def _continuous_deterministic(model: ContinuousModel, X: np.ndarray, t_i: float, t_next: float):
    """Noise-free transition of every particle plus the mean-anchor drift matrix."""
    h = t_next - t_i
    if h <= 0:
        raise ParameterError(f"t_next must exceed t_i (got {t_i} -> {t_next})")
    mean_anchor = X.mean(axis=0)
    Q_mean = psl_linearize(model, mean_anchor, t_i)

    if model.anchor == ANCHOR_PARTICLE:
        Qs = np.stack([psl_linearize(model, x, t_i) for x in X])
    else:
        Qs = Q_mean

    if model.forcing is None:
        Phi = mat_exp(Qs, h)
        det = X @ Phi.T if Phi.ndim == 2 else np.einsum("ujk,uk->uj", Phi, X)
        return det, Q_mean

    u0 = np.asarray(model.forcing(t_i), dtype=float)
    du = (np.asarray(model.forcing(t_next), dtype=float) - u0) / h
    Phi, B0, B1 = discretize_input(Qs, model.forcing_matrix, h, order_hold=1)
    if Phi.ndim == 2:
        det = X @ Phi.T + B0 @ u0 + B1 @ du
    else:
        det = (np.einsum("ujk,uk->uj", Phi, X)
               + np.einsum("ujm,m->uj", B0, u0)
               + np.einsum("ujm,m->uj", B1, du))
    return det, Q_mean


def propagate_subensemble(
    model: Union[ContinuousModel, DiscreteModel],
    particles: np.ndarray,
    t_i: float,
    t_next: float,
    stream: RngStream,
    step_index: Optional[int] = None,
) -> np.ndarray:
    """Predicted particles at t_next; each particle consumes its own noise draw."""
    X = _check_particles(particles, model.state_dim)

    if isinstance(model, DiscreteModel):
        noise = stream.normal((X.shape[0], model.noise_dim))
        return np.asarray(model.step(X, _step_index(model, t_i, step_index), noise), dtype=float)

    det, Q_mean = _continuous_deterministic(model, X, t_i, t_next)
    _, SigmaD = discretize_lti(Q_mean, model.diffusion(t_i), t_next - t_i)
    if not SigmaD.any():
        return det
    L, _ = chol_psd(SigmaD, model.jitter, site="process_noise")
    z = stream.normal((X.shape[0], model.state_dim))
    return det + z @ L.T


def propagate_mean(
    model: Union[ContinuousModel, DiscreteModel],
    particles: np.ndarray,
    t_i: float,
    t_next: float,
    step_index: Optional[int] = None,
) -> np.ndarray:
    """Noise-free propagation (Phi·x + forcing term, or Ψ(x, i, 0))."""
    X = _check_particles(particles, model.state_dim)
    if isinstance(model, DiscreteModel):
        zeros = np.zeros((X.shape[0], model.noise_dim))
        return np.asarray(model.step(X, _step_index(model, t_i, step_index), zeros), dtype=float)
    det, _ = _continuous_deterministic(model, X, t_i, t_next)
    return det


def measure(mm: MeasurementModel, x: np.ndarray, t: float) -> np.ndarray:
    """Noise-free predicted measurement H(x, t); x is one state or a (k, J) stack."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.asarray(mm.function(x[None, :], t), dtype=float)[0]
    return np.asarray(mm.function(x, t), dtype=float)


def wrap_angle(a: np.ndarray) -> np.ndarray:
    """Map angles into (−π, π]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def angular_residual(angle_components: Sequence[int]) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Innovation operator that wraps the listed components into (−π, π]."""
    idx = list(angle_components)

    def residual(z: np.ndarray, hx: np.ndarray) -> np.ndarray:
        r = np.array(z - hx, dtype=float)
        r[..., idx] = wrap_angle(r[..., idx])
        return r

    return residual
