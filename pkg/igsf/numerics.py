# igsf/numerics.py
"""
Dense linear algebra and random-number primitives.

Provides:
- mat_exp(A, t)                         exp(A t) (scipy scaling-and-squaring / Padé)
- discretize_lti(Q, G, h)               exact one-step transition + noise covariance (Van Loan)
- discretize_input(Q, B, h)             zero/first-order-hold input matrices (augmented expm)
- chol_psd(M, jitter)                   Cholesky with a x10 jitter ladder
- solve_psd(A, B, jitter)               A X = B for symmetric PSD A
- gauss_logpdf(x, mean, cov)            multivariate normal log-density
- RngStream / draw_normal               counter-based, splittable normal streams

Every function is pure given its inputs; an RngStream mutates only its own counter.
"""

import hashlib
import math
from dataclasses import dataclass, field
from typing import Tuple, Union, Sequence

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_solve, expm, solve_triangular

from igsf import monitoring
from igsf.errors import DimensionError, NumericalError, ParameterError

_U64 = (1 << 64) - 1
_LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_JITTER = 1e-12
MAX_ESCALATIONS = 10


def _square(A: np.ndarray, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def mat_exp(A: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(A t). Accepts a stack of matrices with shape (..., n, n)."""
    A = _square(A)
    if not np.all(np.isfinite(A)):
        raise ParameterError("mat_exp input has non-finite entries")
    return expm(A * t)


def discretize_lti(Q: np.ndarray, Gmat: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Transition Phi = exp(Q h) and noise covariance SigmaD = ∫_0^h e^{Qs} G Gᵀ e^{Qᵀs} ds.

    Van Loan: expm([[-Q, GGᵀ], [0, Qᵀ]] h) = [[·, E12], [0, E22]], Phi = E22ᵀ, SigmaD = Phi E12.
    """
    Q = _square(Q, "Q")
    Gmat = np.asarray(Gmat, dtype=float)
    if h <= 0:
        raise ParameterError(f"discretization step must be positive, got h={h}")
    n = Q.shape[0]
    if Gmat.ndim != 2 or Gmat.shape[0] != n:
        raise DimensionError(f"G must have {n} rows, got shape {Gmat.shape}")

    GG = Gmat @ Gmat.T
    if not GG.any():
        return mat_exp(Q, h), np.zeros((n, n))

    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -Q
    M[:n, n:] = GG
    M[n:, n:] = Q.T
    E = expm(M * h)
    Phi = E[n:, n:].T
    SigmaD = Phi @ E[:n, n:]
    return Phi, 0.5 * (SigmaD + SigmaD.T)


def discretize_input(
    Q: np.ndarray, B: np.ndarray, h: float, order_hold: int = 1
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Discretize dx = (Q x + B u(t)) dt over one step of length h.

    Returns (Phi, B0d, B1d) so that x(h) = Phi x(0) + B0d u(0) + B1d (u(h) - u(0)) / h,
    exact for inputs that are linear over the step (first-order hold). With order_hold=0,
    B1d is zero. Q may be a stack (..., n, n); B is shared.
    """
    Q = _square(Q, "Q")
    B = np.asarray(B, dtype=float)
    if h <= 0:
        raise ParameterError(f"discretization step must be positive, got h={h}")
    n = Q.shape[-1]
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    m = B.shape[1]
    batch = Q.shape[:-2]

    if order_hold == 0:
        F = np.zeros(batch + (n + m, n + m))
        F[..., :n, :n] = Q
        F[..., :n, n:] = B
        top = expm(F * h)[..., :n, :]
        return top[..., :n], top[..., n:], np.zeros(batch + (n, m))

    F = np.zeros(batch + (n + 2 * m, n + 2 * m))
    F[..., :n, :n] = Q
    F[..., :n, n:n + m] = B
    F[..., n:n + m, n + m:] = np.eye(m)
    top = expm(F * h)[..., :n, :]
    return top[..., :n], top[..., n:n + m], top[..., n + m:]


def chol_psd(M: np.ndarray, jitter: float = DEFAULT_JITTER, site: str = "chol_psd") -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of (M + Mᵀ)/2 + δI with δ the first of {0, jitter, 10·jitter, …} that works.

    Returns (L, δ). Raises NumericalError after MAX_ESCALATIONS jitter levels.
    """
    M = _square(M, "M")
    if M.ndim != 2:
        raise DimensionError("chol_psd takes a single matrix")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix to factorize has non-finite entries", {"site": site})
    S = 0.5 * (M + M.T)
    n = S.shape[0]

    ladder = [0.0]
    if jitter > 0:
        ladder += [jitter * 10.0 ** k for k in range(MAX_ESCALATIONS)]

    for delta in ladder:
        try:
            L = np.linalg.cholesky(S + delta * np.eye(n) if delta else S)
        except LinAlgError:
            continue
        if delta > 0:
            monitoring.inc_jitter_escalation(site)
            if delta > jitter:
                monitoring.logger.warning(
                    "Cholesky needed jitter beyond base level",
                    extra={"site": site, "delta": delta, "base_jitter": jitter},
                )
        return L, delta

    raise NumericalError(
        f"Cholesky factorization failed after {len(ladder) - 1} jitter escalations",
        {"site": site, "max_jitter": ladder[-1]},
    )


def solve_psd(A: np.ndarray, B: np.ndarray, jitter: float = DEFAULT_JITTER, site: str = "solve_psd") -> np.ndarray:
    """X with A X = B, A symmetric positive (semi)definite."""
    L, _ = chol_psd(A, jitter, site=site)
    return cho_solve((L, True), np.asarray(B, dtype=float))


def gauss_logpdf_residuals(residuals: np.ndarray, cov: np.ndarray, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Row-wise log N(r; 0, cov) for residuals of shape (k, d)."""
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    cov = _square(cov, "cov")
    d = cov.shape[0]
    if R.shape[1] != d:
        raise DimensionError(f"residual dimension {R.shape[1]} != covariance dimension {d}")
    L, _ = chol_psd(cov, jitter, site="gauss_logpdf")
    W = solve_triangular(L, R.T, lower=True)
    maha = np.sum(W * W, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (d * _LOG_2PI + logdet + maha)


def gauss_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray, jitter: float = DEFAULT_JITTER) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if x.shape != mean.shape:
        raise DimensionError(f"x shape {x.shape} != mean shape {mean.shape}")
    return float(gauss_logpdf_residuals((x - mean)[None, :], np.atleast_2d(cov), jitter)[0])


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------
def derive_stream_id(*parts: Union[int, str]) -> int:
    """Stable 64-bit id: blake2b (8-byte digest) of the '|'-joined parts, little-endian."""
    text = "|".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


@dataclass
class RngStream:
    """Philox4x64 stream keyed by (seed, stream_id).

    Same key => same sequence; different stream_ids => independent sequences, so work
    can be split across workers without changing any draw.
    """

    seed: int
    stream_id: int
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.seed = int(self.seed) & _U64
        self.stream_id = int(self.stream_id) & _U64
        self._generator = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    @classmethod
    def for_purpose(cls, seed: int, *parts: Union[int, str]) -> "RngStream":
        return cls(seed, derive_stream_id(*parts))

    @property
    def counter(self) -> Sequence[int]:
        return tuple(int(c) for c in self._generator.bit_generator.state["state"]["counter"])

    def normal(self, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def uniform(self, size=None):
        return self._generator.random(size)


def draw_normal(stream: RngStream, n: int) -> np.ndarray:
    if n < 1:
        raise ParameterError(f"draw_normal needs n >= 1, got {n}")
    return stream.normal(n)
