# igsf/filters/kalman.py
"""Exact Kalman filter for linear-Gaussian models (Joseph-form covariance update)."""

from dataclasses import dataclass

import numpy as np

from igsf.errors import DimensionError
from igsf.numerics import DEFAULT_JITTER, solve_psd


@dataclass
class KalmanResult:
    means: np.ndarray
    covariances: np.ndarray

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.covariances, axis1=1, axis2=2))


def kalman_filter(F, Q, H, R, m0, P0, observations, jitter: float = DEFAULT_JITTER) -> KalmanResult:
    """Filter x_{i+1} = F x_i + w, z_{i+1} = H x_{i+1} + v from N(m0, P0) at step 0."""
    F, Q, H, R = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (F, Q, H, R))
    m = np.atleast_1d(np.asarray(m0, dtype=float)).copy()
    P = np.atleast_2d(np.asarray(P0, dtype=float)).copy()
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    n, d = F.shape[0], H.shape[0]
    if F.shape != (n, n) or Q.shape != (n, n) or H.shape != (d, n) or R.shape != (d, d) or m.shape != (n,):
        raise DimensionError("inconsistent Kalman model dimensions",
                             {"F": F.shape, "Q": Q.shape, "H": H.shape, "R": R.shape, "m0": m.shape})

    T = obs.shape[0]
    means = np.empty((T, n))
    covs = np.empty((T, n, n))
    I = np.eye(n)
    for i in range(T):
        m = F @ m
        P = F @ P @ F.T + Q
        S = H @ P @ H.T + R
        K = solve_psd(S, H @ P, jitter, site="kalman").T
        m = m + K @ (obs[i] - H @ m)
        A = I - K @ H
        P = A @ P @ A.T + K @ R @ K.T
        means[i], covs[i] = m, 0.5 * (P + P.T)
    return KalmanResult(means, covs)
