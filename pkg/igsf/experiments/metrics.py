# igsf/experiments/metrics.py
"""Error statistics across Monte Carlo runs."""

from typing import Sequence

import numpy as np

from igsf.errors import ParameterError


def _aligned(estimates, truths, components: Sequence[int]):
    E = np.asarray(estimates, dtype=float)
    X = np.asarray(truths, dtype=float)
    if E.shape != X.shape or E.ndim != 3:
        raise ParameterError("estimates and truths must both be runs×T×J",
                             {"estimates": list(E.shape), "truths": list(X.shape)})
    if E.shape[0] < 1:
        raise ParameterError("at least one run is required")
    idx = list(components)
    if any(j < 0 or j >= E.shape[2] for j in idx):
        raise ParameterError("component index out of range", {"components": idx, "J": E.shape[2]})
    return E[:, :, idx], X[:, :, idx]


def rmse_series(estimates, truths, components: Sequence[int]) -> np.ndarray:
    """T×|components|: sqrt of the run-averaged squared error at every step."""
    E, X = _aligned(estimates, truths, components)
    return np.sqrt(np.mean((E - X) ** 2, axis=0))


def time_averaged_error(estimates, truths, components: Sequence[int]) -> np.ndarray:
    """runs×|components|: per-run mean over steps of |estimate − truth|."""
    E, X = _aligned(estimates, truths, components)
    return np.mean(np.abs(E - X), axis=1)


def win_rate(errors_a: np.ndarray, errors_b: np.ndarray) -> np.ndarray:
    """Per component, the fraction of paired runs where A's error is lower; ties count one half."""
    a, b = np.asarray(errors_a, dtype=float), np.asarray(errors_b, dtype=float)
    if a.shape != b.shape:
        raise ParameterError("paired error arrays must have the same shape")
    return np.mean((a < b) + 0.5 * (a == b), axis=0)
