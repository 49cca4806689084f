# igsf/filters/resampling.py
"""Weight normalization and systematic resampling for the particle baselines."""

from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from igsf.errors import DegenerateWeightsError, ParameterError


def normalize_log_weights(log_w: np.ndarray) -> Tuple[np.ndarray, float]:
    """Return (w, log Σ exp(log_w)) with w on the simplex.

    Raises DegenerateWeightsError when every entry is -inf or any is NaN.
    """
    log_w = np.asarray(log_w, dtype=float)
    if np.any(np.isnan(log_w)) or not np.any(np.isfinite(log_w)):
        raise DegenerateWeightsError("all importance weights underflowed", {"n": int(log_w.size)})
    log_norm = float(logsumexp(log_w))
    w = np.exp(log_w - log_norm)
    return w / w.sum(), log_norm


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    """Indices drawn with a single uniform offset u ∈ [0, 1): positions (u + k) / N."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n == 0:
        raise ParameterError("cannot resample an empty ensemble")
    if not 0.0 <= u < 1.0:
        raise ParameterError(f"systematic offset must lie in [0, 1), got {u}")
    cumsum = np.cumsum(w)
    cumsum[-1] = 1.0
    positions = (u + np.arange(n)) / n
    return np.minimum(np.searchsorted(cumsum, positions, side="right"), n - 1)
