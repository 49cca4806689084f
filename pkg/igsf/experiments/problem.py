# igsf/experiments/problem.py
"""Containers shared by the experiment generators and the orchestrator."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from igsf.models import ContinuousModel, DiscreteModel, MeasurementModel


@dataclass(frozen=True)
class LinearGaussian:
    """x_{i+1} = F x_i + w, z = H x + v, used by the exact Kalman filter."""

    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray


@dataclass
class Problem:
    """One Monte Carlo run: the filter's view of the system plus the synthetic truth."""

    name: str
    model: Union[ContinuousModel, DiscreteModel]
    mm: MeasurementModel
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    times: np.ndarray
    truth: np.ndarray
    observations: np.ndarray
    component_names: List[str]
    rmse_components: List[int]
    linear: Optional[LinearGaussian] = None
    truth_stream_id: int = 0

    @property
    def steps(self) -> int:
        return int(self.observations.shape[0])


@dataclass
class RunArtifacts:
    """Aligned truth, observations and per-filter estimates for every run of an experiment."""

    experiment: str
    times: np.ndarray
    component_names: List[str]
    rmse_components: List[int]
    truths: np.ndarray
    observations: np.ndarray
    estimates: Dict[str, np.ndarray] = field(default_factory=dict)
    rmse: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def runs(self) -> int:
        return int(self.truths.shape[0])

    @property
    def steps(self) -> int:
        return int(self.truths.shape[1])

    def rmse_names(self) -> Sequence[str]:
        return [self.component_names[j] for j in self.rmse_components]
