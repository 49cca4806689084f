# igsf/filters/baselines.py
"""
Comparison filters:
- enkf_step:  stochastic EnKF, every particle updated against a perturbed observation
- sir_step:   bootstrap particle filter, systematic resampling when ESS < N/2
- asir_step:  auxiliary particle filter, first stage scored at the noise-free propagation
- gspf_step:  Gaussian sum particle filter, per-mixand importance weighting and Gaussian condensation

Each step is pure given its streams; `run_*` drive a step over an observation sequence and
return a FilterRun like the bank does.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from igsf import monitoring
from igsf.errors import DegenerateWeightsError, NumericalError, ParameterError
from igsf.filters.bank import (
    FilterBank, FilterRun, Mixand, StreamFactory, bank_estimate, gain_zeroth, initial_bank,
    measurement_anomaly_pred, prediction_anomaly, sample_mean,
)
from igsf.filters.resampling import effective_sample_size, normalize_log_weights, systematic_resample
from igsf.models import MeasurementModel, measure, propagate_mean, propagate_subensemble
from igsf.numerics import DEFAULT_JITTER, RngStream, chol_psd, gauss_logpdf_residuals

logger = monitoring.logger

RESAMPLE_FRACTION = 0.5


@dataclass
class WeightedEnsemble:
    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.particles.shape[0],):
            raise ParameterError("one weight per particle is required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ParameterError("particle weights must lie on the simplex")

    @classmethod
    def uniform(cls, particles: np.ndarray) -> "WeightedEnsemble":
        n = np.shape(particles)[0]
        return cls(particles, np.full(n, 1.0 / n))

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def _log_likelihoods(mm: MeasurementModel, Z: np.ndarray, X: np.ndarray, t: float, jitter: float) -> np.ndarray:
    return gauss_logpdf_residuals(mm.innovation(Z, measure(mm, X, t)), mm.noise_cov, jitter)


# ---------------------------------------------------------------------------
# EnKF
# ---------------------------------------------------------------------------
def enkf_update(predicted: np.ndarray, Z: np.ndarray, perturbations: np.ndarray,
                mm: MeasurementModel, t: float, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """x_(u) + K (Z + v_(u) − H(x_(u))) with K from the ensemble anomalies (γ := N)."""
    Xp = np.asarray(predicted, dtype=float)
    S = prediction_anomaly(Xp, sample_mean(Xp))
    Sz = measurement_anomaly_pred(Xp, mm, t)
    K = gain_zeroth(S, Sz, mm.noise_cov, jitter)
    innov = mm.innovation(Z, measure(mm, Xp, t)) + perturbations
    return Xp + innov @ K.T


def enkf_step(ensemble: np.ndarray, model, mm: MeasurementModel, Z: np.ndarray, stream: RngStream,
              t_i: float, t_next: float, step_index: Optional[int] = None,
              perturb_stream: Optional[RngStream] = None, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    X = np.asarray(ensemble, dtype=float)
    if X.shape[0] < 2:
        raise ParameterError(f"EnKF needs N >= 2 members, got {X.shape[0]}")
    Xp = propagate_subensemble(model, X, t_i, t_next, stream, step_index)
    L, _ = chol_psd(mm.noise_cov, jitter, site="enkf_perturbation")
    v = (perturb_stream or stream).normal((X.shape[0], mm.obs_dim)) @ L.T
    return enkf_update(Xp, np.atleast_1d(Z), v, mm, t_next, jitter)


# ---------------------------------------------------------------------------
# SIR / ASIR
# ---------------------------------------------------------------------------
def sir_step(we: WeightedEnsemble, model, mm: MeasurementModel, Z: np.ndarray, stream: RngStream,
             t_i: float, t_next: float, step_index: Optional[int] = None,
             resample_stream: Optional[RngStream] = None, jitter: float = DEFAULT_JITTER,
             label: str = "sir") -> WeightedEnsemble:
    Xp = propagate_subensemble(model, we.particles, t_i, t_next, stream, step_index)
    with np.errstate(divide="ignore"):
        log_w = np.log(we.weights) + _log_likelihoods(mm, np.atleast_1d(Z), Xp, t_next, jitter)
    w, _ = normalize_log_weights(log_w)

    n = w.size
    if effective_sample_size(w) < RESAMPLE_FRACTION * n:
        idx = systematic_resample(w, float((resample_stream or stream).uniform()))
        monitoring.inc_resample(label)
        logger.debug("Resampled particles", extra={"filter": label, "n": n})
        return WeightedEnsemble.uniform(Xp[idx])
    return WeightedEnsemble(Xp, w)


def asir_step(we: WeightedEnsemble, model, mm: MeasurementModel, Z: np.ndarray, stream: RngStream,
              t_i: float, t_next: float, step_index: Optional[int] = None,
              resample_stream: Optional[RngStream] = None, jitter: float = DEFAULT_JITTER,
              label: str = "asir") -> WeightedEnsemble:
    """Two-stage auxiliary particle filter.

    First stage: λ_(u) ∝ w_(u) p(Z | μ_(u)) with μ_(u) the noise-free propagation of x_(u);
    parents are drawn from λ, their children propagated with noise and weighted by
    p(Z | x) / p(Z | μ_parent).
    """
    Z = np.atleast_1d(Z)
    mu = propagate_mean(model, we.particles, t_i, t_next, step_index)
    log_first = _log_likelihoods(mm, Z, mu, t_next, jitter)
    with np.errstate(divide="ignore"):
        lam, _ = normalize_log_weights(np.log(we.weights) + log_first)

    idx = systematic_resample(lam, float((resample_stream or stream).uniform()))
    monitoring.inc_resample(label)
    Xp = propagate_subensemble(model, we.particles[idx], t_i, t_next, stream, step_index)
    w, _ = normalize_log_weights(_log_likelihoods(mm, Z, Xp, t_next, jitter) - log_first[idx])
    return WeightedEnsemble(Xp, w)


# ---------------------------------------------------------------------------
# GSPF
# ---------------------------------------------------------------------------
def _condense(Xp: np.ndarray, log_lik: np.ndarray):
    """Importance-weighted mean/cov of one mixand and its log average likelihood."""
    gamma = Xp.shape[0]
    if not np.any(np.isfinite(log_lik)):
        return Xp.mean(axis=0), np.cov(Xp, rowvar=False).reshape(Xp.shape[1], Xp.shape[1]), -np.inf
    w, log_sum = normalize_log_weights(log_lik)
    mean = w @ Xp
    D = Xp - mean
    cov = (w[:, None] * D).T @ D
    return mean, cov, log_sum - np.log(gamma)


def gspf_step(mixture: FilterBank, model, mm: MeasurementModel, Z: np.ndarray,
              streams: Sequence[RngStream], t_i: float, t_next: float,
              jitter: float = DEFAULT_JITTER, label: str = "gspf") -> FilterBank:
    """Per mixand: propagate, importance-weight, condense to N(m, P), redraw γ particles.

    Mixand weights are multiplied by each mixand's average likelihood and renormalized.
    """
    if len(streams) != mixture.n_mixands:
        raise ParameterError("one random stream per mixand is required")
    Z = np.atleast_1d(Z)
    step = mixture.step + 1
    gamma, J = mixture.gamma, mixture.state_dim

    mixands, log_avg = [], np.empty(mixture.n_mixands)
    for eta, (mixand, stream) in enumerate(zip(mixture.mixands, streams)):
        try:
            Xp = propagate_subensemble(model, mixand.particles, t_i, t_next, stream, mixture.step)
            mean, cov, log_avg[eta] = _condense(Xp, _log_likelihoods(mm, Z, Xp, t_next, jitter))
            L, _ = chol_psd(cov, jitter, site="gspf_condense")
        except NumericalError as e:
            raise e.at(step=step, mixand=eta)
        mixands.append(Mixand(mean + stream.normal((gamma, J)) @ L.T, mixand.weight))

    with np.errstate(divide="ignore"):
        log_w = np.log(mixture.weights) + log_avg
    try:
        w, _ = normalize_log_weights(log_w)
    except DegenerateWeightsError:
        monitoring.inc_degenerate_weights(label)
        logger.warning("Degenerate mixand weights, resetting to uniform", extra={"filter": label, "step": step})
        w = np.full(mixture.n_mixands, 1.0 / mixture.n_mixands)
    for m, wi in zip(mixands, w):
        m.weight = float(wi)
    return FilterBank(mixands, step)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------
def _prepare(observations, times):
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    return obs, np.asarray(times, dtype=float)


def _draw_prior(prior_mean, prior_cov, n: int, stream: RngStream, jitter: float) -> np.ndarray:
    m0 = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    L0, _ = chol_psd(np.atleast_2d(prior_cov), jitter, site="prior")
    return m0 + stream.normal((n, m0.size)) @ L0.T


def _single(label: str, estimates: np.ndarray) -> FilterRun:
    T = estimates.shape[0]
    return FilterRun(label, estimates, np.ones((T, 1)), estimates[:, None, :].copy())


def run_enkf(model, mm: MeasurementModel, observations, times, prior_mean, prior_cov, n_particles: int,
             stream_for: StreamFactory, jitter: float = DEFAULT_JITTER, label: str = "enkf") -> FilterRun:
    obs, times = _prepare(observations, times)
    X = _draw_prior(prior_mean, prior_cov, n_particles, stream_for(0, "init"), jitter)
    stream, perturb = stream_for(0, "propagate"), stream_for(0, "perturb")
    estimates = np.empty((obs.shape[0], X.shape[1]))
    for i in range(obs.shape[0]):
        try:
            X = enkf_step(X, model, mm, obs[i], stream, times[i], times[i + 1], i, perturb, jitter)
        except NumericalError as e:
            raise e.at(step=i + 1)
        estimates[i] = X.mean(axis=0)
        monitoring.inc_filter_step(label)
    return _single(label, estimates)


def run_particle_filter(kind: str, model, mm: MeasurementModel, observations, times, prior_mean, prior_cov,
                        n_particles: int, stream_for: StreamFactory, jitter: float = DEFAULT_JITTER,
                        label: Optional[str] = None) -> FilterRun:
    """Bootstrap ('sir') or auxiliary ('asir') particle filter over the whole sequence."""
    steps = {"sir": sir_step, "asir": asir_step}
    if kind not in steps:
        raise ParameterError(f"unknown particle filter kind '{kind}'")
    label = label or kind
    obs, times = _prepare(observations, times)
    we = WeightedEnsemble.uniform(_draw_prior(prior_mean, prior_cov, n_particles, stream_for(0, "init"), jitter))
    stream, resample = stream_for(0, "propagate"), stream_for(0, "resample")
    estimates = np.empty((obs.shape[0], we.particles.shape[1]))
    for i in range(obs.shape[0]):
        try:
            we = steps[kind](we, model, mm, obs[i], stream, times[i], times[i + 1], i, resample, jitter, label)
        except NumericalError as e:
            raise e.at(step=i + 1)
        estimates[i] = we.mean
        monitoring.inc_filter_step(label)
    return _single(label, estimates)


def run_gspf(model, mm: MeasurementModel, observations, times, prior_mean, prior_cov, n_particles: int,
             n_mixands: int, stream_for: StreamFactory, jitter: float = DEFAULT_JITTER,
             init_spread: float = 0.0, label: str = "gspf") -> FilterRun:
    obs, times = _prepare(observations, times)
    mixture = initial_bank(prior_mean, prior_cov, n_particles, n_mixands,
                           lambda eta: stream_for(eta, "init"), init_spread, jitter)
    streams = [stream_for(eta, "propagate") for eta in range(n_mixands)]
    T, J = obs.shape[0], mixture.state_dim
    estimates, weights, means = np.empty((T, J)), np.empty((T, n_mixands)), np.empty((T, n_mixands, J))
    for i in range(T):
        mixture = gspf_step(mixture, model, mm, obs[i], streams, times[i], times[i + 1], jitter, label)
        estimates[i] = bank_estimate(mixture)
        weights[i] = mixture.weights
        means[i] = [sample_mean(m.particles) for m in mixture.mixands]
        monitoring.inc_filter_step(label)
    return FilterRun(label, estimates, weights, means, mixture)
