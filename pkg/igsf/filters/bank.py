# igsf/filters/bank.py
"""
Iterated gain-based stochastic filter bank.

One assimilation step per mixand η (γ particles each):
  1. propagate the sub-ensemble                    x̃_(u)
  2. prediction / measurement anomalies            S, Sz
  3. zeroth gain and unperturbed update            K⁰, x̂⁰
  4. for l = 1..Γ: x̂^l = x̃ + (1+α^l) K^{l−1} (Z − H(x̂^{l−1}))
     (K^0 := K⁰; later gains from the anomalies of x̂^{l−1} about x̃ and Z)
then the mixand weights are updated from the final iterates and normalized.

With N_G = 1 the bank is the single iterated filter; with Γ = 0 it is the zeroth-update filter.
"""

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from igsf import monitoring
from igsf.errors import (
    DegenerateWeightsError, DimensionError, IgsfError, NumericalError, ParameterError, E_INTERNAL,
)
from igsf.filters.adp import AdpSchedule, adp_value
from igsf.models import MeasurementModel, measure, propagate_subensemble
from igsf.numerics import DEFAULT_JITTER, RngStream, chol_psd, gauss_logpdf_residuals, solve_psd

logger = monitoring.logger

WEIGHT_SUM_TOL = 1e-12
WEIGHT_FLOOR = 1e-12
AUTO_EPSILON_SCALE = 1e-8

EPSILON_AUTO = "auto"
EPSILON_STRICT = "strict"
PREDICTION_PARTICLE = "particle"
PREDICTION_MEAN = "mean"

StreamFactory = Callable[[int, str], RngStream]


@dataclass
class Mixand:
    particles: np.ndarray
    weight: float


@dataclass
class FilterBank:
    mixands: List[Mixand]
    step: int = 0

    @property
    def gamma(self) -> int:
        return int(self.mixands[0].particles.shape[0])

    @property
    def n_mixands(self) -> int:
        return len(self.mixands)

    @property
    def state_dim(self) -> int:
        return int(self.mixands[0].particles.shape[1])

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.mixands], dtype=float)

    def validate(self) -> "FilterBank":
        if not self.mixands:
            raise ParameterError("filter bank needs at least one mixand")
        shapes = {m.particles.shape for m in self.mixands}
        if len(shapes) != 1:
            raise DimensionError("all mixands must share γ and J", {"shapes": sorted(map(list, shapes))})
        if self.gamma < 2:
            raise ParameterError(f"each mixand needs γ >= 2 particles, got {self.gamma}")
        w = self.weights
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ParameterError("mixand weights must lie on the simplex", {"weights": w.tolist()})
        return self


@dataclass(frozen=True)
class BankOptions:
    jitter: float = DEFAULT_JITTER
    epsilon: Union[str, float] = EPSILON_AUTO
    init_spread: float = 0.0
    prediction_term: str = PREDICTION_PARTICLE

    def __post_init__(self):
        if isinstance(self.epsilon, str):
            if self.epsilon not in (EPSILON_AUTO, EPSILON_STRICT):
                raise ParameterError(f"unknown epsilon mode '{self.epsilon}'")
        elif self.epsilon < 0:
            raise ParameterError("epsilon must be >= 0")
        if self.prediction_term not in (PREDICTION_PARTICLE, PREDICTION_MEAN):
            raise ParameterError(f"unknown prediction term '{self.prediction_term}'")
        if self.init_spread < 0:
            raise ParameterError("init_spread must be >= 0")


@dataclass
class FilterRun:
    label: str
    estimates: np.ndarray
    weights: np.ndarray
    mixand_means: np.ndarray
    final_bank: Optional[FilterBank] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------
def sample_mean(particles: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(particles, dtype=float))
    if X.shape[0] < 1:
        raise ParameterError("sample mean of an empty ensemble")
    return X.mean(axis=0)


def _scale(gamma: int) -> float:
    if gamma < 2:
        raise ParameterError(f"anomaly matrices need γ >= 2, got {gamma}")
    return 1.0 / math.sqrt(gamma - 1)


def prediction_anomaly(particles: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """S (J×γ): column u is (x_(u) − mean)/√(γ−1)."""
    X = np.asarray(particles, dtype=float)
    return ((X - mean) * _scale(X.shape[0])).T


def measurement_anomaly_pred(particles: np.ndarray, mm: MeasurementModel, t: float) -> np.ndarray:
    """Sz (d×γ): mapped particles about their own sample mean."""
    X = np.asarray(particles, dtype=float)
    c = _scale(X.shape[0])
    HX = measure(mm, X, t)
    return ((HX - HX.mean(axis=0)) * c).T


def anomalies_iter(updated: np.ndarray, predicted: np.ndarray, Z: np.ndarray,
                   mm: MeasurementModel, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """(Ŝ, Ŝz): iterate minus prediction, and H(iterate) minus the observation itself."""
    Xh = np.asarray(updated, dtype=float)
    Xp = np.asarray(predicted, dtype=float)
    if Xh.shape != Xp.shape:
        raise DimensionError(f"updated {Xh.shape} and predicted {Xp.shape} ensembles differ")
    c = _scale(Xh.shape[0])
    S_hat = ((Xh - Xp) * c).T
    Sz_hat = (-mm.innovation(Z, measure(mm, Xh, t)) * c).T
    return S_hat, Sz_hat


# ---------------------------------------------------------------------------
# Gains and updates
# ---------------------------------------------------------------------------
def _gain(S: np.ndarray, Sz: np.ndarray, C: np.ndarray, jitter: float, site: str) -> np.ndarray:
    # K C = S Szᵀ with C symmetric  =>  C Kᵀ = Sz Sᵀ
    return solve_psd(C, Sz @ S.T, jitter, site=site).T


def gain_zeroth(S: np.ndarray, Sz: np.ndarray, noise_cov: np.ndarray, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """K⁰ = S Szᵀ (Sz Szᵀ + Σ_Z)⁻¹."""
    S, Sz = np.asarray(S, dtype=float), np.asarray(Sz, dtype=float)
    if S.shape[1] != Sz.shape[1] or np.shape(noise_cov) != (Sz.shape[0], Sz.shape[0]):
        raise DimensionError("gain_zeroth shape mismatch",
                             {"S": S.shape, "Sz": Sz.shape, "noise_cov": np.shape(noise_cov)})
    return _gain(S, Sz, Sz @ Sz.T + noise_cov, jitter, "gain_zeroth")


def resolve_epsilon(mode: Union[str, float], Sz_hat: np.ndarray) -> float:
    if mode == EPSILON_STRICT:
        return 0.0
    if mode == EPSILON_AUTO:
        d = Sz_hat.shape[0]
        return AUTO_EPSILON_SCALE * float(np.sum(Sz_hat * Sz_hat)) / d
    return float(mode)


def gain_iter(S_hat: np.ndarray, Sz_hat: np.ndarray, epsilon: Union[float, np.ndarray],
              jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """K = Ŝ Ŝzᵀ (Ŝz Ŝzᵀ + ε)⁻¹; ε is a scalar (times I) or a d×d matrix."""
    S_hat, Sz_hat = np.asarray(S_hat, dtype=float), np.asarray(Sz_hat, dtype=float)
    if S_hat.shape[1] != Sz_hat.shape[1]:
        raise DimensionError("gain_iter shape mismatch", {"S_hat": S_hat.shape, "Sz_hat": Sz_hat.shape})
    d = Sz_hat.shape[0]
    eps = np.asarray(epsilon, dtype=float)
    if eps.ndim == 0:
        if eps < 0:
            raise ParameterError("epsilon must be >= 0")
        eps = float(eps) * np.eye(d)
    return _gain(S_hat, Sz_hat, Sz_hat @ Sz_hat.T + eps, jitter, "gain_iter")


def update_zeroth(predicted: np.ndarray, Z: np.ndarray, K0: np.ndarray,
                  mm: MeasurementModel, t: float) -> np.ndarray:
    """x̂⁰_(u) = x̃_(u) + K⁰ (Z − H(x̃_(u))); no observation perturbation."""
    Xp = np.asarray(predicted, dtype=float)
    innov = mm.innovation(Z, measure(mm, Xp, t))
    return Xp + innov @ K0.T


def update_iter(predicted: np.ndarray, prev_updated: np.ndarray, Z: np.ndarray, K: np.ndarray,
                alpha: float, mm: MeasurementModel, t: float,
                prediction: Optional[np.ndarray] = None) -> np.ndarray:
    """x̂^l_(u) = x̃_(u) + (1+α) K (Z − H(x̂^{l−1}_(u))).

    `prediction` replaces the x̃_(u) term when given (a state vector broadcast to every particle).
    """
    if alpha < 0:
        raise ParameterError(f"ADP value must be >= 0, got {alpha}")
    Xp = np.asarray(predicted, dtype=float)
    base = Xp if prediction is None else np.broadcast_to(prediction, Xp.shape)
    innov = mm.innovation(Z, measure(mm, prev_updated, t))
    return base + (1.0 + alpha) * (innov @ K.T)


# ---------------------------------------------------------------------------
# Weights and estimate
# ---------------------------------------------------------------------------
def mixand_log_likelihoods(Z: np.ndarray, summaries: Sequence[Tuple[np.ndarray, np.ndarray]],
                           noise_cov: np.ndarray, residual=None, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    out = np.empty(len(summaries))
    for eta, (mean_h, Sz_hat) in enumerate(summaries):
        r = (Z - mean_h) if residual is None else residual(Z, mean_h)
        cov = Sz_hat @ Sz_hat.T + noise_cov
        out[eta] = gauss_logpdf_residuals(r[None, :], cov, jitter)[0]
    return out


def weight_update(bank: FilterBank, Z: np.ndarray, summaries: Sequence[Tuple[np.ndarray, np.ndarray]],
                  noise_cov: np.ndarray, residual=None, jitter: float = DEFAULT_JITTER,
                  label: str = "igsf-bank") -> FilterBank:
    """New bank whose weights are w·N(Z; ⟨H(x̂^Γ)⟩, Ŝz Ŝzᵀ + Σ_Z), normalized.

    Likelihoods are first normalized across mixands, then the products are normalized again.
    When every likelihood underflows the weights are reset to uniform.
    """
    if len(summaries) != bank.n_mixands:
        raise DimensionError("one (mean, Ŝz) summary per mixand is required")
    log_lik = mixand_log_likelihoods(Z, summaries, noise_cov, residual, jitter)
    with np.errstate(divide="ignore"):
        log_w = np.log(bank.weights)

    try:
        if np.any(np.isnan(log_lik)) or not np.any(np.isfinite(log_lik + log_w)):
            raise DegenerateWeightsError("all mixand likelihoods underflowed", {"log_likelihoods": log_lik.tolist()})
        log_w_tilde = log_w + (log_lik - logsumexp(log_lik))
        w = np.exp(log_w_tilde - logsumexp(log_w_tilde))
        w = w / w.sum()
    except DegenerateWeightsError as e:
        monitoring.inc_degenerate_weights(label)
        logger.warning("Degenerate mixand weights, resetting to uniform",
                       extra={"filter": label, "step": bank.step, **e.details})
        w = np.full(bank.n_mixands, 1.0 / bank.n_mixands)

    if bank.n_mixands > 1 and np.any(w < WEIGHT_FLOOR):
        logger.warning("Mixand weight below floor",
                       extra={"filter": label, "step": bank.step, "min_weight": float(w.min())})

    mixands = [Mixand(m.particles, float(wi)) for m, wi in zip(bank.mixands, w)]
    return FilterBank(mixands, bank.step)


def bank_estimate(bank: FilterBank) -> np.ndarray:
    """Σ_η w^(η) · sample_mean(mixand η)."""
    return np.sum([m.weight * sample_mean(m.particles) for m in bank.mixands], axis=0)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------
def _checksum(X: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(X).tobytes(), digest_size=16).hexdigest()


def assimilate_mixand(predicted: np.ndarray, Z: np.ndarray, mm: MeasurementModel, t: float,
                      schedule: AdpSchedule, options: BankOptions = BankOptions()
                      ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zeroth plus Γ iterated updates of one predicted sub-ensemble.

    Returns (x̂^Γ, ⟨H(x̂^Γ)⟩, Ŝz^Γ). The predicted array is frozen for the duration.
    """
    Xp = np.asarray(predicted, dtype=float)
    Xp.setflags(write=False)
    before = _checksum(Xp)

    S = prediction_anomaly(Xp, sample_mean(Xp))
    Sz = measurement_anomaly_pred(Xp, mm, t)
    K0 = gain_zeroth(S, Sz, mm.noise_cov, options.jitter)
    X_hat = update_zeroth(Xp, Z, K0, mm, t)
    Sz_hat = Sz

    prediction = sample_mean(Xp) if options.prediction_term == PREDICTION_MEAN else None
    for l in range(1, schedule.iterations + 1):
        if l == 1:
            K = K0
        else:
            S_hat, Sz_hat = anomalies_iter(X_hat, Xp, Z, mm, t)
            K = gain_iter(S_hat, Sz_hat, resolve_epsilon(options.epsilon, Sz_hat), options.jitter)
        X_hat = update_iter(Xp, X_hat, Z, K, adp_value(schedule, l), mm, t, prediction)

    if schedule.iterations >= 1:
        _, Sz_hat = anomalies_iter(X_hat, Xp, Z, mm, t)

    if _checksum(Xp) != before:
        raise IgsfError("predicted ensemble changed during the iterated updates", code=E_INTERNAL)
    return X_hat, measure(mm, X_hat, t).mean(axis=0), Sz_hat


def igsf_bank_step(bank: FilterBank, model, mm: MeasurementModel, Z: np.ndarray,
                   schedule: AdpSchedule, streams: Sequence[RngStream],
                   t_i: float, t_next: float, options: BankOptions = BankOptions(),
                   label: str = "igsf-bank") -> FilterBank:
    """One time step of the bank: per-mixand propagate + iterate, then the weight update."""
    if len(streams) != bank.n_mixands:
        raise ParameterError("one random stream per mixand is required")
    Z = np.atleast_1d(np.asarray(Z, dtype=float))
    step = bank.step + 1

    mixands, summaries = [], []
    for eta, (mixand, stream) in enumerate(zip(bank.mixands, streams)):
        try:
            Xp = propagate_subensemble(model, mixand.particles, t_i, t_next, stream, step_index=bank.step)
            X_hat, mean_h, Sz_hat = assimilate_mixand(Xp, Z, mm, t_next, schedule, options)
        except NumericalError as e:
            raise e.at(step=step, mixand=eta)
        mixands.append(Mixand(X_hat, mixand.weight))
        summaries.append((mean_h, Sz_hat))

    updated = weight_update(FilterBank(mixands, step), Z, summaries, mm.noise_cov,
                            mm.residual, options.jitter, label)
    monitoring.inc_filter_step(label)
    return updated


def initial_bank(prior_mean: np.ndarray, prior_cov: np.ndarray, n_particles: int, n_mixands: int,
                 stream_for: Callable[[int], RngStream], init_spread: float = 0.0,
                 jitter: float = DEFAULT_JITTER) -> FilterBank:
    """Equal-weight bank; mixand η draws γ = N/N_G particles from N(m^(η), P0).

    m^(η) equals the prior mean unless init_spread k > 0, in which case the means are spread
    evenly between −kσ and +kσ about it (σ the prior standard deviations).
    """
    if n_mixands < 1 or n_particles % n_mixands:
        raise ParameterError("N must be divisible by N_G", {"N": n_particles, "N_G": n_mixands})
    gamma = n_particles // n_mixands
    m0 = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    P0 = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    L0, _ = chol_psd(P0, jitter, site="prior")
    sigma = np.sqrt(np.diag(P0))

    mixands = []
    for eta in range(n_mixands):
        offset = 0.0 if n_mixands == 1 else init_spread * (2.0 * eta / (n_mixands - 1) - 1.0)
        z = stream_for(eta).normal((gamma, m0.size))
        mixands.append(Mixand(m0 + offset * sigma + z @ L0.T, 1.0 / n_mixands))
    return FilterBank(mixands, 0).validate()


def run_filter(model, mm: MeasurementModel, observations: np.ndarray, times: np.ndarray,
               init: Union[FilterBank, Callable[[StreamFactory], FilterBank]],
               schedule: AdpSchedule, stream_for: StreamFactory,
               options: BankOptions = BankOptions(), label: str = "igsf-bank") -> FilterRun:
    """Assimilate observations Z_1..Z_T at times[1..T], starting from the bank at times[0].

    stream_for(η, purpose) supplies the random stream of mixand η; the same factory always
    yields the same trajectories.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    times = np.asarray(times, dtype=float)

    bank = init if isinstance(init, FilterBank) else init(stream_for)
    bank.validate()
    T, J, NG = obs.shape[0], bank.state_dim, bank.n_mixands
    if T and times.shape[0] != T + 1:
        raise DimensionError(f"need {T + 1} time points for {T} observations, got {times.shape[0]}")

    estimates = np.empty((T, J))
    weights = np.empty((T, NG))
    means = np.empty((T, NG, J))
    streams = [stream_for(eta, "propagate") for eta in range(NG)]

    for i in range(T):
        bank = igsf_bank_step(bank, model, mm, obs[i], schedule, streams, times[i], times[i + 1], options, label)
        estimates[i] = bank_estimate(bank)
        weights[i] = bank.weights
        means[i] = [sample_mean(m.particles) for m in bank.mixands]

    logger.debug("Filter run complete", extra={"filter": label, "steps": T, "mixands": NG})
    return FilterRun(label, estimates, weights, means, bank)
