# tests/test_filter_bank.py
import math

import numpy as np
import pytest

from igsf import monitoring
from igsf.errors import DimensionError, NumericalError, ParameterError
from igsf.experiments.growth import GrowthModelParams, gen_growth, growth_measurement, growth_model
from igsf.experiments.linear import LinearModelSpec, gen_linear, linear_measurement, linear_model
from igsf.filters.adp import AdpSchedule, EXP_DECAY
from igsf.filters.bank import (
    BankOptions,
    FilterBank,
    Mixand,
    anomalies_iter,
    assimilate_mixand,
    bank_estimate,
    gain_iter,
    gain_zeroth,
    igsf_bank_step,
    initial_bank,
    measurement_anomaly_pred,
    mixand_log_likelihoods,
    prediction_anomaly,
    resolve_epsilon,
    run_filter,
    sample_mean,
    update_iter,
    update_zeroth,
    weight_update,
)
from igsf.filters.kalman import kalman_filter
from igsf.models import MeasurementModel, propagate_subensemble
from igsf.numerics import RngStream


def identity_mm(d: int = 1, var: float = 1.0) -> MeasurementModel:
    return MeasurementModel(obs_dim=d, function=lambda X, t: X[:, :d], noise_cov=var * np.eye(d))


def square_mm(var: float = 0.01) -> MeasurementModel:
    return MeasurementModel(obs_dim=1, function=lambda X, t: X * X, noise_cov=np.array([[var]]))


def factory(seed: int, run: int = 0):
    return lambda eta, purpose: RngStream.for_purpose(seed, run, eta, f"igsf:{purpose}")


def bank_init(prior_mean, prior_cov, n, n_g, spread=0.0):
    return lambda sf: initial_bank(prior_mean, prior_cov, n, n_g, lambda eta: sf(eta, "init"), spread)


# ---------------------------------------------------------------------------
# statistics and anomalies
# ---------------------------------------------------------------------------
def test_sample_mean_single_particle():
    assert np.array_equal(sample_mean(np.array([[1.5, -2.0]])), [1.5, -2.0])


def test_sample_mean_symmetric_pair():
    v = np.array([0.3, -7.0, 2.0])
    assert np.array_equal(sample_mean(np.stack([v, -v])), np.zeros(3))


def test_sample_mean_matches_accumulation():
    X = RngStream(4, 4).normal((5, 3))
    acc = np.zeros(3)
    for row in X:
        acc = acc + row
    assert sample_mean(X) == pytest.approx(acc / 5, abs=1e-14)


def test_prediction_anomaly_equal_particles():
    X = np.tile([1.0, 2.0], (4, 1))
    assert not prediction_anomaly(X, sample_mean(X)).any()


def test_prediction_anomaly_two_particles():
    a, b = np.array([1.0, 4.0]), np.array([3.0, 0.0])
    S = prediction_anomaly(np.stack([a, b]), (a + b) / 2)
    assert S.shape == (2, 2)
    assert np.array_equal(S[:, 0], (a - b) / 2)
    assert np.array_equal(S[:, 1], -(a - b) / 2)


def test_measurement_anomaly_constant_h():
    mm = MeasurementModel(obs_dim=1, function=lambda X, t: np.full((X.shape[0], 1), 2.0), noise_cov=np.eye(1))
    assert not measurement_anomaly_pred(RngStream(0, 1).normal((6, 2)), mm, 0.0).any()


def test_measurement_anomaly_identity_equals_prediction_anomaly():
    X = RngStream(0, 2).normal((6, 2))
    assert measurement_anomaly_pred(X, identity_mm(2), 0.0) == pytest.approx(
        prediction_anomaly(X, sample_mean(X)), abs=1e-15)


def test_measurement_anomaly_square():
    Sz = measurement_anomaly_pred(np.array([[1.0], [3.0]]), square_mm(), 0.0)
    assert Sz.tolist() == [[-4.0, 4.0]]


def test_anomaly_needs_two_particles():
    with pytest.raises(ParameterError):
        prediction_anomaly(np.array([[1.0]]), np.array([1.0]))


# ---------------------------------------------------------------------------
# gains and updates
# ---------------------------------------------------------------------------
def test_gain_zeroth_zero_measurement_anomaly():
    S = RngStream(0, 3).normal((3, 5))
    assert not gain_zeroth(S, np.zeros((2, 5)), np.eye(2)).any()


def test_gain_zeroth_scalar():
    s, sz, var = 0.7, 1.3, 0.4
    K = gain_zeroth(np.array([[s]]), np.array([[sz]]), np.array([[var]]))
    assert K[0, 0] == pytest.approx(s * sz / (sz * sz + var), rel=1e-14)


def test_gain_zeroth_shrinks_with_noise():
    S = 0.1 * RngStream(1, 3).normal((2, 6))
    Sz = 0.1 * RngStream(2, 3).normal((2, 6))
    K = gain_zeroth(S, Sz, np.eye(2))
    K_big = gain_zeroth(S, Sz, 1e6 * np.eye(2))
    assert np.linalg.norm(K_big) <= np.linalg.norm(K) / 1e5


def test_gain_zeroth_shape_mismatch():
    with pytest.raises(DimensionError):
        gain_zeroth(np.zeros((2, 4)), np.zeros((1, 5)), np.eye(1))


def test_update_zeroth_zero_gain_keeps_particles():
    X = RngStream(0, 4).normal((4, 2))
    assert np.array_equal(update_zeroth(X, np.array([1.0, 1.0]), np.zeros((2, 2)), identity_mm(2), 0.0), X)


def test_update_zeroth_unit_gain_moves_to_observation():
    X = RngStream(0, 5).normal((4, 2))
    Z = np.array([0.5, -1.0])
    out = update_zeroth(X, Z, np.eye(2), identity_mm(2), 0.0)
    assert out == pytest.approx(np.tile(Z, (4, 1)), abs=1e-15)


def test_update_zeroth_scalar():
    out = update_zeroth(np.array([[2.0], [2.0]]), np.array([3.0]), np.array([[0.5]]), identity_mm(), 0.0)
    assert out[:, 0].tolist() == [2.5, 2.5]


def test_anomalies_iter_no_update():
    X = RngStream(0, 6).normal((4, 1))
    S_hat, _ = anomalies_iter(X, X, np.array([0.0]), identity_mm(), 0.0)
    assert not S_hat.any()


def test_anomalies_iter_matching_observation():
    Xp = RngStream(0, 7).normal((3, 1))
    Xh = np.full((3, 1), 2.0)
    _, Sz_hat = anomalies_iter(Xh, Xp, np.array([2.0]), identity_mm(), 0.0)
    assert not Sz_hat.any()


def test_gain_iter_zero_state_anomaly():
    assert not gain_iter(np.zeros((2, 4)), RngStream(0, 8).normal((1, 4)), 0.1).any()


def test_gain_iter_scalar():
    s, sz, eps = 0.4, -0.9, 0.05
    K = gain_iter(np.array([[s]]), np.array([[sz]]), eps)
    assert K[0, 0] == pytest.approx(s * sz / (sz * sz + eps), rel=1e-14)


def test_gain_iter_matrix_epsilon():
    S_hat, Sz_hat = RngStream(3, 8).normal((2, 5)), RngStream(4, 8).normal((2, 5))
    assert gain_iter(S_hat, Sz_hat, 0.3) == pytest.approx(gain_iter(S_hat, Sz_hat, 0.3 * np.eye(2)), abs=1e-14)


def test_gain_iter_rejects_negative_epsilon():
    with pytest.raises(ParameterError):
        gain_iter(np.ones((1, 2)), np.ones((1, 2)), -1.0)


def test_resolve_epsilon_modes():
    Sz_hat = np.array([[1.0, -1.0], [2.0, 0.0]])
    assert resolve_epsilon("strict", Sz_hat) == 0.0
    assert resolve_epsilon("auto", Sz_hat) == pytest.approx(1e-8 * 6.0 / 2, rel=1e-14)
    assert resolve_epsilon(0.25, Sz_hat) == 0.25


def test_update_iter_zero_gain():
    Xp = RngStream(0, 9).normal((3, 1))
    out = update_iter(Xp, Xp + 1.0, np.array([0.0]), np.zeros((1, 1)), 2.0, identity_mm(), 0.0)
    assert np.array_equal(out, Xp)


def test_update_iter_zero_innovation():
    Xp = RngStream(0, 10).normal((3, 1))
    out = update_iter(Xp, np.full((3, 1), 4.0), np.array([4.0]), np.array([[0.7]]), 1.0, identity_mm(), 0.0)
    assert np.array_equal(out, Xp)


def test_update_iter_scalar():
    out = update_iter(np.array([[1.0]]), np.array([[1.4]]), np.array([2.0]), np.array([[0.5]]), 1.0,
                      identity_mm(), 0.0)
    assert out[0, 0] == pytest.approx(1.6, abs=1e-15)


def test_update_iter_mean_prediction_term():
    Xp = np.array([[0.0], [2.0]])
    out = update_iter(Xp, Xp, np.array([5.0]), np.zeros((1, 1)), 0.0, identity_mm(), 0.0,
                      prediction=np.array([1.0]))
    assert out[:, 0].tolist() == [1.0, 1.0]


def test_update_iter_rejects_negative_alpha():
    with pytest.raises(ParameterError):
        update_iter(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros(1), np.zeros((1, 1)), -0.1, identity_mm(), 0.0)


# ---------------------------------------------------------------------------
# weights and estimate
# ---------------------------------------------------------------------------
def two_mixand_bank(w=(0.5, 0.5), means=(0.0, 0.0)):
    return FilterBank([Mixand(np.array([[m - 1.0], [m + 1.0]]), wi) for m, wi in zip(means, w)])


def test_weight_update_identical_mixands():
    bank = two_mixand_bank((0.3, 0.7))
    summary = (np.array([0.2]), np.array([[0.1, -0.1]]))
    out = weight_update(bank, np.array([1.0]), [summary, summary], np.eye(1))
    assert out.weights == pytest.approx([0.3, 0.7], abs=1e-14)


def test_weight_update_likelihood_ratio():
    r2 = math.sqrt(2.0 * math.log(1e6))
    Z = np.array([0.0])
    summaries = [(np.array([0.0]), np.zeros((1, 2))), (np.array([r2]), np.zeros((1, 2)))]
    out = weight_update(two_mixand_bank(), Z, summaries, np.eye(1))
    assert out.weights[1] == pytest.approx(1e-6, rel=1e-5)
    assert out.weights[0] == pytest.approx(1.0 - 1e-6, abs=1e-11)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_weight_update_degenerate_resets_to_uniform():
    before = monitoring.REGISTRY.get_sample_value("igsf_degenerate_weights_total", {"filter": "degenerate"}) or 0.0
    far = (np.array([1e200]), np.zeros((1, 2)))
    out = weight_update(two_mixand_bank((0.9, 0.1)), np.array([0.0]), [far, far], np.eye(1), label="degenerate")
    assert out.weights.tolist() == [0.5, 0.5]
    after = monitoring.REGISTRY.get_sample_value("igsf_degenerate_weights_total", {"filter": "degenerate"})
    assert after == before + 1


def test_weight_update_needs_one_summary_per_mixand():
    with pytest.raises(DimensionError):
        weight_update(two_mixand_bank(), np.array([0.0]), [(np.array([0.0]), np.zeros((1, 2)))], np.eye(1))


def test_bank_estimate_single_mixand_is_sample_mean():
    X = RngStream(5, 5).normal((7, 2))
    assert np.array_equal(bank_estimate(FilterBank([Mixand(X, 1.0)])), sample_mean(X))


def test_bank_estimate_equal_weights():
    bank = two_mixand_bank((0.5, 0.5), (1.0, 3.0))
    assert bank_estimate(bank) == pytest.approx([2.0], abs=1e-15)


def test_bank_estimate_weighted():
    bank = two_mixand_bank((0.3, 0.7), (1.0, 2.0))
    assert bank_estimate(bank) == pytest.approx([1.7], abs=1e-15)


def test_bank_validation():
    with pytest.raises(ParameterError):
        two_mixand_bank((0.5, 0.6)).validate()
    with pytest.raises(ParameterError):
        FilterBank([Mixand(np.zeros((1, 2)), 1.0)]).validate()
    with pytest.raises(DimensionError):
        FilterBank([Mixand(np.zeros((2, 1)), 0.5), Mixand(np.zeros((3, 1)), 0.5)]).validate()
    with pytest.raises(ParameterError):
        FilterBank([]).validate()


def test_bank_options_validation():
    with pytest.raises(ParameterError):
        BankOptions(epsilon="loose")
    with pytest.raises(ParameterError):
        BankOptions(prediction_term="median")
    with pytest.raises(ParameterError):
        BankOptions(epsilon=-1.0)


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------
def test_initial_bank_divisibility():
    with pytest.raises(ParameterError):
        initial_bank(np.zeros(1), np.eye(1), 1000, 7, lambda eta: RngStream(0, eta))


def test_initial_bank_spread_offsets_means():
    bank = initial_bank(np.array([1.0]), np.array([[4.0]]), 3000, 3, lambda eta: RngStream(1, eta), init_spread=1.0)
    means = [sample_mean(m.particles)[0] for m in bank.mixands]
    assert means == pytest.approx([-1.0, 1.0, 3.0], abs=0.3)
    assert bank.weights == pytest.approx([1 / 3] * 3)
    assert bank.gamma == 1000


def test_assimilate_leaves_prediction_untouched():
    Xp = RngStream(6, 6).normal((8, 1)) + 2.0
    copy = Xp.copy()
    assimilate_mixand(Xp, np.array([4.2]), square_mm(), 1.0, AdpSchedule(1.0, EXP_DECAY, 3))
    assert np.array_equal(Xp, copy)
    assert not Xp.flags.writeable


def test_first_iteration_reuses_zeroth_gain():
    mm = identity_mm(var=0.5)
    Xp = RngStream(7, 7).normal((10, 1))
    Z = np.array([0.8])
    S = prediction_anomaly(Xp, sample_mean(Xp))
    K0 = gain_zeroth(S, measurement_anomaly_pred(Xp, mm, 1.0), mm.noise_cov)
    X0 = update_zeroth(Xp, Z, K0, mm, 1.0)
    X1 = update_iter(Xp, X0, Z, K0, 0.5, mm, 1.0)
    X_hat, mean_h, _ = assimilate_mixand(Xp.copy(), Z, mm, 1.0, AdpSchedule(0.5, EXP_DECAY, 1))
    assert np.array_equal(X_hat, X1)
    assert mean_h == pytest.approx(X1.mean(axis=0), abs=1e-15)


def growth_setup(steps: int = 10, seed: int = 3):
    p = GrowthModelParams(steps=steps)
    _, obs = gen_growth(p, seed)
    times = np.arange(steps + 1) * p.h
    return growth_model(p), growth_measurement(p), obs[:, None], times, p


def test_zero_iterations_equals_zeroth_update_filter():
    model, mm, obs, times, p = growth_setup()
    sf = factory(11)
    run = run_filter(model, mm, obs, times, bank_init([p.prior_mean], [[p.prior_var]], 50, 1),
                     AdpSchedule(1.0, EXP_DECAY, 0), sf)

    X = initial_bank([p.prior_mean], [[p.prior_var]], 50, 1, lambda eta: sf(eta, "init")).mixands[0].particles
    stream = sf(0, "propagate")
    for i in range(obs.shape[0]):
        Xp = propagate_subensemble(model, X, times[i], times[i + 1], stream, step_index=i)
        K0 = gain_zeroth(prediction_anomaly(Xp, sample_mean(Xp)), measurement_anomaly_pred(Xp, mm, times[i + 1]),
                         mm.noise_cov)
        X = update_zeroth(Xp, obs[i], K0, mm, times[i + 1])
        assert np.array_equal(run.estimates[i], sample_mean(X))


def test_single_mixand_bank_is_single_iterated_filter():
    model, mm, obs, times, p = growth_setup()
    sf = factory(12)
    schedule = AdpSchedule(1.0, EXP_DECAY, 4)
    run = run_filter(model, mm, obs, times, bank_init([p.prior_mean], [[p.prior_var]], 40, 1), schedule, sf)

    X = initial_bank([p.prior_mean], [[p.prior_var]], 40, 1, lambda eta: sf(eta, "init")).mixands[0].particles
    stream = sf(0, "propagate")
    for i in range(obs.shape[0]):
        Xp = propagate_subensemble(model, X, times[i], times[i + 1], stream, step_index=i)
        X, _, _ = assimilate_mixand(Xp, obs[i], mm, times[i + 1], schedule)
        assert np.array_equal(run.estimates[i], sample_mean(X))
    assert run.weights.tolist() == [[1.0]] * obs.shape[0]


def test_run_filter_reproducible_and_shaped():
    model, mm, obs, times, p = growth_setup(steps=8)
    init = bank_init([p.prior_mean], [[p.prior_var]], 60, 3)
    schedule = AdpSchedule(1.0, EXP_DECAY, 2)
    a = run_filter(model, mm, obs, times, init, schedule, factory(5))
    b = run_filter(model, mm, obs, times, init, schedule, factory(5))
    assert np.array_equal(a.estimates, b.estimates)
    assert np.array_equal(a.weights, b.weights)
    assert a.estimates.shape == (8, 1)
    assert a.weights.shape == (8, 3)
    assert a.mixand_means.shape == (8, 3, 1)
    assert a.weights.sum(axis=1) == pytest.approx(np.ones(8), abs=1e-12)
    assert a.estimates == pytest.approx(np.einsum("tk,tkj->tj", a.weights, a.mixand_means), abs=1e-12)


def test_run_filter_seed_changes_result():
    model, mm, obs, times, p = growth_setup(steps=5)
    init = bank_init([p.prior_mean], [[p.prior_var]], 20, 2)
    schedule = AdpSchedule(1.0, EXP_DECAY, 1)
    a = run_filter(model, mm, obs, times, init, schedule, factory(1))
    b = run_filter(model, mm, obs, times, init, schedule, factory(2))
    assert not np.array_equal(a.estimates, b.estimates)


def test_run_filter_zero_observations():
    model, mm, _, _, p = growth_setup()
    run = run_filter(model, mm, np.empty((0, 1)), np.array([0.0]),
                     bank_init([p.prior_mean], [[p.prior_var]], 10, 2), AdpSchedule(1.0), factory(0))
    assert run.estimates.shape == (0, 1)
    assert run.weights.shape == (0, 2)


def test_run_filter_time_grid_checked():
    model, mm, obs, times, p = growth_setup(steps=4)
    with pytest.raises(DimensionError):
        run_filter(model, mm, obs, times[:-1], bank_init([p.prior_mean], [[p.prior_var]], 10, 1),
                   AdpSchedule(1.0), factory(0))


def test_numerical_failure_reports_step_and_mixand():
    model, _, obs, times, p = growth_setup(steps=2)
    broken = MeasurementModel(obs_dim=1, function=lambda X, t: X * np.nan, noise_cov=np.eye(1))
    bank = initial_bank([p.prior_mean], [[p.prior_var]], 10, 2, lambda eta: RngStream(0, eta))
    streams = [RngStream(1, eta) for eta in range(2)]
    with pytest.raises(NumericalError) as exc:
        igsf_bank_step(bank, model, broken, obs[0], AdpSchedule(1.0), streams, times[0], times[1])
    assert exc.value.step == 1
    assert exc.value.mixand == 0
    assert exc.value.to_dict()["details"]["mixand"] == 0


def test_single_step_matches_kalman_posterior_mean():
    spec = LinearModelSpec()
    lg = spec.matrices()
    model, mm = linear_model(spec), linear_measurement(spec)
    m0, P0 = np.asarray(spec.m0), np.asarray(spec.P0)
    times = np.array([0.0, 1.0])
    ratios = []
    for seed in range(20):
        _, obs = gen_linear(spec, seed)
        run = run_filter(model, mm, obs[:1], times, bank_init(m0, P0, 5000, 1), AdpSchedule(0.0, EXP_DECAY, 0),
                         factory(seed))
        kf = kalman_filter(lg.F, lg.Q, lg.H, lg.R, m0, P0, obs[:1])
        ratios.append(np.abs(run.estimates[0] - kf.means[0]) / kf.stds[0])
    assert np.mean(ratios) < 0.05


@pytest.mark.parametrize("gamma,dim", [(2, 1), (5, 3), (40, 4)])
def test_anomaly_product_is_sample_covariance(gamma, dim):
    X = RngStream(gamma, dim).normal((gamma, dim)) * 3.0 + 1.0
    S = prediction_anomaly(X, sample_mean(X))
    assert S @ S.T == pytest.approx(np.atleast_2d(np.cov(X, rowvar=False, ddof=1)), abs=1e-12)


def test_iterated_gain_with_noise_covariance_reproduces_zeroth_gain():
    X = RngStream(4, 4).normal((12, 3))
    mm = square_mm()
    S = prediction_anomaly(X, sample_mean(X))
    Sz = measurement_anomaly_pred(X[:, :1], mm, 0.0)
    noise = np.array([[0.3]])
    assert gain_iter(S, Sz, noise) == pytest.approx(gain_zeroth(S, Sz, noise), abs=1e-12)


def test_two_pass_weight_normalization_equals_collapsed_form():
    w = np.array([0.2, 0.3, 0.5])
    bank = FilterBank([Mixand(np.array([[m - 1.0], [m + 1.0]]), wi) for m, wi in zip((0.0, 1.0, 2.0), w)])
    summaries = [(np.array([0.4]), np.array([[0.2, -0.2]])),
                 (np.array([1.1]), np.array([[0.5, -0.5]])),
                 (np.array([-0.7]), np.array([[0.1, -0.1]]))]
    Z, noise = np.array([0.5]), np.array([[0.25]])
    lik = np.exp(mixand_log_likelihoods(Z, summaries, noise))
    collapsed = w * lik / np.sum(w * lik)
    assert weight_update(bank, Z, summaries, noise).weights == pytest.approx(collapsed, abs=1e-12)


def test_bank_mean_converges_to_kalman_at_root_n_rate():
    spec = LinearModelSpec()
    lg = spec.matrices()
    model, mm = linear_model(spec), linear_measurement(spec)
    m0, P0 = np.asarray(spec.m0), np.asarray(spec.P0)
    times = np.array([0.0, 1.0])
    errors = []
    for n in (250, 1000, 4000):
        per_seed = []
        for seed in range(200):
            _, obs = gen_linear(spec, seed)
            run = run_filter(model, mm, obs[:1], times, bank_init(m0, P0, n, 1), AdpSchedule(0.0, EXP_DECAY, 0),
                             factory(seed))
            kf = kalman_filter(lg.F, lg.Q, lg.H, lg.R, m0, P0, obs[:1])
            per_seed.append(np.abs(run.estimates[0] - kf.means[0]) / kf.stds[0])
        errors.append(np.mean(per_seed))
    for coarse, fine in zip(errors, errors[1:]):
        assert 1.4 <= coarse / fine <= 2.9


def test_zeroth_update_spread_falls_below_kalman_posterior():
    X = RngStream(30, 1).normal((20_000, 1))
    mm = identity_mm(1, 1.0)
    S = prediction_anomaly(X, sample_mean(X))
    Sz = measurement_anomaly_pred(X, mm, 0.0)
    K = gain_zeroth(S, Sz, mm.noise_cov)[0, 0]
    updated = update_zeroth(X, np.array([0.8]), np.array([[K]]), mm, 0.0)
    prior_var = np.var(X, ddof=1)
    assert np.var(updated, ddof=1) == pytest.approx((1.0 - K) ** 2 * prior_var, rel=1e-10)
    # Kalman posterior variance is (1 − K)·P; the unperturbed update drops the K R Kᵀ term
    assert np.var(updated, ddof=1) < 0.6 * (1.0 - K) * prior_var
