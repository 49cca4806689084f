# tests/test_numerics.py
import math

import numpy as np
import pytest

from igsf import monitoring
from igsf.errors import DimensionError, NumericalError, ParameterError
from igsf.numerics import (
    RngStream,
    chol_psd,
    derive_stream_id,
    discretize_input,
    discretize_lti,
    draw_normal,
    gauss_logpdf,
    gauss_logpdf_residuals,
    mat_exp,
    solve_psd,
)


def test_mat_exp_of_zero_is_identity():
    assert np.array_equal(mat_exp(np.zeros((3, 3)), 1.0), np.eye(3))


def test_mat_exp_diagonal():
    out = mat_exp(np.diag([-1.0, 2.0]), 0.5)
    assert out == pytest.approx(np.diag([math.exp(-0.5), math.exp(1.0)]), abs=1e-12)


def test_mat_exp_rotation_quarter_turn():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert mat_exp(A, math.pi / 2) == pytest.approx(A, abs=1e-10)


def test_mat_exp_stack_matches_individual():
    A = np.array([[[0.0, 1.0], [-2.0, -0.3]], [[-1.0, 0.0], [0.5, -2.0]]])
    stacked = mat_exp(A, 0.2)
    for k in range(2):
        assert stacked[k] == pytest.approx(mat_exp(A[k], 0.2), abs=1e-14)


def test_mat_exp_rejects_bad_input():
    with pytest.raises(DimensionError):
        mat_exp(np.zeros((2, 3)))
    with pytest.raises(ParameterError):
        mat_exp(np.array([[np.nan]]))


def test_discretize_lti_zero_drift():
    Phi, SigmaD = discretize_lti(np.zeros((2, 2)), np.eye(2), 0.1)
    assert Phi == pytest.approx(np.eye(2), abs=1e-14)
    assert SigmaD == pytest.approx(0.1 * np.eye(2), abs=1e-14)


def test_discretize_lti_scalar_closed_form():
    Phi, SigmaD = discretize_lti(np.array([[-1.0]]), np.array([[1.0]]), 1.0)
    assert Phi[0, 0] == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert SigmaD[0, 0] == pytest.approx((1.0 - math.exp(-2.0)) / 2.0, abs=1e-8)


def test_discretize_lti_zero_noise_gives_zero_covariance():
    Q = np.array([[0.0, 1.0], [-4.0, -0.2]])
    Phi, SigmaD = discretize_lti(Q, np.zeros((2, 1)), 0.05)
    assert not SigmaD.any()
    assert Phi == pytest.approx(mat_exp(Q, 0.05), abs=1e-14)


def test_discretize_lti_rejects_nonpositive_step():
    with pytest.raises(ParameterError):
        discretize_lti(np.eye(2), np.eye(2), 0.0)


def test_discretize_input_scalar_first_order_hold():
    h = 0.3
    Phi, B0, B1 = discretize_input(np.array([[-1.0]]), np.array([[1.0]]), h)
    assert Phi[0, 0] == pytest.approx(math.exp(-h), abs=1e-12)
    assert B0[0, 0] == pytest.approx(1.0 - math.exp(-h), abs=1e-12)
    assert B1[0, 0] == pytest.approx(h - 1.0 + math.exp(-h), abs=1e-12)


def test_discretize_input_zero_order_hold_has_no_slope_term():
    _, B0, B1 = discretize_input(np.array([[-2.0]]), np.array([[1.0]]), 0.1, order_hold=0)
    assert B0[0, 0] == pytest.approx((1.0 - math.exp(-0.2)) / 2.0, abs=1e-12)
    assert not B1.any()


def test_chol_psd_identity_without_jitter():
    L, delta = chol_psd(np.eye(3), jitter=0.0)
    assert np.array_equal(L, np.eye(3))
    assert delta == 0.0


def test_chol_psd_hand_factor():
    L, delta = chol_psd(np.array([[4.0, 2.0], [2.0, 2.0]]))
    assert L == pytest.approx(np.array([[2.0, 0.0], [1.0, 1.0]]), abs=1e-14)
    assert delta == 0.0


def test_chol_psd_rank_one_escalates():
    before = monitoring.REGISTRY.get_sample_value("igsf_jitter_escalations_total", {"site": "rank_one"}) or 0.0
    L, delta = chol_psd(np.ones((2, 2)), jitter=1e-12, site="rank_one")
    assert 0.0 < delta <= 1e-8
    assert np.all(np.isfinite(L))
    after = monitoring.REGISTRY.get_sample_value("igsf_jitter_escalations_total", {"site": "rank_one"})
    assert after == before + 1


def test_chol_psd_gives_up_on_indefinite_matrix():
    with pytest.raises(NumericalError):
        chol_psd(np.diag([1.0, -1.0]), jitter=1e-12)


def test_chol_psd_rejects_non_finite():
    with pytest.raises(NumericalError):
        chol_psd(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_solve_psd_matches_direct_solve():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    B = np.array([[1.0, 0.0], [2.0, 1.0]])
    assert solve_psd(A, B) == pytest.approx(np.linalg.solve(A, B), abs=1e-12)


def test_gauss_logpdf_standard_normal_at_mode():
    assert gauss_logpdf(0.0, 0.0, np.array([[1.0]])) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


@pytest.mark.parametrize("d", [1, 3, 6])
def test_gauss_logpdf_at_mean_identity_cov(d):
    x = np.arange(d, dtype=float)
    assert gauss_logpdf(x, x, np.eye(d)) == pytest.approx(-0.5 * d * math.log(2 * math.pi), abs=1e-12)


def test_gauss_logpdf_diagonal_is_product_of_marginals():
    expected = sum(-0.5 * math.log(2 * math.pi * v) - 0.5 * x * x / v for x, v in ((1.0, 1.0), (2.0, 4.0)))
    assert gauss_logpdf([1.0, 2.0], [0.0, 0.0], np.diag([1.0, 4.0])) == pytest.approx(expected, abs=1e-12)


def test_gauss_logpdf_residuals_rowwise():
    R = np.array([[0.0, 0.0], [1.0, 2.0]])
    out = gauss_logpdf_residuals(R, np.diag([1.0, 4.0]))
    assert out.shape == (2,)
    assert out[1] == pytest.approx(gauss_logpdf([1.0, 2.0], [0.0, 0.0], np.diag([1.0, 4.0])), abs=1e-12)


def test_gauss_logpdf_dimension_mismatch():
    with pytest.raises(DimensionError):
        gauss_logpdf([1.0, 2.0], [0.0], np.eye(2))


def test_stream_determinism():
    a = RngStream(7, 12345).normal(50)
    b = RngStream(7, 12345).normal(50)
    assert np.array_equal(a, b)


def test_stream_seed_changes_draws():
    assert RngStream(7, 12345).normal(1)[0] != RngStream(8, 12345).normal(1)[0]


def test_stream_ids_separate_sequences():
    assert derive_stream_id(0, 0, "igsf:propagate") != derive_stream_id(0, 1, "igsf:propagate")
    assert derive_stream_id(3, 1, "gspf:init") == derive_stream_id(3, 1, "gspf:init")
    assert 0 <= derive_stream_id("x") < 2 ** 64
    a = RngStream.for_purpose(5, 0, 0, "truth:growth").normal(10)
    b = RngStream.for_purpose(5, 1, 0, "truth:growth").normal(10)
    assert not np.array_equal(a, b)


def test_stream_counter_advances():
    s = RngStream(1, 2)
    before = s.counter
    s.normal(8)
    assert s.counter != before


def test_draw_normal_moments():
    z = draw_normal(RngStream(2024, derive_stream_id("moments")), 1_000_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_draw_normal_rejects_empty():
    with pytest.raises(ParameterError):
        draw_normal(RngStream(0, 0), 0)


@pytest.mark.parametrize("seed", range(5))
def test_mat_exp_semigroup(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    A *= 2.0 / max(abs(np.linalg.eigvals(A)))
    assert mat_exp(A, 0.3) @ mat_exp(A, 0.7) == pytest.approx(mat_exp(A, 1.0), abs=1e-8)


def trapezoid_noise_cov(Q, G, h, substeps=10_000):
    """∫_0^h e^{Qs} G Gᵀ e^{Qᵀs} ds by the trapezoidal rule."""
    GG = G @ G.T
    step = mat_exp(Q, h / substeps)
    E = np.eye(Q.shape[0])
    total = 0.5 * GG
    for k in range(1, substeps + 1):
        E = step @ E
        term = E @ GG @ E.T
        total = total + (0.5 * term if k == substeps else term)
    return total * (h / substeps)


@pytest.mark.parametrize("seed", range(3))
def test_discretize_lti_matches_fine_quadrature(seed):
    rng = np.random.default_rng(100 + seed)
    Q = rng.normal(size=(3, 3))
    G = rng.normal(size=(3, 2))
    _, SigmaD = discretize_lti(Q, G, 0.5)
    assert SigmaD == pytest.approx(trapezoid_noise_cov(Q, G, 0.5), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_discretize_lti_covariance_is_symmetric_psd(seed):
    rng = np.random.default_rng(200 + seed)
    Q = rng.normal(size=(4, 4))
    G = rng.normal(size=(4, 1))
    _, SigmaD = discretize_lti(Q, G, 0.2)
    assert np.max(np.abs(SigmaD - SigmaD.T)) <= 1e-12
    assert np.linalg.eigvalsh(SigmaD).min() >= -1e-10


def test_interleaved_streams_match_solo_draws():
    a, b = RngStream(9, 111), RngStream(9, 222)
    mixed_a, mixed_b = [], []
    for size in (3, 1, 4, 2):
        mixed_a.append(a.normal(size))
        mixed_b.append(b.normal(size))
    solo_a = RngStream(9, 111).normal(10)
    solo_b = RngStream(9, 222).normal(10)
    assert np.array_equal(np.concatenate(mixed_a), solo_a)
    assert np.array_equal(np.concatenate(mixed_b), solo_b)
