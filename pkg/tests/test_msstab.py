"""H2 interaction matrix and critical variance against independent oracles."""

import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from loadfreq import (ReducedModel, analyze, assemble, critical_variance,
                      h2_matrix, is_mss, reduce_model, spectral_radius)
from loadfreq.msstab import STDDEV, VARIANCE
from conftest import make_random_network


def h2_matrix_by_quadrature(red):
    """Ghat[i, j] = C_i X_j C_i^T with X_j integrated numerically."""
    s = red.s
    ghat = np.empty((s, s))
    for j in range(s):
        b_j = red.b[:, j]

        def integrand(t):
            e = expm(red.acal * t)
            v = e @ b_j
            return np.outer(v, v)

        x_j, _ = quad_vec(integrand, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10)
        for i in range(s):
            ghat[i, j] = float(red.c[i] @ x_j @ red.c[i])
    return ghat


def test_scalar_anchor_closed_form():
    rng = np.random.default_rng(89)
    for _ in range(20):
        a, b, c = rng.uniform(0.2, 5.0, size=3)
        red = ReducedModel.from_matrices([[-a]], [[b]], [[c]])
        expected = 2.0 * a / (b * b * c * c)
        assert critical_variance(red) == pytest.approx(expected, rel=1e-12)


def test_unit_scalar_anchor_is_two():
    red = ReducedModel.from_matrices([[-1.0]], [[1.0]], [[1.0]])
    assert critical_variance(red) == pytest.approx(2.0, abs=1e-12)


def test_h2_matrix_matches_quadrature():
    rng = np.random.default_rng(97)
    for _ in range(4):
        red = reduce_model(assemble(make_random_network(rng)))
        ghat = h2_matrix(red)
        ref = h2_matrix_by_quadrature(red)
        assert np.allclose(ghat, ref, rtol=1e-6, atol=1e-10)


def test_direct_and_schur_routes_agree():
    rng = np.random.default_rng(101)
    for _ in range(8):
        red = reduce_model(assemble(make_random_network(rng)))
        direct = h2_matrix(red, method="direct")
        schur = h2_matrix(red, method="schur")
        scale = max(1.0, np.max(np.abs(direct)))
        assert np.max(np.abs(direct - schur)) < 1e-10 * scale


def test_h2_entries_nonnegative():
    rng = np.random.default_rng(103)
    for _ in range(8):
        red = reduce_model(assemble(make_random_network(rng)))
        ghat = h2_matrix(red)
        assert np.all(ghat >= -1e-14)
        assert spectral_radius(ghat) > 0


def test_radius_invariant_under_rank1_rescaling():
    rng = np.random.default_rng(107)
    for _ in range(8):
        red = reduce_model(assemble(make_random_network(rng)))
        gammas = rng.uniform(0.2, 5.0, size=red.s)
        scaled = ReducedModel.from_matrices(
            red.acal, red.b * gammas[None, :], red.c / gammas[:, None],
            g=red.g, sigma=red.sigma)
        rho_a = spectral_radius(h2_matrix(red))
        rho_b = spectral_radius(h2_matrix(scaled))
        assert rho_b == pytest.approx(rho_a, rel=1e-10)


def test_classification_brackets_critical_variance(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    star = critical_variance(red)
    assert is_mss(red, 0.999 * star)
    assert not is_mss(red, 1.001 * star)


def test_heterogeneous_channel_variances():
    rng = np.random.default_rng(109)
    red = None
    while red is None or red.s < 2:
        red = reduce_model(assemble(make_random_network(rng)))
    star = critical_variance(red)
    assert is_mss(red, np.full(red.s, 0.9 * star))
    # silencing all channels but keeping one below critical stays stable
    vec = np.zeros(red.s)
    vec[0] = 0.9 * star
    assert is_mss(red, vec)


def test_stddev_mode_audits_the_literal_inequality(two_bus_net):
    # default mode tests sigma_sq * rho < 1; "stddev" audits the literal
    # sqrt(sigma_sq) * rho < 1 reading, so the critical queried value is
    # (1/rho)^2 while ``critical`` itself stays 1/rho in both modes
    red = reduce_model(assemble(two_bus_net))
    var_report = analyze(red, exponent_mode=VARIANCE)
    std_report = analyze(red, exponent_mode=STDDEV)
    assert std_report.critical == pytest.approx(var_report.critical,
                                                rel=1e-14)
    assert std_report.sigma_star_sq == pytest.approx(
        var_report.critical ** 2, rel=1e-12)
    crit = var_report.critical
    assert is_mss(red, (0.9 * crit) ** 2, exponent_mode=STDDEV)
    assert not is_mss(red, (1.1 * crit) ** 2, exponent_mode=STDDEV)


def test_analyze_report_fields(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    rep = analyze(red)
    assert rep.dim_x == red.dim_x and rep.s == red.s
    assert rep.queried_sigma_sq is None and rep.mss is None
    assert rep.sigma_star_sq == pytest.approx(1.0 / rep.rho, rel=1e-14)
    rep2 = analyze(red, sigma_sq=0.5 * rep.sigma_star_sq)
    assert rep2.mss is True


def test_two_bus_frozen_margin(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    ghat = h2_matrix(red)
    assert ghat.shape == (1, 1)
    assert ghat[0, 0] == pytest.approx(15.2271505, rel=1e-6)
    assert critical_variance(red) == pytest.approx(0.065672169, rel=1e-6)


def test_unknown_method_rejected(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    with pytest.raises(ValueError):
        h2_matrix(red, method="cholesky")
