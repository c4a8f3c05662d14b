"""Moment ODEs, the vectorized generator, and the bisection cross-check."""

import numpy as np
import pytest

from loadfreq import (ReducedModel, assemble, critical_variance,
                      critical_variance_bisect, dichotomy_check, h2_matrix,
                      hurwitz_oracle, propagate_moments, reduce_model,
                      spectral_radius, steady_state_covariance,
                      vectorized_generator)
from conftest import make_random_network


def scalar_model(a, b, c, g=None, sigma=None):
    gg = None if g is None else [[g]]
    ss = None if sigma is None else [sigma]
    return ReducedModel.from_matrices([[-a]], [[b]], [[c]], g=gg, sigma=ss)


def test_scalar_generator_abscissa_closed_form():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b, c, s2 = rng.uniform(0.2, 3.0, size=4)
        red = scalar_model(a, b, c)
        expected = -2.0 * a + s2 * (b * c) ** 2
        assert hurwitz_oracle(red, s2) == pytest.approx(expected, abs=1e-10)


def test_scalar_second_moment_decay_rate():
    a, b, c, s2, x0 = 1.1, 0.7, 1.3, 0.4, 0.9
    red = scalar_model(a, b, c)
    traj = propagate_moments(red, [x0], [[x0 * x0]], t_end=2.0, dt=1e-4,
                             sigma_sq=s2, record_stride=100)
    rate = -2.0 * a + s2 * (b * c) ** 2
    expected = x0 * x0 * np.exp(rate * traj.times)
    assert np.allclose(traj.traces, expected, rtol=1e-8)
    assert np.allclose(traj.mean[:, 0], x0 * np.exp(-a * traj.times), rtol=1e-8)


def test_scalar_additive_steady_state():
    a, b, c, gval, sig = 1.5, 0.6, 0.8, 0.5, 0.7
    red = scalar_model(a, b, c, g=gval, sigma=sig)
    s_inf = steady_state_covariance(red)
    expected = sig ** 2 * gval ** 2 / (2 * a - sig ** 2 * (b * c) ** 2)
    assert s_inf[0, 0] == pytest.approx(expected, rel=1e-12)
    # long integration of the moment ODE lands on the same value
    traj = propagate_moments(red, [0.0], [[0.0]], t_end=30.0, record_stride=50)
    assert traj.traces[-1] == pytest.approx(expected, rel=1e-6)


def test_assembled_networks_have_no_additive_input():
    rng = np.random.default_rng(13)
    for _ in range(5):
        red = reduce_model(assemble(make_random_network(rng)))
        gen = vectorized_generator(red, 0.3)
        assert np.allclose(gen.b_vec, 0.0, atol=1e-12)
        assert np.allclose(gen.mu_coupling, 0.0, atol=1e-12)
        s_inf = steady_state_covariance(red, 0.5 * critical_variance(red))
        assert np.allclose(s_inf, 0.0, atol=1e-12)


def test_bisection_agrees_with_h2_route():
    rng = np.random.default_rng(17)
    for _ in range(3):
        red = reduce_model(assemble(make_random_network(rng)))
        star = critical_variance(red)
        bisected = critical_variance_bisect(red, rel_tol=1e-9)
        assert bisected == pytest.approx(star, rel=1e-6)


def test_abscissa_changes_sign_at_critical_variance(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    star = critical_variance(red)
    assert hurwitz_oracle(red, 0.99 * star) < 0
    assert hurwitz_oracle(red, 1.01 * star) > 0


def test_no_steady_state_above_critical(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    star = critical_variance(red)
    with pytest.raises(ValueError, match="steady state"):
        steady_state_covariance(red, 1.05 * star)


def test_silent_channels_never_destabilize(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    assert critical_variance_bisect(
        ReducedModel.from_matrices(red.acal, np.zeros((red.dim_x, 0)),
                                   np.zeros((0, red.dim_x)))) == np.inf


def test_generator_dimension_guard(synth_net, two_bus_net):
    red = reduce_model(assemble(synth_net))
    with pytest.raises(ValueError, match="max_dim"):
        vectorized_generator(red, 0.1)
    small = reduce_model(assemble(two_bus_net))
    assert vectorized_generator(small, 0.1, max_dim=2).dim_x == 2


def test_variance_vector_validation(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    with pytest.raises(ValueError):
        hurwitz_oracle(red, [0.1, 0.2])
    with pytest.raises(ValueError):
        hurwitz_oracle(red, -0.1)


def test_growth_classification_stable_side(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    star = critical_variance(red)
    rep = dichotomy_check(red, 0.5 * star)
    assert not rep.boundary
    assert rep.predicted_stable is True
    assert rep.noise_free_decays is True
    assert rep.additive_bounded is True
    assert rep.agree is True
    assert rep.abscissa < 0


def test_growth_classification_unstable_side(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    star = critical_variance(red)
    rep = dichotomy_check(red, 2.0 * star)
    assert not rep.boundary
    assert rep.predicted_stable is False
    assert rep.agree is True
    assert rep.abscissa > 0


def test_growth_classification_flags_boundary(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    rep = dichotomy_check(red, critical_variance(red))
    assert rep.boundary


def test_trajectory_traces_shape(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    traj = propagate_moments(red, np.zeros(red.dim_x), np.eye(red.dim_x),
                             t_end=1.0, dt=1e-3, sigma_sq=0.01,
                             record_stride=10)
    assert traj.mean.shape == (len(traj.times), red.dim_x)
    assert traj.second.shape == (len(traj.times), red.dim_x, red.dim_x)
    assert traj.traces.shape == (len(traj.times),)
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(1.0)
    # symmetric second moments throughout
    assert np.allclose(traj.second, np.swapaxes(traj.second, 1, 2), atol=1e-12)


def test_default_step_tracks_exact_flow(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    s2 = 0.5 * critical_variance(red)
    mu0 = np.array([0.1, -0.2])
    s0 = np.eye(2) * 0.04
    auto = propagate_moments(red, mu0, s0, t_end=3.0, sigma_sq=s2)
    fine = propagate_moments(red, mu0, s0, t_end=3.0, dt=1e-5, sigma_sq=s2)
    assert auto.traces[-1] == pytest.approx(fine.traces[-1], rel=1e-7)


def test_propagate_rejects_bad_arguments(two_bus_net):
    red = reduce_model(assemble(two_bus_net))
    with pytest.raises(ValueError):
        propagate_moments(red, np.zeros(2), np.eye(2), t_end=0.0)
    with pytest.raises(ValueError):
        propagate_moments(red, np.zeros(2), np.eye(2), t_end=1.0,
                          record_stride=0)


def test_bisection_requires_stable_drift():
    red = ReducedModel.from_matrices([[0.2]], [[1.0]], [[1.0]])
    with pytest.raises(ValueError, match="Hurwitz"):
        critical_variance_bisect(red)
