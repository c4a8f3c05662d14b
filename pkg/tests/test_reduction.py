"""Stable-subspace split: orthogonality, annihilation, and exactness."""

import numpy as np
import pytest

from loadfreq import (ReducedModel, ReductionError, assemble, rank1_factors,
                      reduce_model)
from conftest import make_random_network


def cycle_count(net):
    return len(net.lines) - len(net.buses) + 1


def test_transform_is_orthonormal():
    rng = np.random.default_rng(53)
    for _ in range(12):
        model = assemble(make_random_network(rng))
        red = reduce_model(model)
        v = red.v
        assert np.max(np.abs(v.T @ v - np.eye(model.dim))) < 1e-12


def test_null_dimension_is_cycle_count():
    rng = np.random.default_rng(59)
    for _ in range(12):
        net = make_random_network(rng)
        red = reduce_model(assemble(net))
        assert red.dim_null == cycle_count(net)
        assert red.dim_x + red.dim_null == assemble(net).dim


def test_block_structure():
    rng = np.random.default_rng(61)
    for _ in range(8):
        model = assemble(make_random_network(rng))
        red = reduce_model(model)
        t = red.v.T @ model.a @ red.v
        # first dim_null columns vanish: the null coordinates never move
        if red.dim_null:
            assert np.max(np.abs(t[:, :red.dim_null])) < 1e-10
        assert np.allclose(t[:red.dim_null, red.dim_null:], red.a_yx,
                           atol=1e-12)
        assert np.allclose(t[red.dim_null:, red.dim_null:], red.acal,
                           atol=1e-12)


def test_noise_rows_annihilate_null_space():
    rng = np.random.default_rng(67)
    for _ in range(12):
        model = assemble(make_random_network(rng))
        red = reduce_model(model)
        if red.dim_null:
            assert np.max(np.abs(model.cbar @ red.v_null)) < 1e-10


def test_reduced_drift_is_hurwitz():
    rng = np.random.default_rng(71)
    for _ in range(12):
        red = reduce_model(assemble(make_random_network(rng)))
        assert np.max(np.linalg.eigvals(red.acal).real) < 0


def test_deviation_noise_is_purely_multiplicative():
    # the equilibrium shift absorbs the affine part of every noise channel
    rng = np.random.default_rng(73)
    for _ in range(12):
        red = reduce_model(assemble(make_random_network(rng)))
        assert np.max(np.abs(red.g)) < 1e-9


def test_reduced_factors_match_projection(two_bus_net):
    model = assemble(two_bus_net)
    red = reduce_model(model)
    assert red.dim_null == 0
    assert np.allclose(red.acal, red.v_range.T @ model.a @ red.v_range)
    assert np.allclose(red.b, red.v_range.T @ model.bbar)
    assert np.allclose(red.c, model.cbar @ red.v_range)


def test_rank1_factors_and_noise_maps():
    rng = np.random.default_rng(79)
    model = assemble(make_random_network(rng))
    red = reduce_model(model)
    maps = red.noise_maps()
    # channels are numbered 1..s, matching the documents' noise_index
    for k in range(1, red.s + 1):
        b_k, c_k = rank1_factors(red, k)
        assert np.allclose(np.outer(b_k, c_k), maps[k - 1], atol=1e-14)
    for bad in (0, red.s + 1):
        with pytest.raises(IndexError):
            rank1_factors(red, bad)


def test_tree_network_has_no_null_space():
    rng = np.random.default_rng(83)
    for _ in range(20):
        net = make_random_network(rng)
        if cycle_count(net) > 0:
            continue
        red = reduce_model(assemble(net))
        assert red.dim_null == 0
        assert red.v_range.shape == red.v.shape


def test_from_matrices_wraps_bare_system():
    red = ReducedModel.from_matrices([[-2.0]], [[1.0]], [[3.0]])
    assert red.dim_x == 1 and red.dim_null == 0 and red.s == 1
    assert np.allclose(red.g, 0.0)
    two = ReducedModel.from_matrices(-np.eye(2), np.ones((2, 1)),
                                     np.ones((1, 2)), g=np.ones((2, 1)),
                                     sigma=np.array([0.5]))
    assert two.s == 1
    assert np.allclose(two.sigma, [0.5])


def test_marginally_stable_drift_is_rejected():
    import json

    from loadfreq import parse_network
    doc = {
        "buses": [
            {"id": 1, "kind": "generator", "inertia": 1.0, "freq_damping": 0.0,
             "cost_coeff": 0.0, "power_step": 0.1, "voltage_mag": 1.0,
             "phase0": 0.0},
            {"id": 2, "kind": "generator", "inertia": 2.0, "freq_damping": 0.0,
             "cost_coeff": 0.0, "power_step": -0.1, "voltage_mag": 1.0,
             "phase0": 0.0},
        ],
        "lines": [{"from": 1, "to": 2, "reactance": 0.2}],
    }
    model = assemble(parse_network(json.dumps(doc)))
    with pytest.raises(ReductionError, match="Hurwitz"):
        reduce_model(model)
