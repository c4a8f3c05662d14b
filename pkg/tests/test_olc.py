"""Closed-form welfare optimum against a brute-force dual search."""

import json

import numpy as np
import pytest

from loadfreq import (Bus, InvariantError, control_law, cost, dual_objective,
                      parse_network, solve_olc)
from conftest import make_random_network, two_bus_doc


def test_two_bus_by_hand(two_bus_net):
    sol = solve_olc(two_bus_net)
    # total imbalance 0.1 over total responsiveness 2.0
    assert sol.nu_star == pytest.approx(0.05, abs=1e-15)
    assert np.allclose(sol.d, [0.025, 0.025])
    assert np.allclose(sol.d_hat, [0.025, 0.025])
    assert sol.objective == pytest.approx(0.5 * 2.0 * 0.05 ** 2, abs=1e-15)
    assert not sol.bounds_active


def test_price_maximizes_dual_sum():
    rng = np.random.default_rng(23)
    for _ in range(10):
        net = make_random_network(rng)
        sol = solve_olc(net)
        grid = sol.nu_star + np.linspace(-0.2, 0.2, 4001)
        totals = [sum(dual_objective(b, nu) for b in net.buses)
                  for nu in grid]
        best = grid[int(np.argmax(totals))]
        assert best == pytest.approx(sol.nu_star, abs=2e-4)


def test_control_law_and_primal_dual_consistency():
    rng = np.random.default_rng(29)
    for _ in range(10):
        net = make_random_network(rng)
        sol = solve_olc(net)
        for b, dj in zip(net.buses, sol.d):
            assert dj == pytest.approx(control_law(b, sol.nu_star), abs=1e-15)
        primal = sum(cost(b, dj) for b, dj in zip(net.buses, sol.d))
        damping_term = 0.5 * sol.nu_star ** 2 * sum(
            b.freq_damping for b in net.buses)
        assert primal + damping_term == pytest.approx(sol.objective, rel=1e-12)


def test_cost_is_inverse_responsiveness_quadratic():
    b = Bus(id=1, kind="generator", freq_damping=0.5, cost_coeff=0.4,
            power_step=0.0, voltage_mag=1.0, phase0=0.0, inertia=1.0)
    assert cost(b, 0.2) == pytest.approx(0.2 ** 2 / (2 * 0.4), rel=1e-14)
    # cheaper control (larger coefficient) responds more per unit price
    assert control_law(b, 0.1) == pytest.approx(0.04, abs=1e-15)
    assert cost(b, 0.0) == 0.0


def test_uncontrollable_bus_and_saturation():
    free = Bus(id=3, kind="load", freq_damping=1.0, cost_coeff=0.0,
               power_step=0.0, voltage_mag=1.0, phase0=0.0)
    assert cost(free, 0.0) == 0.0
    assert cost(free, 0.01) == np.inf
    clamped = Bus(id=4, kind="load", freq_damping=1.0, cost_coeff=2.0,
                  power_step=0.0, voltage_mag=1.0, phase0=0.0,
                  load_bounds=(-0.05, 0.05))
    assert control_law(clamped, 1.0) == pytest.approx(0.05)
    assert control_law(clamped, -1.0) == pytest.approx(-0.05)
    assert control_law(clamped, 0.01) == pytest.approx(0.02)


def test_bounds_flag():
    doc = two_bus_doc()
    doc["buses"][1]["load_bounds"] = [-0.001, 0.001]
    sol = solve_olc(parse_network(json.dumps(doc)))
    assert sol.bounds_active
    doc["buses"][1]["load_bounds"] = [-1.0, 1.0]
    assert not solve_olc(parse_network(json.dumps(doc))).bounds_active


def test_zero_total_responsiveness_rejected():
    doc = {
        "buses": [
            {"id": 1, "kind": "generator", "inertia": 1.0, "freq_damping": 0.0,
             "cost_coeff": 0.0, "power_step": 0.1, "voltage_mag": 1.0,
             "phase0": 0.0},
            {"id": 2, "kind": "generator", "inertia": 1.0, "freq_damping": 0.0,
             "cost_coeff": 0.0, "power_step": -0.1, "voltage_mag": 1.0,
             "phase0": 0.0},
        ],
        "lines": [{"from": 1, "to": 2, "reactance": 0.2}],
    }
    with pytest.raises(InvariantError):
        solve_olc(parse_network(json.dumps(doc)))
