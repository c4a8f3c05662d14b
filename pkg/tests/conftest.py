"""Shared fixtures: seeded random networks and small reference systems."""

import json
from importlib import resources

import numpy as np
import pytest

from loadfreq import parse_network


def random_network_doc(rng):
    """Draw one connected random network document.

    Stays inside the verification envelope: 3-8 buses, 1-3 stochastic
    lines, effective damping (freq_damping + cost_coeff) in [0.5, 6],
    inertias in [0.5, 5], reactances in [0.05, 0.5].
    """
    n_bus = int(rng.integers(3, 9))
    n_gen = int(rng.integers(1, n_bus))
    gen_pos = set(rng.choice(n_bus, size=n_gen, replace=False).tolist())
    buses = []
    for i in range(n_bus):
        d_eff = float(rng.uniform(0.5, 6.0))
        frac = float(rng.uniform(0.2, 0.8))
        bus = {
            "id": i + 1,
            "kind": "generator" if i in gen_pos else "load",
            "freq_damping": round(d_eff * (1.0 - frac), 6),
            "cost_coeff": round(d_eff * frac, 6),
            "power_step": round(float(rng.uniform(-0.4, 0.5)), 6),
            "voltage_mag": round(float(rng.uniform(0.95, 1.05)), 6),
            "phase0": round(float(rng.uniform(-0.3, 0.3)), 6),
        }
        if i in gen_pos:
            bus["inertia"] = round(float(rng.uniform(0.5, 5.0)), 6)
        buses.append(bus)

    edges = set()
    for i in range(2, n_bus + 1):
        edges.add((int(rng.integers(1, i)), i))
    n_extra = int(rng.integers(0, 3))
    for _ in range(8 * n_extra):
        if len(edges) >= n_bus - 1 + n_extra:
            break
        i, j = sorted(rng.choice(np.arange(1, n_bus + 1), size=2,
                                 replace=False).tolist())
        edges.add((int(i), int(j)))
    edges = sorted(edges)

    n_stoch = int(rng.integers(1, min(3, len(edges)) + 1))
    stoch_pos = set(rng.choice(len(edges), size=n_stoch, replace=False).tolist())
    lines = []
    for pos, (i, j) in enumerate(edges):
        ln = {"from": i, "to": j,
              "reactance": round(float(rng.uniform(0.05, 0.5)), 6)}
        if pos in stoch_pos:
            ln["stochastic"] = True
            ln["sigma"] = round(float(rng.uniform(0.02, 0.2)), 6)
        lines.append(ln)
    return {"buses": buses, "lines": lines}


def make_random_network(rng):
    """Parse a fresh random document, exercising the schema path too."""
    return parse_network(json.dumps(random_network_doc(rng)))


def two_bus_doc():
    """Smallest nontrivial system; every matrix entry is checkable by hand."""
    return {
        "buses": [
            {"id": 1, "kind": "generator", "inertia": 2.0, "freq_damping": 0.5,
             "cost_coeff": 0.5, "power_step": 0.2, "voltage_mag": 1.0,
             "phase0": 0.0},
            {"id": 2, "kind": "load", "freq_damping": 0.5, "cost_coeff": 0.5,
             "power_step": -0.1, "voltage_mag": 1.0, "phase0": -0.05},
        ],
        "lines": [
            {"from": 1, "to": 2, "reactance": 0.1, "stochastic": True,
             "sigma": 0.1},
        ],
    }


def noise_pump_doc():
    """A lightly damped swing bus fed through three stochastic lines.

    Tuned so that second-moment growth right above the critical variance is
    visible to a 1000-path ensemble, not only to the tail of the
    distribution: one big rotor with almost no damping, two stiff loads, and
    noise on every line so no single hyperplane can trap the paths.
    """
    return {
        "buses": [
            {"id": 1, "kind": "generator", "inertia": 10.0,
             "freq_damping": 0.1, "cost_coeff": 0.1, "power_step": 0.2,
             "voltage_mag": 1.0, "phase0": 0.0},
            {"id": 2, "kind": "load", "freq_damping": 20.0, "cost_coeff": 20.0,
             "power_step": -0.08, "voltage_mag": 1.0, "phase0": -0.03},
            {"id": 3, "kind": "load", "freq_damping": 20.0, "cost_coeff": 20.0,
             "power_step": -0.07, "voltage_mag": 1.0, "phase0": -0.05},
        ],
        "lines": [
            {"from": 1, "to": 2, "reactance": 0.3, "stochastic": True,
             "sigma": 0.1},
            {"from": 1, "to": 3, "reactance": 0.3, "stochastic": True,
             "sigma": 0.1},
            {"from": 2, "to": 3, "reactance": 0.5, "stochastic": True,
             "sigma": 0.1},
        ],
    }


def bundled_text(name: str) -> str:
    return resources.files("loadfreq").joinpath(f"data/{name}").read_text()


@pytest.fixture(scope="session")
def two_bus_net():
    return parse_network(json.dumps(two_bus_doc()))


@pytest.fixture(scope="session")
def pump_net():
    return parse_network(json.dumps(noise_pump_doc()))


@pytest.fixture(scope="session")
def demo_net():
    return parse_network(bundled_text("demo9.json"))


@pytest.fixture(scope="session")
def synth_net():
    return parse_network(bundled_text("synth68.json"))


@pytest.fixture()
def demo_file(tmp_path):
    path = tmp_path / "demo9.json"
    path.write_text(bundled_text("demo9.json"))
    return str(path)
