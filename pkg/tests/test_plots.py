"""Figure rendering smoke tests: files come out non-empty and PNG-shaped."""

import numpy as np

from loadfreq import (SimConfig, assemble, propagate_moments, reduce_model,
                      simulate_ensemble, sweep_cost, sweep_penetration)
from loadfreq.plots import (save_ensemble_plot, save_moments_plot,
                            save_sweep_plot)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def read_head(path):
    with open(path, "rb") as fh:
        return fh.read(8)


def test_sweep_figure(two_bus_net, tmp_path):
    res = sweep_cost(two_bus_net, [0.5, 1.0, 2.0])
    out = tmp_path / "sweep.png"
    assert save_sweep_plot(res, str(out)) == str(out)
    assert read_head(out) == PNG_MAGIC and out.stat().st_size > 1000


def test_sweep_figure_handles_unbounded_points(demo_net, tmp_path):
    res = sweep_penetration(demo_net, [[], [[7, 9]]])
    out = tmp_path / "pen.png"
    save_sweep_plot(res, str(out))
    assert read_head(out) == PNG_MAGIC and out.stat().st_size > 1000


def test_ensemble_figure(two_bus_net, tmp_path):
    model = assemble(two_bus_net)
    stats = simulate_ensemble(model, SimConfig(
        dt=1e-3, t_end=0.5, n_paths=16, seed=1, record_stride=10,
        u0=model.u_star + np.array([0.03, -0.01])))
    out = tmp_path / "ens.png"
    assert save_ensemble_plot(stats, str(out)) == str(out)
    assert read_head(out) == PNG_MAGIC and out.stat().st_size > 1000


def test_moments_figure(two_bus_net, tmp_path):
    red = reduce_model(assemble(two_bus_net))
    traj = propagate_moments(red, np.array([0.05, -0.02]), np.eye(2) * 1e-3,
                             t_end=2.0, sigma_sq=0.02, record_stride=5)
    out = tmp_path / "mom.png"
    assert save_moments_plot(traj, str(out)) == str(out)
    assert read_head(out) == PNG_MAGIC and out.stat().st_size > 1000
