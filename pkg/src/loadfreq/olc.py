"""Optimal load control with quadratic disutilities.

The welfare problem splits the post-disturbance imbalance between controllable
load deviations d_j (cost d^2 / (2 alpha_j)) and uncontrolled frequency
response d_hat_j (implicit cost d_hat^2 / (2 D_hat_j)), subject to the balance
constraint sum_j (d_j + d_hat_j) = sum_j P_j^m. With these costs the dual is a
concave quadratic in a single price nu, so the solution is closed-form:

    nu*  = sum_j P_j^m / sum_j (alpha_j + D_hat_j)
    d_j  = alpha_j * nu*,     d_hat_j = D_hat_j * nu*

and the decentralized realization is the static feedback d_j = alpha_j *
omega_j, saturated at the bus's load bounds when it has any. nu* is also the
common steady-state frequency deviation of the closed loop, which is what ties
this module to the state-space equilibrium downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .netmodel import Bus, InvariantError, PowerNetwork

__all__ = ["OlcSolution", "cost", "control_law", "dual_objective", "solve_olc"]


def cost(bus: Bus, d: float) -> float:
    """Disutility c_j(d) = d^2 / (2 alpha_j) of load deviation ``d`` at ``bus``.

    A bus with ``cost_coeff`` 0 is not controllable: only d = 0 is free, any
    other deviation costs +inf.
    """
    if bus.cost_coeff == 0.0:
        return 0.0 if d == 0.0 else math.inf
    return d * d / (2.0 * bus.cost_coeff)


def control_law(bus: Bus, omega: float) -> float:
    """Decentralized load response d_j = alpha_j * omega at ``bus``.

    Saturates at ``bus.load_bounds`` when bounds are declared. The linear
    closed-loop model assumes the unsaturated branch; the saturated branch
    only matters to the nonlinear simulation path.
    """
    d = bus.cost_coeff * omega
    if bus.load_bounds is not None:
        lo, hi = bus.load_bounds
        d = min(max(d, lo), hi)
    return d


def dual_objective(bus: Bus, nu: float) -> float:
    """Per-bus summand of the dual function at price ``nu``.

    For quadratic costs the conjugate terms collapse to
    -(alpha_j + D_hat_j) nu^2 / 2 + nu P_j^m.
    """
    return -(bus.cost_coeff + bus.freq_damping) * nu * nu / 2.0 + nu * bus.power_step


@dataclass(frozen=True)
class OlcSolution:
    """Closed-form welfare optimum over a network.

    All per-bus arrays follow the canonical (id-sorted) bus order. ``d`` holds
    the controllable deviations, ``d_hat`` the uncontrolled frequency
    response, and ``nu_star`` the optimal price, equal to the closed-loop
    steady-state frequency deviation. ``bounds_active`` flags that at least
    one d_j falls outside its declared bounds, in which case the closed form
    is the bound-free optimum, not the saturated one.
    """

    bus_ids: tuple[int, ...]
    nu_star: float
    d: np.ndarray
    d_hat: np.ndarray
    objective: float
    bounds_active: bool


def solve_olc(net: PowerNetwork) -> OlcSolution:
    """Solve the welfare problem on ``net`` via the closed-form price.

    Raises
    ------
    InvariantError
        If the total responsiveness sum_j (alpha_j + D_hat_j) is zero, in
        which case the balance constraint cannot absorb any imbalance and the
        dual is unbounded.
    """
    alpha = np.array([b.cost_coeff for b in net.buses])
    dhat = np.array([b.freq_damping for b in net.buses])
    p_m = np.array([b.power_step for b in net.buses])
    total = float(np.sum(alpha + dhat))
    if total <= 0.0:
        raise InvariantError("total responsiveness sum(alpha + freq_damping) is zero, "
                             "no feasible load division exists")
    nu = float(np.sum(p_m)) / total
    d = alpha * nu
    d_hat = dhat * nu
    objective = 0.5 * total * nu * nu
    active = False
    for b, dj in zip(net.buses, d):
        if b.load_bounds is not None and not (b.load_bounds[0] <= dj <= b.load_bounds[1]):
            active = True
            break
    return OlcSolution(
        bus_ids=tuple(b.id for b in net.buses),
        nu_star=nu,
        d=d,
        d_hat=d_hat,
        objective=objective,
        bounds_active=active,
    )
