"""Closed-loop state-space assembly.

The state is u = [omega_G; P]: generator frequency deviations stacked over
line flow deviations. With M = diag(inertia), D_G/D_L = diag(effective
damping D_hat + alpha) per kind, W0 = diag(line weights) and (E_G, E_L) the
kind-partitioned incidence,

    d(omega_G)/dt = -M^-1 (D_G omega_G + E_G P - P_G^m)
    dP/dt         =  W0 (E_G^T omega_G + E_L^T omega_L)
    omega_L       =  D_L^-1 (P_L^m - E_L P)

which folds into du/dt = A u + b with

    A = [[-M^-1 D_G,  -M^-1 E_G        ],
         [ W0 E_G^T,  -W0 E_L^T D_L^-1 E_L]]
    b = [M^-1 P_G^m;  W0 E_L^T D_L^-1 P_L^m].

Each stochastic line k perturbs its own flow equation: the noise enters as
sigma_k * Bbar_k (Cbar_k u + Gbar_k) dW_k where Bbar_k is the unit vector of
that line's flow row, Cbar_k is that same row of A, and Gbar_k that entry of
b. The model stores the assembled matrices together with the per-kind
component arrays, so simulation (including the saturated nonlinear variant)
needs no other data source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmodel import PowerNetwork, incidence_matrices, line_weights

__all__ = ["StateSpaceModel", "assemble", "compute_equilibrium", "drift",
           "load_frequencies", "with_power_step"]

_EQ_RESIDUAL_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Assembled closed-loop model plus the arrays it was built from.

    State layout: ``u[:n_g]`` are generator frequency deviations in canonical
    generator order, ``u[n_g:]`` line flow deviations in canonical line order.
    ``noise_rows[k]`` is the state row driven by noise channel k (always in
    the flow block); ``bbar[:, k]`` is the corresponding unit vector,
    ``cbar[k]`` the matching row of ``a`` and ``gbar[k]`` of ``b``.
    """

    a: np.ndarray            # (dim, dim)
    b: np.ndarray            # (dim,)
    bbar: np.ndarray         # (dim, s)
    cbar: np.ndarray         # (s, dim)
    gbar: np.ndarray         # (s,)
    sigma: np.ndarray        # (s,) per-channel noise intensities
    noise_rows: np.ndarray   # (s,) int
    u_star: np.ndarray       # (dim,) least-norm equilibrium
    n_g: int
    n_l: int
    p: int
    gen_ids: tuple[int, ...]
    load_ids: tuple[int, ...]
    # component arrays, per-kind canonical order
    m_g: np.ndarray
    d_eff_g: np.ndarray
    d_eff_l: np.ndarray
    dhat_g: np.ndarray
    dhat_l: np.ndarray
    alpha_g: np.ndarray
    alpha_l: np.ndarray
    bounds_g: np.ndarray     # (2, n_g) lo/hi, +-inf when unbounded
    bounds_l: np.ndarray     # (2, n_l)
    p_m_g: np.ndarray
    p_m_l: np.ndarray
    w0: np.ndarray           # (p,) line weights
    e_g: np.ndarray          # (n_g, p)
    e_l: np.ndarray          # (n_l, p)

    @property
    def dim(self) -> int:
        return self.n_g + self.p

    @property
    def s(self) -> int:
        return len(self.sigma)

    @property
    def n(self) -> int:
        return self.n_g + self.n_l


def _bounds_array(buses) -> np.ndarray:
    out = np.empty((2, len(buses)))
    for j, b in enumerate(buses):
        lo, hi = b.load_bounds if b.load_bounds is not None else (-np.inf, np.inf)
        out[0, j] = lo
        out[1, j] = hi
    return out


def assemble(net: PowerNetwork) -> StateSpaceModel:
    """Build the closed-loop model for ``net``.

    Returns
    -------
    StateSpaceModel
        With ``u_star`` already solved (see :func:`compute_equilibrium`).
    """
    gens = net.generator_buses
    loads = net.load_buses
    n_g, n_l, p = net.n_g, net.n_l, net.p

    m_g = np.array([b.inertia for b in gens], dtype=float)
    d_eff_g = np.array([b.effective_damping for b in gens], dtype=float)
    d_eff_l = np.array([b.effective_damping for b in loads], dtype=float)
    p_m_g = np.array([b.power_step for b in gens], dtype=float)
    p_m_l = np.array([b.power_step for b in loads], dtype=float)
    e_g, e_l = incidence_matrices(net)
    w0 = line_weights(net)

    dim = n_g + p
    a = np.zeros((dim, dim))
    a[:n_g, :n_g] = np.diag(-d_eff_g / m_g)
    a[:n_g, n_g:] = -e_g / m_g[:, None]
    a[n_g:, :n_g] = w0[:, None] * e_g.T
    # E_L^T D_L^-1 E_L, rows scaled by the line weights
    lap_l = (e_l.T / d_eff_l) @ e_l if n_l else np.zeros((p, p))
    a[n_g:, n_g:] = -w0[:, None] * lap_l

    b = np.empty(dim)
    b[:n_g] = p_m_g / m_g
    b[n_g:] = w0 * (e_l.T @ (p_m_l / d_eff_l)) if n_l else 0.0

    positions = [i for i, ln in enumerate(net.lines) if ln.stochastic]
    noise_rows = np.array([n_g + i for i in positions], dtype=int)
    s = len(positions)
    bbar = np.zeros((dim, s))
    for k, row in enumerate(noise_rows):
        bbar[row, k] = 1.0
    cbar = a[noise_rows, :].copy() if s else np.zeros((0, dim))
    gbar = b[noise_rows].copy() if s else np.zeros(0)

    u_star = _least_norm_equilibrium(a, b)

    return StateSpaceModel(
        a=a, b=b, bbar=bbar, cbar=cbar, gbar=gbar,
        sigma=net.noise_sigmas(), noise_rows=noise_rows, u_star=u_star,
        n_g=n_g, n_l=n_l, p=p,
        gen_ids=tuple(b_.id for b_ in gens), load_ids=tuple(b_.id for b_ in loads),
        m_g=m_g, d_eff_g=d_eff_g, d_eff_l=d_eff_l,
        dhat_g=np.array([b_.freq_damping for b_ in gens], dtype=float),
        dhat_l=np.array([b_.freq_damping for b_ in loads], dtype=float),
        alpha_g=np.array([b_.cost_coeff for b_ in gens], dtype=float),
        alpha_l=np.array([b_.cost_coeff for b_ in loads], dtype=float),
        bounds_g=_bounds_array(gens), bounds_l=_bounds_array(loads),
        p_m_g=p_m_g, p_m_l=p_m_l, w0=w0, e_g=e_g, e_l=e_l,
    )


def _least_norm_equilibrium(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-norm solution of A u = -b, with a consistency check.

    A is singular whenever the network has cycles; the equilibrium frequency
    block is unique regardless, only the circulating flow component is pinned
    by the least-norm choice. b always lies in range(A) for an assembled
    model (the balance constraint is absorbed by the damping), so a large
    residual means the inputs are inconsistent.
    """
    u, residual, _, _ = np.linalg.lstsq(a, -b, rcond=None)
    scale = np.linalg.norm(a, 2) * np.linalg.norm(u) + np.linalg.norm(b)
    misfit = np.linalg.norm(a @ u + b)
    if misfit > _EQ_RESIDUAL_RTOL * max(scale, 1.0):
        raise ValueError(f"equilibrium equations are inconsistent: residual {misfit:.3e}")
    _ = residual
    return u


def compute_equilibrium(model: StateSpaceModel) -> np.ndarray:
    """Least-norm u* with A u* + b = 0. Same vector stored in ``model.u_star``."""
    return _least_norm_equilibrium(model.a, model.b)


def drift(model: StateSpaceModel, u: np.ndarray) -> np.ndarray:
    """Deterministic vector field A u + b at state ``u``."""
    return model.a @ u + model.b


def load_frequencies(model: StateSpaceModel, u: np.ndarray) -> np.ndarray:
    """Algebraic load-bus frequencies D_L^-1 (P_L^m - E_L P) at state ``u``."""
    flows = u[model.n_g:]
    if model.n_l == 0:
        return np.zeros(0)
    return (model.p_m_l - model.e_l @ flows) / model.d_eff_l


def with_power_step(model: StateSpaceModel, delta: dict[int, float]) -> StateSpaceModel:
    """Model after adding ``delta[bus_id]`` to the power injections.

    A is untouched; only b, the per-channel offsets Gbar and the equilibrium
    move. Used to swap dynamics at a step-disturbance time mid-simulation.
    """
    from dataclasses import replace

    known = set(model.gen_ids) | set(model.load_ids)
    unknown = sorted(set(delta) - known)
    if unknown:
        raise ValueError(f"power step references unknown buses {unknown}")
    p_m_g = model.p_m_g + np.array([delta.get(i, 0.0) for i in model.gen_ids])
    p_m_l = model.p_m_l + np.array([delta.get(i, 0.0) for i in model.load_ids])
    b = np.empty(model.dim)
    b[:model.n_g] = p_m_g / model.m_g
    b[model.n_g:] = model.w0 * (model.e_l.T @ (p_m_l / model.d_eff_l)) if model.n_l else 0.0
    gbar = b[model.noise_rows].copy() if model.s else np.zeros(0)
    return replace(model, b=b, gbar=gbar, p_m_g=p_m_g, p_m_l=p_m_l,
                   u_star=_least_norm_equilibrium(model.a, b))
