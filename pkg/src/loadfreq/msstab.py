"""Mean-square stability of the reduced stochastic model.

Each noise channel closes a loop around the deterministic dynamics through
its rank-1 map N_k = B_k C_k. Collect the squared H2 norms of the channel
transfer functions G_ij(s) = C_i (sI - Acal)^-1 B_j into

    Ghat[i, j] = C_i X_j C_i^T,   Acal X_j + X_j Acal^T + B_j B_j^T = 0.

The mean-square small-gain test is then a spectral-radius condition on this
nonnegative s x s matrix: with common noise variance sigma^2 on every
channel the system is mean-square stable iff sigma^2 rho(Ghat) < 1, so the
critical variance is sigma*^2 = 1 / rho(Ghat). Heterogeneous intensities
enter as a diagonal column scaling, rho(Ghat diag(sigma_k^2)) < 1.

Ghat transforms by a diagonal similarity when a factor pair is rescaled
(B_k, C_k) -> (c B_k, C_k / c), so its spectrum, in particular rho and the
margin, does not depend on the factorization.

``exponent_mode`` selects how a scalar query intensity is interpreted:
``"variance"`` (default) treats it as sigma^2 directly, ``"stddev"`` applies
the test to sigma itself (rho-condition on first powers). The default is
pinned by the scalar anchor: Acal = -a, B = b, C = c gives Ghat = b^2 c^2 /
(2a) and a critical variance of 2a / (b^2 c^2), which a direct generator
computation confirms only under the variance reading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .reduction import ReducedModel

__all__ = ["StabilityReport", "h2_matrix", "spectral_radius",
           "critical_variance", "is_mss", "analyze"]

VARIANCE = "variance"
STDDEV = "stddev"

# Above this state dimension the dense Kronecker solve stops being the
# cheaper route and the Schur-based solver takes over.
_DIRECT_MAX_DIM = 40


def _require_hurwitz(acal: np.ndarray) -> None:
    abscissa = float(np.max(np.real(np.linalg.eigvals(acal)))) if acal.size else -np.inf
    if not abscissa < 0.0:
        raise ValueError(f"drift matrix is not Hurwitz (spectral abscissa {abscissa:.3e}), "
                         "no H2 norms exist")


def _gramians_direct(acal: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """All s controllability Gramians from one Kronecker LU factorization."""
    d = acal.shape[0]
    eye = np.eye(d)
    k = np.kron(eye, acal) + np.kron(acal, eye)
    rhs = np.empty((d * d, b.shape[1]))
    for j in range(b.shape[1]):
        rhs[:, j] = -np.outer(b[:, j], b[:, j]).reshape(-1, order="F")
    sol = np.linalg.solve(k, rhs)
    return [_symmetrize(sol[:, j].reshape(d, d, order="F")) for j in range(b.shape[1])]


def _gramians_schur(acal: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    return [_symmetrize(sla.solve_continuous_lyapunov(acal, -np.outer(b[:, j], b[:, j])))
            for j in range(b.shape[1])]


def _symmetrize(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def h2_matrix(red: ReducedModel, method: str = "auto") -> np.ndarray:
    """Channel interaction matrix Ghat of squared H2 norms.

    Parameters
    ----------
    red : ReducedModel
        Must have a Hurwitz ``acal``.
    method : {"auto", "direct", "schur"}
        Lyapunov solver: dense Kronecker solve, Schur-based solver, or pick
        by dimension. The two agree to high accuracy; the seam exists so the
        choice stays testable.

    Returns
    -------
    ndarray
        (s, s) entrywise-nonnegative matrix; (0, 0) when s = 0.
    """
    if red.s == 0:
        return np.zeros((0, 0))
    _require_hurwitz(red.acal)
    if method == "auto":
        method = "direct" if red.dim_x <= _DIRECT_MAX_DIM else "schur"
    if method == "direct":
        grams = _gramians_direct(red.acal, red.b)
    elif method == "schur":
        grams = _gramians_schur(red.acal, red.b)
    else:
        raise ValueError(f"unknown Lyapunov method {method!r}")
    ghat = np.empty((red.s, red.s))
    for j, x in enumerate(grams):
        ghat[:, j] = np.einsum("ki,ij,kj->k", red.c, x, red.c)
    tiny = -1e-10 * max(1.0, float(np.max(np.abs(ghat))))
    if np.min(ghat) < tiny:
        raise ValueError("H2 matrix has a significantly negative entry, "
                         "Lyapunov solve is inconsistent")
    return np.maximum(ghat, 0.0)


def spectral_radius(mat: np.ndarray) -> float:
    """max |eig|; 0 for an empty matrix."""
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def critical_variance(red: ReducedModel, method: str = "auto") -> float:
    """Critical common noise variance sigma*^2 = 1 / rho(Ghat).

    Returns +inf when the model has no stochastic channels (unconditionally
    mean-square stable given a Hurwitz drift).
    """
    rho = spectral_radius(h2_matrix(red, method=method))
    return np.inf if rho == 0.0 else 1.0 / rho


def _scaled_radius(ghat: np.ndarray, sigma_sq, exponent_mode: str) -> float:
    sig = np.asarray(sigma_sq, dtype=float)
    if np.any(sig < 0):
        raise ValueError("noise intensities must be >= 0")
    if exponent_mode == VARIANCE:
        weights = sig
    elif exponent_mode == STDDEV:
        weights = np.sqrt(sig)
    else:
        raise ValueError(f"unknown exponent_mode {exponent_mode!r}")
    if sig.ndim == 0:
        return float(weights) * spectral_radius(ghat)
    if sig.shape != (ghat.shape[0],):
        raise ValueError(f"expected {ghat.shape[0]} per-channel intensities, got shape {sig.shape}")
    return spectral_radius(ghat * weights[None, :])


def is_mss(red: ReducedModel, sigma_sq, exponent_mode: str = VARIANCE,
           method: str = "auto") -> bool:
    """Mean-square stability at the queried intensity.

    Parameters
    ----------
    sigma_sq : float or (s,) array
        Common noise variance, or one variance per channel (applied as a
        column scaling of Ghat). Under ``exponent_mode="stddev"`` the values
        are still passed as variances but the test uses their square roots.
    """
    ghat = h2_matrix(red, method=method)
    return _scaled_radius(ghat, sigma_sq, exponent_mode) < 1.0


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Margin summary: Ghat, its radius, and the critical intensity.

    ``critical`` is 1 / rho(Ghat): the critical variance under the default
    exponent mode, the critical standard deviation under "stddev" (in which
    case ``sigma_star_sq`` is its square).
    """

    ghat: np.ndarray
    rho: float
    critical: float
    sigma_star_sq: float
    exponent_mode: str
    dim_x: int
    s: int
    queried_sigma_sq: float | np.ndarray | None = None
    mss: bool | None = None
    method: str = "auto"
    notes: tuple[str, ...] = field(default_factory=tuple)


def analyze(red: ReducedModel, sigma_sq=None, exponent_mode: str = VARIANCE,
            method: str = "auto") -> StabilityReport:
    """Full stability analysis, optionally classifying a queried intensity."""
    ghat = h2_matrix(red, method=method)
    rho = spectral_radius(ghat)
    critical = np.inf if rho == 0.0 else 1.0 / rho
    sigma_star_sq = critical if exponent_mode == VARIANCE else critical ** 2
    mss = None
    if sigma_sq is not None:
        mss = _scaled_radius(ghat, sigma_sq, exponent_mode) < 1.0
    notes = () if red.s else ("no stochastic channels: unconditionally mean-square stable",)
    return StabilityReport(ghat=ghat, rho=rho, critical=critical,
                           sigma_star_sq=sigma_star_sq,
                           exponent_mode=exponent_mode, dim_x=red.dim_x,
                           s=red.s, queried_sigma_sq=sigma_sq, mss=mss,
                           method=method, notes=notes)
