"""Coordinate reduction onto the stable subspace.

The assembled drift matrix A is singular exactly on the network's cycle
space: null(A) = {(0, P) : E P = 0}, so dim null(A) = p - n + 1 on a
connected network. An orthonormal V = [V_null | V_range] from the SVD of A
block-triangularizes the dynamics,

    V^T A V = [[0, A_yx], [0, Acal]],

and the deviation x = V_range^T (u - u*) evolves autonomously:

    dx = Acal x dt + sum_k sigma_k (N_k x + G_k) dW_k,
    N_k = B_k C_k,  B_k = V_range^T Bbar_k,  C_k = Cbar_k V_range,
    G_k = B_k (Cbar_k u* + Gbar_k).

Cbar_k annihilates null(A) (it is a row of A), which is what makes the
reduction exact rather than approximate; that identity and the required
Hurwitz property of Acal are checked, not assumed. For assembled networks
Cbar_k u* + Gbar_k is an entry of A u* + b = 0, so every G_k vanishes to
machine precision; nonzero G_k only appear in synthetic models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sysbuild import StateSpaceModel

__all__ = ["ReductionError", "ReducedModel", "reduce_model", "rank1_factors"]

# Singular values below 64 * dim * eps * smax are treated as zero; the kept
# and dropped groups must then be separated by a factor of 1e3.
_RANK_RTOL_FACTOR = 64.0
_GUARD_BAND = 1e3
_ANNIHILATION_TOL = 1e-10
_HURWITZ_TOL = 0.0


class ReductionError(ValueError):
    """The model cannot be reduced under the stated guarantees."""


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Stable-subspace model (x-coordinates) plus the transform out of them.

    ``v`` stacks the null basis (first ``dim_null`` columns) then the range
    basis; ``b`` and ``c`` hold the per-channel factors columnwise /
    rowwise, so channel k uses ``b[:, k]``, ``c[k]`` and ``g[:, k]``.
    """

    v: np.ndarray          # (dim, dim) orthonormal
    dim_null: int
    dim_x: int
    acal: np.ndarray       # (dim_x, dim_x), Hurwitz
    a_yx: np.ndarray       # (dim_null, dim_x)
    b: np.ndarray          # (dim_x, s)
    c: np.ndarray          # (s, dim_x)
    g: np.ndarray          # (dim_x, s)
    sigma: np.ndarray      # (s,)

    @property
    def s(self) -> int:
        return self.b.shape[1]

    @property
    def v_null(self) -> np.ndarray:
        return self.v[:, :self.dim_null]

    @property
    def v_range(self) -> np.ndarray:
        return self.v[:, self.dim_null:]

    def noise_maps(self) -> list[np.ndarray]:
        """Rank-1 multiplicative maps N_k = outer(B_k, C_k)."""
        return [np.outer(self.b[:, k], self.c[k]) for k in range(self.s)]

    @classmethod
    def from_matrices(cls, acal: np.ndarray, b: np.ndarray, c: np.ndarray,
                      g: np.ndarray | None = None,
                      sigma: np.ndarray | None = None) -> "ReducedModel":
        """Wrap bare (Acal, B, C[, G]) matrices as a synthetic reduced model.

        Used for scalar anchors and test batteries where no network exists.
        ``b``/``g`` are (dim_x, s), ``c`` is (s, dim_x).
        """
        acal = np.atleast_2d(np.asarray(acal, dtype=float))
        b = np.asarray(b, dtype=float).reshape(acal.shape[0], -1)
        c = np.asarray(c, dtype=float).reshape(-1, acal.shape[0])
        if g is None:
            g = np.zeros_like(b)
        g = np.asarray(g, dtype=float).reshape(acal.shape[0], -1)
        s = b.shape[1]
        if sigma is None:
            sigma = np.zeros(s)
        return cls(v=np.eye(acal.shape[0]), dim_null=0, dim_x=acal.shape[0],
                   acal=acal, a_yx=np.zeros((0, acal.shape[0])), b=b, c=c,
                   g=g, sigma=np.asarray(sigma, dtype=float))


def reduce_model(model: StateSpaceModel, rank_rtol: float | None = None) -> ReducedModel:
    """Split states into null(A) and its complement and project the noise.

    Parameters
    ----------
    model : StateSpaceModel
        Assembled network model.
    rank_rtol : float, optional
        Override for the relative singular-value cutoff. The default is
        ``64 * dim * eps``.

    Raises
    ------
    ReductionError
        If the singular-value spectrum has no clean gap at the cutoff (rank
        tolerance ambiguity) or the reduced drift is not Hurwitz.
    """
    a = model.a
    dim = a.shape[0]
    _, sv, vh = np.linalg.svd(a)
    smax = sv[0] if len(sv) else 0.0
    rtol = rank_rtol if rank_rtol is not None else _RANK_RTOL_FACTOR * dim * np.finfo(float).eps
    cut = rtol * smax
    dropped = sv <= cut
    dim_null = int(np.sum(dropped))
    dim_x = dim - dim_null
    if dim_x == 0:
        raise ReductionError("drift matrix is numerically zero, nothing to reduce")
    if dim_null:
        largest_dropped = sv[dim_x]
        smallest_kept = sv[dim_x - 1]
        if largest_dropped > 0 and smallest_kept < _GUARD_BAND * largest_dropped:
            raise ReductionError(
                "rank tolerance ambiguity: singular values "
                f"{smallest_kept:.3e} and {largest_dropped:.3e} straddle the cutoff "
                f"{cut:.3e} without a {_GUARD_BAND:g}x gap")

    v = vh.T[:, list(range(dim_x, dim)) + list(range(dim_x))]  # [null | range]
    v_null, v_range = v[:, :dim_null], v[:, dim_null:]

    first_col = a @ v_null
    if dim_null and np.max(np.abs(first_col)) > _ANNIHILATION_TOL * max(1.0, smax):
        raise ReductionError("null basis is not annihilated by the drift matrix")
    if model.s:
        leak = model.cbar @ v_null if dim_null else np.zeros((model.s, 0))
        if dim_null and np.max(np.abs(leak)) > _ANNIHILATION_TOL * max(1.0, smax):
            raise ReductionError("noise output rows do not annihilate the null space")

    acal = v_range.T @ a @ v_range
    a_yx = v_null.T @ a @ v_range
    abscissa = float(np.max(np.real(np.linalg.eigvals(acal))))
    if abscissa >= _HURWITZ_TOL:
        raise ReductionError(f"reduced drift is not Hurwitz: spectral abscissa {abscissa:.3e}")

    b = v_range.T @ model.bbar
    c = model.cbar @ v_range
    offsets = model.cbar @ model.u_star + model.gbar if model.s else np.zeros(0)
    g = b * offsets[None, :]

    return ReducedModel(v=v, dim_null=dim_null, dim_x=dim_x, acal=acal,
                        a_yx=a_yx, b=b, c=c, g=g, sigma=model.sigma.copy())


def rank1_factors(red: ReducedModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Factor pair (B_k, C_k) of noise channel ``k`` (1-based).

    ``outer(B_k, C_k)`` is the channel's multiplicative map N_k.
    """
    if not 1 <= k <= red.s:
        raise IndexError(f"noise channel {k} out of range 1..{red.s}")
    return red.b[:, k - 1].copy(), red.c[k - 1].copy()
