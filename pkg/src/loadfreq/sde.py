"""Euler-Maruyama Monte Carlo of the full-order stochastic closed loop.

One Ito step of the linear mode:

    u+ = u + (A u + b) dt + sum_k sigma_k Bbar_k (Cbar_k u + Gbar_k) dW_k,

i.e. each stochastic line's flow equation is perturbed by its own realized
flow rate. Saturation mode replaces the alpha part of the effective damping
with the clipped decentralized law per bus (generators explicitly, load
buses through a piecewise closed-form solve of their algebraic relation);
with no declared bounds it coincides with the linear mode pathwise.

Reproducibility contract: path i draws from a dedicated generator seeded by
(seed, i), consumed in fixed-size time blocks, and statistics are
accumulated over fixed-size path chunks combined in chunk order. The result
is a pure function of (model, config): thread count and scheduling cannot
change a single bit of it.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .sysbuild import StateSpaceModel, with_power_step

__all__ = ["SimConfig", "StepDisturbance", "EnsembleStats", "em_step",
           "simulate_ensemble", "simulate_paths", "path_noise_increments",
           "realized_voltage_product"]

DIVERGENCE_NORM = 1e9
_CHUNK_PATHS = 256          # fixed: stats layout must not depend on threads
_BLOCK_STEPS = 2048         # fixed: per-path draw order must not depend on memory limits
_DT_NORM_WARN = 0.5
_DT_NORM_ERROR = 2.0
_Z_95 = 1.959963984540054   # two-sided 95% normal quantile


@dataclass(frozen=True)
class StepDisturbance:
    """Additional per-bus power injections applied from ``time`` onward."""

    time: float
    delta: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValueError("step disturbance time must be >= 0")

    @classmethod
    def from_mapping(cls, time: float, delta: Mapping[int, float]) -> "StepDisturbance":
        return cls(time=float(time), delta=tuple(sorted((int(k), float(v))
                                                        for k, v in delta.items())))

    def delta_map(self) -> dict[int, float]:
        return dict(self.delta)


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Ensemble settings.

    ``sigma_override`` replaces every channel's sigma (a standard deviation,
    not a variance). ``projector`` (rows x dim) adds statistics of the
    projected deviation, used to compare against the reduced moment ODE.
    ``matrix_times`` requests full E[v v^T] snapshots at the nearest recorded
    times. ``u0`` defaults to the model equilibrium.
    """

    dt: float = 1e-3
    t_end: float = 30.0
    n_paths: int = 1000
    seed: int = 0
    sigma_override: float | None = None
    step_disturbance: StepDisturbance | None = None
    record_stride: int = 10
    saturation: bool = False
    threads: int = 1
    u0: np.ndarray | None = None
    projector: np.ndarray | None = None
    matrix_times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_end <= 0:
            raise ValueError("t_end must be > 0")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not isinstance(self.record_stride, int) or self.record_stride < 1:
            raise ValueError("record_stride must be an integer >= 1")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.sigma_override is not None and self.sigma_override < 0:
            raise ValueError("sigma_override must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.step_disturbance is not None and self.step_disturbance.time > self.t_end:
            raise ValueError("step disturbance time lies beyond t_end")


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Per-time ensemble statistics of the deviation v = u - u*.

    The deviation reference u* is the pre-step equilibrium throughout, also
    when a step disturbance moves the equilibrium mid-run. ``freq_min`` /
    ``freq_max`` envelope the raw generator frequency states across paths
    and generators. Half-widths are two-sided 95% normal approximations of
    the ensemble-mean uncertainty. Diverged paths stop contributing from the
    recording time at which they were flagged.
    """

    times: np.ndarray                      # (T,)
    mean: np.ndarray                       # (T, dim), E[v]
    second_moment: np.ndarray              # (T,), E[v^T v]
    second_moment_halfwidth: np.ndarray    # (T,)
    freq_min: np.ndarray                   # (T,)
    freq_max: np.ndarray                   # (T,)
    n_live: np.ndarray                     # (T,) int
    n_paths: int
    dt: float
    seed: int
    diverged: tuple[tuple[int, float], ...]
    proj_second_moment: np.ndarray | None = None
    proj_second_moment_halfwidth: np.ndarray | None = None
    matrix_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    second_matrices: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))


def realized_voltage_product(sigma_k, d_w, dt: float):
    """Normalized per-step voltage-product sample 1 + sigma_k dW / sqrt(dt).

    The continuous-time signal multiplying the line weight is formal white
    noise and has no pathwise value; this is its discretization over one
    step, normalized so the sample mean is ~1 and the sample std is
    ~sigma_k. Output headers label it as a per-step sample for that reason.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return 1.0 + np.asarray(sigma_k) * np.asarray(d_w) / np.sqrt(dt)


def _effective_sigma(model: StateSpaceModel, cfg: SimConfig) -> np.ndarray:
    if cfg.sigma_override is not None:
        return np.full(model.s, float(cfg.sigma_override))
    return model.sigma.astype(float)


def _step_batch(model: StateSpaceModel, u: np.ndarray, dt: float, d_w: np.ndarray,
                sigma: np.ndarray, saturation: bool) -> np.ndarray:
    """One EM step for a (dim, m) state batch with (s, m) N(0, dt) increments."""
    n_g = model.n_g
    if not saturation:
        out = u + dt * (model.a @ u + model.b[:, None])
        rates = model.cbar @ u + model.gbar[:, None] if model.s else None
    else:
        omega_g = u[:n_g]
        flows = u[n_g:]
        if model.n_l:
            # solve D_hat w + clip(alpha w, lo, hi) = r per load bus; the map
            # is piecewise linear and increasing, so the branch follows from
            # where the unsaturated solution lands
            r_l = model.p_m_l[:, None] - model.e_l @ flows
            omega_unsat = r_l / model.d_eff_l[:, None]
            d_unsat = model.alpha_l[:, None] * omega_unsat
            lo, hi = model.bounds_l[0][:, None], model.bounds_l[1][:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                omega_l = np.where(
                    d_unsat > hi, (r_l - hi) / model.dhat_l[:, None],
                    np.where(d_unsat < lo, (r_l - lo) / model.dhat_l[:, None],
                             omega_unsat))
        else:
            omega_l = np.zeros((0, u.shape[1]))
        d_g = np.clip(model.alpha_g[:, None] * omega_g,
                      model.bounds_g[0][:, None], model.bounds_g[1][:, None])
        acc = (model.p_m_g[:, None] - model.dhat_g[:, None] * omega_g - d_g
               - model.e_g @ flows) / model.m_g[:, None]
        flow_rates = model.w0[:, None] * (model.e_g.T @ omega_g + model.e_l.T @ omega_l)
        out = np.empty_like(u)
        out[:n_g] = omega_g + dt * acc
        out[n_g:] = flows + dt * flow_rates
        rates = flow_rates[model.noise_rows - n_g] if model.s else None
    if model.s:
        out[model.noise_rows] += sigma[:, None] * rates * d_w
    return out


def em_step(model: StateSpaceModel, u: np.ndarray, dt: float, noise: np.ndarray,
            saturation: bool = False) -> np.ndarray:
    """One Euler-Maruyama step from state ``u`` with given N(0, dt) increments."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("state must be finite")
    d_w = np.asarray(noise, dtype=float).reshape(model.s, 1)
    out = _step_batch(model, u.reshape(-1, 1), dt, d_w,
                      model.sigma.astype(float), saturation)
    return out[:, 0]


def _path_noise(seed: int, path_idx: int, n_steps: int, s: int):
    """Yield this path's N(0,1) draws in fixed-size blocks.

    Blocks come from one generator in time order, so the stream is identical
    however paths are grouped into chunks.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, path_idx)))
    done = 0
    while done < n_steps:
        take = min(_BLOCK_STEPS, n_steps - done)
        yield rng.standard_normal((take, s))
        done += take


@dataclass
class _ChunkStats:
    sum_v: np.ndarray       # (T, dim)
    sum_q: np.ndarray       # (T,)
    sum_q2: np.ndarray      # (T,)
    comp_min: np.ndarray    # (T, n_g) per-generator minima over the chunk's paths
    comp_max: np.ndarray    # (T, n_g)
    n_live: np.ndarray      # (T,) int
    sum_px: np.ndarray | None
    sum_px2: np.ndarray | None
    sum_mat: np.ndarray     # (Tm, dim, dim)
    diverged: list


def _simulate_chunk(models, cfg: SimConfig, sigma: np.ndarray, path_ids: np.ndarray,
                    n_steps: int, step_at: int, rec_steps: np.ndarray,
                    mat_rec_rows: np.ndarray, u0: np.ndarray,
                    collect_traj: bool = False):
    model, stepped = models
    dim, m = model.dim, len(path_ids)
    n_g = model.n_g
    t_rec = len(rec_steps)
    u_star = model.u_star
    rec_of_step = {int(sstep): r for r, sstep in enumerate(rec_steps)}
    mat_slot_of_step = {int(rec_steps[r]): i for i, r in enumerate(mat_rec_rows)}

    stats = _ChunkStats(
        sum_v=np.zeros((t_rec, dim)), sum_q=np.zeros(t_rec), sum_q2=np.zeros(t_rec),
        comp_min=np.full((t_rec, n_g), np.inf), comp_max=np.full((t_rec, n_g), -np.inf),
        n_live=np.zeros(t_rec, dtype=int),
        sum_px=np.zeros(t_rec) if cfg.projector is not None else None,
        sum_px2=np.zeros(t_rec) if cfg.projector is not None else None,
        sum_mat=np.zeros((len(mat_rec_rows), dim, dim)),
        diverged=[])
    traj = np.empty((m, t_rec, dim)) if collect_traj else None

    u = np.tile(u0[:, None], (1, m))
    alive = np.ones(m, dtype=bool)

    def record(step_idx: int) -> None:
        r = rec_of_step[step_idx]
        v = u - u_star[:, None]
        fin = np.isfinite(u).all(axis=0)
        with np.errstate(invalid="ignore"):
            q = np.einsum("ij,ij->j", v, v)
            ok = alive & fin & (q <= DIVERGENCE_NORM ** 2)
        for idx in np.nonzero(alive & ~ok)[0]:
            stats.diverged.append((int(path_ids[idx]), step_idx * cfg.dt))
        alive[:] = ok
        if collect_traj:
            traj[:, r, :] = u.T
        if not np.any(ok):
            return
        va = v[:, ok]
        stats.sum_v[r] = va.sum(axis=1)
        qa = q[ok]
        stats.sum_q[r] = qa.sum()
        stats.sum_q2[r] = np.square(qa).sum()
        ua = u[:n_g][:, ok]
        stats.comp_min[r] = ua.min(axis=1)
        stats.comp_max[r] = ua.max(axis=1)
        stats.n_live[r] = int(ok.sum())
        if cfg.projector is not None:
            x = cfg.projector @ va
            px = np.einsum("ij,ij->j", x, x)
            stats.sum_px[r] = px.sum()
            stats.sum_px2[r] = np.square(px).sum()
        if step_idx in mat_slot_of_step:
            stats.sum_mat[mat_slot_of_step[step_idx]] = va @ va.T

    record(0)
    gens = [_path_noise(cfg.seed, int(pid), n_steps, model.s) for pid in path_ids] \
        if model.s else []
    sqrt_dt = np.sqrt(cfg.dt)
    zero_dw = np.zeros((0, m))
    block = None
    block_base = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            if model.s:
                if block is None or i - block_base >= block.shape[0]:
                    block = np.stack([next(g) for g in gens], axis=2)  # (take, s, m)
                    block_base = i
                d_w = block[i - block_base] * sqrt_dt
            else:
                d_w = zero_dw
            active = stepped if (stepped is not None and i >= step_at) else model
            u = _step_batch(active, u, cfg.dt, d_w, sigma, cfg.saturation)
            if (i + 1) in rec_of_step:
                record(i + 1)
    return stats, traj


def _combine(chunks: list[_ChunkStats], cfg: SimConfig, model: StateSpaceModel,
             rec_steps: np.ndarray, mat_rec_rows: np.ndarray) -> EnsembleStats:
    t_rec = len(rec_steps)
    dim, n_g = model.dim, model.n_g
    sum_v = np.zeros((t_rec, dim))
    sum_q = np.zeros(t_rec)
    sum_q2 = np.zeros(t_rec)
    comp_min = np.full((t_rec, n_g), np.inf)
    comp_max = np.full((t_rec, n_g), -np.inf)
    n_live = np.zeros(t_rec, dtype=int)
    has_proj = cfg.projector is not None
    sum_px = np.zeros(t_rec) if has_proj else None
    sum_px2 = np.zeros(t_rec) if has_proj else None
    sum_mat = np.zeros((len(mat_rec_rows), dim, dim))
    diverged: list[tuple[int, float]] = []
    for ch in chunks:
        sum_v += ch.sum_v
        sum_q += ch.sum_q
        sum_q2 += ch.sum_q2
        comp_min = np.minimum(comp_min, ch.comp_min)
        comp_max = np.maximum(comp_max, ch.comp_max)
        n_live += ch.n_live
        if has_proj:
            sum_px += ch.sum_px
            sum_px2 += ch.sum_px2
        sum_mat += ch.sum_mat
        diverged.extend(ch.diverged)

    times = rec_steps * cfg.dt
    if np.any(n_live == 0):
        first = int(np.argmax(n_live == 0))
        raise RuntimeError(
            f"all paths diverged by t = {times[first]:.6g}; divergence times: "
            f"{sorted(t for _, t in diverged)[:10]}")

    live = n_live.astype(float)
    mean = sum_v / live[:, None]
    second = sum_q / live

    def halfwidth(s1, s2):
        out = np.zeros(t_rec)
        many = n_live > 1
        var = np.maximum(s2[many] - s1[many] ** 2 / live[many], 0.0) / (live[many] - 1.0)
        out[many] = _Z_95 * np.sqrt(var / live[many])
        return out

    norm_mean_sq = np.einsum("ij,ij->i", mean, mean)
    if np.any(second + 1e-9 * np.maximum(second, 1.0) < norm_mean_sq):
        raise RuntimeError("ensemble statistics violate E[v^T v] >= |E v|^2")

    return EnsembleStats(
        times=times, mean=mean, second_moment=second,
        second_moment_halfwidth=halfwidth(sum_q, sum_q2),
        freq_min=comp_min.min(axis=1), freq_max=comp_max.max(axis=1),
        n_live=n_live, n_paths=cfg.n_paths, dt=cfg.dt, seed=cfg.seed,
        diverged=tuple(sorted(diverged)),
        proj_second_moment=sum_px / live if has_proj else None,
        proj_second_moment_halfwidth=halfwidth(sum_px, sum_px2) if has_proj else None,
        matrix_times=times[mat_rec_rows] if len(mat_rec_rows) else np.zeros(0),
        second_matrices=sum_mat / live[mat_rec_rows, None, None]
        if len(mat_rec_rows) else sum_mat)


def _plan(model: StateSpaceModel, cfg: SimConfig):
    a_norm = float(np.linalg.norm(model.a, 2))
    if cfg.dt * a_norm > _DT_NORM_ERROR:
        raise ValueError(f"dt * |A| = {cfg.dt * a_norm:.3g} exceeds {_DT_NORM_ERROR}; "
                         "the explicit scheme would be unstable")
    if cfg.dt * a_norm > _DT_NORM_WARN:
        warnings.warn(f"dt * |A| = {cfg.dt * a_norm:.3g} above the {_DT_NORM_WARN} "
                      "guidance threshold; expect discretization bias", stacklevel=3)
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    rec = list(range(0, n_steps + 1, cfg.record_stride))
    if rec[-1] != n_steps:
        rec.append(n_steps)
    rec_steps = np.array(rec, dtype=int)
    times = rec_steps * cfg.dt
    mat_rec_rows = np.array(sorted({int(np.argmin(np.abs(times - t)))
                                    for t in cfg.matrix_times}), dtype=int)
    step_at = n_steps + 1
    stepped = None
    if cfg.step_disturbance is not None:
        step_at = int(round(cfg.step_disturbance.time / cfg.dt))
        stepped = with_power_step(model, cfg.step_disturbance.delta_map())
    u0 = model.u_star if cfg.u0 is None else np.asarray(cfg.u0, dtype=float).reshape(model.dim)
    if not np.all(np.isfinite(u0)):
        raise ValueError("initial state must be finite")
    if cfg.projector is not None and cfg.projector.shape[1] != model.dim:
        raise ValueError("projector column count must equal the state dimension")
    return n_steps, rec_steps, mat_rec_rows, step_at, stepped, u0


def simulate_ensemble(model: StateSpaceModel, cfg: SimConfig) -> EnsembleStats:
    """Run the ensemble and return its statistics.

    A deterministic function of (model, cfg): chunking, block sizes and the
    reduction order are fixed constants, and each path owns a counter-seeded
    generator, so ``threads`` changes wall time only.
    """
    sigma = _effective_sigma(model, cfg)
    n_steps, rec_steps, mat_rec_rows, step_at, stepped, u0 = _plan(model, cfg)
    chunk_ids = [np.arange(lo, min(lo + _CHUNK_PATHS, cfg.n_paths))
                 for lo in range(0, cfg.n_paths, _CHUNK_PATHS)]

    def run(ids):
        stats, _ = _simulate_chunk((model, stepped), cfg, sigma, ids, n_steps,
                                   step_at, rec_steps, mat_rec_rows, u0)
        return stats

    if cfg.threads == 1 or len(chunk_ids) == 1:
        chunks = [run(ids) for ids in chunk_ids]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(run, ids) for ids in chunk_ids]
            chunks = [f.result() for f in futures]
    return _combine(chunks, cfg, model, rec_steps, mat_rec_rows)


def simulate_paths(model: StateSpaceModel, cfg: SimConfig,
                   path_indices) -> tuple[np.ndarray, np.ndarray]:
    """Full recorded trajectories of selected paths.

    Returns (times, states) with states shaped (len(path_indices), T, dim).
    Each path reproduces bit-for-bit the path of the same index inside
    :func:`simulate_ensemble` under the same config.
    """
    sigma = _effective_sigma(model, cfg)
    n_steps, rec_steps, mat_rec_rows, step_at, stepped, u0 = _plan(model, cfg)
    ids = np.asarray(list(path_indices), dtype=int)
    out = np.empty((len(ids), len(rec_steps), model.dim))
    for lo in range(0, len(ids), _CHUNK_PATHS):
        sel = ids[lo:lo + _CHUNK_PATHS]
        _, traj = _simulate_chunk((model, stepped), cfg, sigma, sel, n_steps,
                                  step_at, rec_steps, mat_rec_rows, u0,
                                  collect_traj=True)
        out[lo:lo + len(sel)] = traj
    return rec_steps * cfg.dt, out


def path_noise_increments(model: StateSpaceModel, cfg: SimConfig,
                          path_index: int) -> np.ndarray:
    """The (n_steps, s) N(0, dt) increments path ``path_index`` consumes."""
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    blocks = list(_path_noise(cfg.seed, int(path_index), n_steps, model.s))
    flat = np.concatenate(blocks, axis=0) if blocks else np.zeros((n_steps, model.s))
    return flat * np.sqrt(cfg.dt)
