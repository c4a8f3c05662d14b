"""Parameter sweeps over the stability margin, with report emission.

Two studies: the cost sweep rescales (or sets) the controllable-load
responsiveness alpha on every controllable bus and tracks the critical
variance; the penetration sweep re-marks which lines are stochastic and
tracks the margin as the stochastic set grows. Larger alpha means cheaper
controllable load (the cost coefficient is 1/alpha), so output axes are
labeled in alpha directly.

Reports are CSV (machine) or aligned text (human). CSV embeds metadata as
``# key: value`` comment lines; everything except ``generated_at`` is a
deterministic function of the inputs, and floats are written in shortest
round-trip form so parsing recovers every point exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .moments import critical_variance_bisect
from .msstab import critical_variance, spectral_radius, h2_matrix
from .netmodel import InvariantError, PowerNetwork, network_hash
from .reduction import ReductionError, reduce_model
from .sysbuild import assemble

__all__ = ["SweepPoint", "SweepResult", "sweep_cost", "sweep_penetration",
           "report", "parse_report_csv"]

_VERIFY_RTOL = 1e-6
_CSV_COLUMNS = ("sigma_star_sq", "rho", "dim_x", "feasible", "oracle_rel_err")


@dataclass(frozen=True)
class SweepPoint:
    """One sweep grid point. Infeasible points carry NaN margins."""

    value: float
    sigma_star_sq: float
    rho: float
    dim_x: int
    feasible: bool
    oracle_rel_err: float | None = None


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Sweep curve plus provenance metadata, points sorted by sweep value."""

    variable: str
    units: str
    points: tuple[SweepPoint, ...]
    metadata: dict


def _evaluate(net: PowerNetwork, value: float, verify: bool) -> SweepPoint:
    try:
        red = reduce_model(assemble(net))
        ghat = h2_matrix(red)
        rho = spectral_radius(ghat)
        sigma_star_sq = np.inf if rho == 0.0 else 1.0 / rho
    except (InvariantError, ReductionError):
        return SweepPoint(value=value, sigma_star_sq=np.nan, rho=np.nan,
                          dim_x=0, feasible=False)
    rel_err = None
    if verify:
        oracle = critical_variance_bisect(red, rel_tol=1e-8)
        if np.isinf(sigma_star_sq) and np.isinf(oracle):
            rel_err = 0.0
        else:
            rel_err = abs(oracle - sigma_star_sq) / sigma_star_sq
        if not rel_err <= _VERIFY_RTOL:
            raise RuntimeError(
                f"sweep point {value:g}: margin {sigma_star_sq:.9e} disagrees with "
                f"the moment-generator bisection {oracle:.9e} "
                f"(relative error {rel_err:.3e} > {_VERIFY_RTOL:g})")
    return SweepPoint(value=value, sigma_star_sq=float(sigma_star_sq), rho=float(rho),
                      dim_x=red.dim_x, feasible=True, oracle_rel_err=rel_err)


def _base_metadata(net: PowerNetwork, verify: bool) -> dict:
    return {
        "tool": f"loadfreq {__version__}",
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "network_hash": network_hash(net),
        "exponent_mode": "variance",
        "verified": "true" if verify else "false",
    }


def sweep_cost(net: PowerNetwork, alpha_values, mode: str = "scale",
               verify: bool = False) -> SweepResult:
    """Margin curve over controllable-load responsiveness.

    Parameters
    ----------
    alpha_values : iterable of float
        Strictly positive. In ``mode="scale"`` each value multiplies every
        controllable bus's alpha; in ``mode="absolute"`` it replaces it.
    verify : bool
        Cross-check every feasible point against the moment-generator
        bisection (slow); a disagreement above 1e-6 relative raises.
    """
    if mode not in ("scale", "absolute"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    values = [float(v) for v in alpha_values]
    if any(v <= 0 for v in values):
        raise ValueError("alpha values must be > 0")
    controllable = tuple(b.id for b in net.buses if b.cost_coeff > 0)
    if not controllable:
        raise ValueError("network has no controllable buses to sweep")
    points = []
    for v in sorted(values):
        buses = tuple(
            replace(b, cost_coeff=(b.cost_coeff * v if mode == "scale" else v))
            if b.id in controllable else b
            for b in net.buses)
        try:
            modified = PowerNetwork(buses=buses, lines=net.lines, scenario=net.scenario)
        except InvariantError:
            points.append(SweepPoint(value=v, sigma_star_sq=np.nan, rho=np.nan,
                                     dim_x=0, feasible=False))
            continue
        points.append(_evaluate(modified, v, verify))
    meta = _base_metadata(net, verify)
    meta["sweep"] = "cost"
    meta["mode"] = mode
    variable = "alpha_scale" if mode == "scale" else "alpha"
    units = "1" if mode == "scale" else "p.u. per rad/s"
    return SweepResult(variable=variable, units=units, points=tuple(points),
                       metadata=meta)


def _line_pair_set(pairs) -> set[tuple[int, int]]:
    out = set()
    for pair in pairs:
        i, j = int(pair[0]), int(pair[1])
        out.add((min(i, j), max(i, j)))
    return out


def sweep_penetration(net: PowerNetwork, line_sets, verify: bool = False) -> SweepResult:
    """Margin curve over growing sets of stochastic lines.

    ``line_sets`` is a list of line collections, each line an (id, id) pair.
    Sets are expected to be nested (each contains the previous); non-nested
    input is computed anyway but flagged with a warning and a metadata note,
    since the monotone-trend reading only applies to nested sets.
    """
    known = {ln.pair for ln in net.lines}
    sets = [_line_pair_set(pairs) for pairs in line_sets]
    for idx, pair_set in enumerate(sets):
        missing = sorted(pair_set - known)
        if missing:
            raise ValueError(f"set {idx}: unknown lines {missing}")
    nested = all(sets[i - 1] <= sets[i] for i in range(1, len(sets)))
    if not nested:
        warnings.warn("penetration sets are not nested; the monotone trend "
                      "assertion does not apply", stacklevel=2)
    points = []
    for pair_set in sorted(sets, key=len):
        lines = tuple(
            replace(ln, stochastic=ln.pair in pair_set,
                    sigma=ln.sigma if ln.pair in pair_set else None,
                    noise_index=None)
            for ln in net.lines)
        modified = PowerNetwork(buses=net.buses, lines=lines, scenario=net.scenario)
        points.append(_evaluate(modified, float(len(pair_set)), verify))
    meta = _base_metadata(net, verify)
    meta["sweep"] = "penetration"
    meta["nested"] = "true" if nested else "false"
    return SweepResult(variable="n_stochastic_lines", units="lines",
                       points=tuple(points), metadata=meta)


def _fmt(x: float) -> str:
    return repr(float(x))


def report(result: SweepResult, format: str = "csv") -> str:
    """Render a sweep as a document with a stable column order."""
    if format == "csv":
        lines = [f"# {k}: {v}" for k, v in result.metadata.items()]
        lines.append(f"# variable: {result.variable} [{result.units}]")
        lines.append(",".join((result.variable,) + _CSV_COLUMNS))
        for pt in result.points:
            lines.append(",".join([
                _fmt(pt.value), _fmt(pt.sigma_star_sq), _fmt(pt.rho),
                str(pt.dim_x), "true" if pt.feasible else "false",
                "" if pt.oracle_rel_err is None else _fmt(pt.oracle_rel_err),
            ]))
        return "\n".join(lines) + "\n"
    if format == "text":
        head = f"{result.variable:>18}  {'sigma_star_sq':>16}  {'rho':>16}  {'dim_x':>5}  ok"
        rows = [head, "-" * len(head)]
        for pt in result.points:
            rows.append(f"{pt.value:>18.6g}  {pt.sigma_star_sq:>16.8g}  "
                        f"{pt.rho:>16.8g}  {pt.dim_x:>5d}  "
                        f"{'yes' if pt.feasible else 'NO'}")
        return "\n".join(rows) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def parse_report_csv(text: str) -> SweepResult:
    """Inverse of :func:`report` for the CSV format."""
    metadata: dict = {}
    header: list[str] | None = None
    points: list[SweepPoint] = []
    variable = ""
    units = ""
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, val = body.split(":", 1)
                if key.strip() == "variable":
                    spec = val.strip()
                    variable = spec.split(" [")[0]
                    if "[" in spec:
                        units = spec[spec.index("[") + 1:].rstrip("]")
                else:
                    metadata[key.strip()] = val.strip()
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        rec = dict(zip(header, cells))
        err = rec.get("oracle_rel_err", "")
        points.append(SweepPoint(
            value=float(rec[header[0]]),
            sigma_star_sq=float(rec["sigma_star_sq"]),
            rho=float(rec["rho"]),
            dim_x=int(rec["dim_x"]),
            feasible=rec["feasible"] == "true",
            oracle_rel_err=None if err == "" else float(err),
        ))
    if header is None:
        raise ValueError("no header row found")
    return SweepResult(variable=variable or header[0], units=units,
                       points=tuple(points), metadata=metadata)
