"""Network data model: buses, lines, scenarios, and their linear-algebra views.

A network document is UTF-8 JSON with three top-level keys:

``buses``
    List of bus objects. Required keys: ``id`` (positive integer, unique),
    ``kind`` (``"generator"`` or ``"load"``), ``freq_damping`` (uncontrolled
    frequency-response coefficient, >= 0), ``cost_coeff`` (controllable-load
    responsiveness alpha, >= 0), ``power_step`` (injected power change, any
    sign), ``voltage_mag`` (> 0), ``phase0`` (operating-point phase, rad).
    Generators additionally require ``inertia`` (> 0); load buses must not
    carry one. Optional ``load_bounds`` is a pair ``[lo, hi]`` with
    lo <= 0 <= hi bounding the controllable load deviation.

``lines``
    List of line objects. Required keys: ``from``, ``to`` (existing bus ids,
    distinct), ``reactance`` (> 0). Optional ``stochastic`` (bool, default
    false) marks the line's effective susceptance as noise-driven, and
    ``sigma`` (>= 0) gives that line's noise intensity. ``sigma`` is only
    allowed on stochastic lines.

``scenario``
    Optional object with ``global_sigma`` (>= 0, overrides every per-line
    sigma when present), ``power_step_time`` (>= 0) and ``power_step_delta``
    (object mapping bus id to an additional power step applied at that time).

Structural problems (missing keys, wrong types, unknown keys) raise
:class:`SchemaError`; semantically invalid but well-formed documents raise
:class:`InvariantError`. Both derive from ``ValueError``.

Buses are kept sorted by id and lines by their unordered endpoint pair, so
every matrix built downstream has a reproducible row/column order. Stochastic
lines receive ``noise_index`` 1..s in that canonical line order.

The branch orientation convention: incidence entry +1 at ``from`` and -1 at
``to``, so a positive line flow moves power from ``from`` to ``to``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

import numpy as np

__all__ = [
    "SchemaError",
    "InvariantError",
    "Bus",
    "Line",
    "Scenario",
    "PowerNetwork",
    "parse_network",
    "parse_network_file",
    "serialize_network",
    "network_hash",
    "line_weight",
    "line_weights",
    "incidence_matrices",
    "apply_power_step",
]

GENERATOR = "generator"
LOAD = "load"

_BUS_REQUIRED = ("id", "kind", "freq_damping", "cost_coeff", "power_step",
                 "voltage_mag", "phase0")
_BUS_OPTIONAL = ("inertia", "load_bounds")
_LINE_REQUIRED = ("from", "to", "reactance")
_LINE_OPTIONAL = ("stochastic", "sigma")
_SCENARIO_KEYS = ("global_sigma", "power_step_time", "power_step_delta")


class SchemaError(ValueError):
    """Document structure is wrong: missing/unknown keys or bad types."""


class InvariantError(ValueError):
    """Document is well-formed but semantically invalid."""


def _require_number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{what} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise InvariantError(f"{what} must be finite, got {value!r}")
    return out


@dataclass(frozen=True)
class Bus:
    """One bus: identity, kind, and per-bus physical/control parameters."""

    id: int
    kind: str
    freq_damping: float      # uncontrolled response D-hat, >= 0
    cost_coeff: float        # controllable-load responsiveness alpha, >= 0
    power_step: float        # injected power change P^m
    voltage_mag: float
    phase0: float
    inertia: float | None = None          # generators only
    load_bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id <= 0:
            raise InvariantError(f"bus id must be a positive integer, got {self.id!r}")
        if self.kind not in (GENERATOR, LOAD):
            raise SchemaError(f"bus {self.id}: kind must be 'generator' or 'load', got {self.kind!r}")
        if self.freq_damping < 0:
            raise InvariantError(f"bus {self.id}: freq_damping must be >= 0")
        if self.cost_coeff < 0:
            raise InvariantError(f"bus {self.id}: cost_coeff must be >= 0")
        if self.voltage_mag <= 0:
            raise InvariantError(f"bus {self.id}: voltage_mag must be > 0")
        if self.kind == GENERATOR:
            if self.inertia is None or self.inertia <= 0:
                raise InvariantError(f"bus {self.id}: generator requires inertia > 0")
        elif self.inertia is not None:
            raise InvariantError(f"bus {self.id}: inertia is only valid on generator buses")
        if self.load_bounds is not None:
            lo, hi = self.load_bounds
            if not (lo <= 0.0 <= hi):
                raise InvariantError(
                    f"bus {self.id}: load_bounds must satisfy lo <= 0 <= hi, got ({lo}, {hi})")

    @property
    def is_generator(self) -> bool:
        return self.kind == GENERATOR

    @property
    def effective_damping(self) -> float:
        """Damping seen by the closed loop: uncontrolled plus controllable."""
        return self.freq_damping + self.cost_coeff


@dataclass(frozen=True)
class Line:
    """One transmission line, oriented from ``from_bus`` to ``to_bus``."""

    from_bus: int
    to_bus: int
    reactance: float
    stochastic: bool = False
    sigma: float | None = None
    noise_index: int | None = None   # 1-based, assigned by PowerNetwork

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise InvariantError(f"line ({self.from_bus}, {self.to_bus}): self-loops are not allowed")
        if self.reactance <= 0:
            raise InvariantError(
                f"line ({self.from_bus}, {self.to_bus}): reactance must be > 0")
        if self.sigma is not None:
            if not self.stochastic:
                raise InvariantError(
                    f"line ({self.from_bus}, {self.to_bus}): sigma is only valid on stochastic lines")
            if self.sigma < 0:
                raise InvariantError(
                    f"line ({self.from_bus}, {self.to_bus}): sigma must be >= 0")

    @property
    def pair(self) -> tuple[int, int]:
        """Unordered endpoint pair used for canonical sorting and uniqueness."""
        return (min(self.from_bus, self.to_bus), max(self.from_bus, self.to_bus))


@dataclass(frozen=True)
class Scenario:
    """Optional run-level settings carried with the network document."""

    global_sigma: float | None = None
    power_step_time: float | None = None
    power_step_delta: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.global_sigma is not None and self.global_sigma < 0:
            raise InvariantError("scenario: global_sigma must be >= 0")
        if self.power_step_time is not None and self.power_step_time < 0:
            raise InvariantError("scenario: power_step_time must be >= 0")

    def delta_map(self) -> dict[int, float]:
        return dict(self.power_step_delta) if self.power_step_delta else {}


@dataclass(frozen=True)
class PowerNetwork:
    """A validated network: canonically ordered buses and lines plus scenario.

    Construction sorts buses by id and lines by unordered endpoint pair,
    assigns ``noise_index`` 1..s to the stochastic lines in that order, and
    checks all cross-object invariants (unique ids, known endpoints, no
    duplicate lines, connectivity, at least one generator, positive effective
    damping on every load bus, and per-line phase spread below pi/2).
    """

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    scenario: Scenario = Scenario()

    def __post_init__(self) -> None:
        buses = tuple(sorted(self.buses, key=lambda b: b.id))
        ids = [b.id for b in buses]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvariantError(f"duplicate bus ids: {dupes}")
        if not any(b.is_generator for b in buses):
            raise InvariantError("network must contain at least one generator bus")
        id_set = set(ids)
        by_id = {b.id: b for b in buses}

        lines = sorted(self.lines, key=lambda ln: ln.pair)
        pairs = [ln.pair for ln in lines]
        if len(set(pairs)) != len(pairs):
            dupes = sorted({p for p in pairs if pairs.count(p) > 1})
            raise InvariantError(f"duplicate lines between bus pairs: {dupes}")
        for ln in lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in id_set:
                    raise InvariantError(f"line ({ln.from_bus}, {ln.to_bus}): unknown bus {end}")
            di = by_id[ln.from_bus].phase0 - by_id[ln.to_bus].phase0
            if abs(di) >= math.pi / 2:
                raise InvariantError(
                    f"line ({ln.from_bus}, {ln.to_bus}): phase spread {di:.4f} rad "
                    "is not below pi/2, line weight would not be positive")

        if len(buses) > 1:
            adj: dict[int, set[int]] = {i: set() for i in ids}
            for ln in lines:
                adj[ln.from_bus].add(ln.to_bus)
                adj[ln.to_bus].add(ln.from_bus)
            seen = {ids[0]}
            stack = [ids[0]]
            while stack:
                for nxt in adj[stack.pop()]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            if seen != id_set:
                missing = sorted(id_set - seen)
                raise InvariantError(f"network graph is disconnected, unreachable buses: {missing}")

        for b in buses:
            if not b.is_generator and b.effective_damping <= 0:
                raise InvariantError(f"bus {b.id}: load bus damping singular")

        k = 0
        renumbered = []
        for ln in lines:
            if ln.stochastic:
                k += 1
                renumbered.append(replace(ln, noise_index=k))
            else:
                renumbered.append(replace(ln, noise_index=None))

        if self.scenario.power_step_delta:
            for bus_id, _ in self.scenario.power_step_delta:
                if bus_id not in id_set:
                    raise InvariantError(f"scenario: power_step_delta references unknown bus {bus_id}")

        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", tuple(renumbered))

    # -- derived views -----------------------------------------------------

    @property
    def generator_buses(self) -> tuple[Bus, ...]:
        return tuple(b for b in self.buses if b.is_generator)

    @property
    def load_buses(self) -> tuple[Bus, ...]:
        return tuple(b for b in self.buses if not b.is_generator)

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def n_g(self) -> int:
        return len(self.generator_buses)

    @property
    def n_l(self) -> int:
        return len(self.load_buses)

    @property
    def p(self) -> int:
        return len(self.lines)

    @property
    def stochastic_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if ln.stochastic)

    @property
    def s(self) -> int:
        return len(self.stochastic_lines)

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(f"no bus with id {bus_id}")

    def noise_sigmas(self) -> np.ndarray:
        """Per-link noise intensities in noise-index order.

        ``scenario.global_sigma`` overrides every per-line value; otherwise a
        stochastic line without its own sigma contributes 0.
        """
        g = self.scenario.global_sigma
        out = []
        for ln in self.stochastic_lines:
            if g is not None:
                out.append(g)
            else:
                out.append(0.0 if ln.sigma is None else ln.sigma)
        return np.asarray(out, dtype=float)


def line_weight(vprod: float, reactance: float, phase_i: float, phase_j: float) -> float:
    """Linearized line stiffness 3 |V_i||V_j| cos(phase_i - phase_j) / X.

    Parameters
    ----------
    vprod : float
        Product of the endpoint voltage magnitudes |V_i| |V_j|.
    reactance : float
        Line reactance X > 0.
    phase_i, phase_j : float
        Operating-point phases of the ``from`` and ``to`` endpoints (rad).

    Returns
    -------
    float
        The positive weight entering the flow dynamics. Raises
        :class:`InvariantError` when the phase spread reaches pi/2 or the
        inputs make the weight non-positive.
    """
    if reactance <= 0:
        raise InvariantError("line_weight: reactance must be > 0")
    if vprod <= 0:
        raise InvariantError("line_weight: voltage product must be > 0")
    spread = phase_i - phase_j
    if abs(spread) >= math.pi / 2:
        raise InvariantError(f"line_weight: phase spread {spread:.4f} rad is not below pi/2")
    return 3.0 * vprod * math.cos(spread) / reactance


def line_weights(net: PowerNetwork) -> np.ndarray:
    """Vector of line weights in canonical line order."""
    by_id = {b.id: b for b in net.buses}
    out = np.empty(net.p)
    for k, ln in enumerate(net.lines):
        bi, bj = by_id[ln.from_bus], by_id[ln.to_bus]
        out[k] = line_weight(bi.voltage_mag * bj.voltage_mag, ln.reactance,
                             bi.phase0, bj.phase0)
    return out


def incidence_matrices(net: PowerNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Bus-line incidence split by bus kind.

    Returns
    -------
    (E_G, E_L) : ndarray, ndarray
        Shapes (n_g, p) and (n_l, p). Entry +1 where the bus is the line's
        ``from`` endpoint, -1 where it is the ``to`` endpoint, 0 otherwise.
        Rows follow the canonical (id-sorted) order within each kind, columns
        the canonical line order.
    """
    gen_row = {b.id: i for i, b in enumerate(net.generator_buses)}
    load_row = {b.id: i for i, b in enumerate(net.load_buses)}
    e_g = np.zeros((net.n_g, net.p))
    e_l = np.zeros((net.n_l, net.p))
    for k, ln in enumerate(net.lines):
        for end, sign in ((ln.from_bus, 1.0), (ln.to_bus, -1.0)):
            if end in gen_row:
                e_g[gen_row[end], k] = sign
            else:
                e_l[load_row[end], k] = sign
    return e_g, e_l


def apply_power_step(net: PowerNetwork, delta: Mapping[int, float]) -> PowerNetwork:
    """New network with ``delta[bus_id]`` added to each bus's power_step."""
    for bus_id in delta:
        if not any(b.id == bus_id for b in net.buses):
            raise InvariantError(f"power step references unknown bus {bus_id}")
    buses = tuple(
        replace(b, power_step=b.power_step + float(delta.get(b.id, 0.0)))
        for b in net.buses)
    return PowerNetwork(buses=buses, lines=net.lines, scenario=net.scenario)


# -- parsing / serialization ----------------------------------------------


def _check_keys(obj: dict, required: tuple[str, ...], optional: tuple[str, ...],
                what: str) -> None:
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"{what}: missing required keys {missing}")
    unknown = [k for k in obj if k not in required + optional]
    if unknown:
        raise SchemaError(f"{what}: unknown keys {unknown}")


def _parse_bus(obj: Any, pos: int) -> Bus:
    what = f"buses[{pos}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{what}: expected an object")
    _check_keys(obj, _BUS_REQUIRED, _BUS_OPTIONAL, what)
    raw_id = obj["id"]
    if isinstance(raw_id, bool) or not isinstance(raw_id, int):
        raise SchemaError(f"{what}: id must be an integer")
    kind = obj["kind"]
    if not isinstance(kind, str):
        raise SchemaError(f"{what}: kind must be a string")
    bounds = None
    if obj.get("load_bounds") is not None:
        raw = obj["load_bounds"]
        if not (isinstance(raw, list) and len(raw) == 2):
            raise SchemaError(f"{what}: load_bounds must be a pair [lo, hi]")
        bounds = (_require_number(raw[0], f"{what}.load_bounds[0]"),
                  _require_number(raw[1], f"{what}.load_bounds[1]"))
    inertia = None
    if obj.get("inertia") is not None:
        inertia = _require_number(obj["inertia"], f"{what}.inertia")
    return Bus(
        id=raw_id,
        kind=kind,
        freq_damping=_require_number(obj["freq_damping"], f"{what}.freq_damping"),
        cost_coeff=_require_number(obj["cost_coeff"], f"{what}.cost_coeff"),
        power_step=_require_number(obj["power_step"], f"{what}.power_step"),
        voltage_mag=_require_number(obj["voltage_mag"], f"{what}.voltage_mag"),
        phase0=_require_number(obj["phase0"], f"{what}.phase0"),
        inertia=inertia,
        load_bounds=bounds,
    )


def _parse_line(obj: Any, pos: int) -> Line:
    what = f"lines[{pos}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{what}: expected an object")
    _check_keys(obj, _LINE_REQUIRED, _LINE_OPTIONAL, what)
    for key in ("from", "to"):
        if isinstance(obj[key], bool) or not isinstance(obj[key], int):
            raise SchemaError(f"{what}: {key} must be an integer bus id")
    stochastic = obj.get("stochastic", False)
    if not isinstance(stochastic, bool):
        raise SchemaError(f"{what}: stochastic must be a boolean")
    sigma = None
    if obj.get("sigma") is not None:
        sigma = _require_number(obj["sigma"], f"{what}.sigma")
    return Line(
        from_bus=obj["from"],
        to_bus=obj["to"],
        reactance=_require_number(obj["reactance"], f"{what}.reactance"),
        stochastic=stochastic,
        sigma=sigma,
    )


def _parse_scenario(obj: Any) -> Scenario:
    if obj is None:
        return Scenario()
    if not isinstance(obj, dict):
        raise SchemaError("scenario: expected an object")
    _check_keys(obj, (), _SCENARIO_KEYS, "scenario")
    global_sigma = None
    if obj.get("global_sigma") is not None:
        global_sigma = _require_number(obj["global_sigma"], "scenario.global_sigma")
    step_time = None
    if obj.get("power_step_time") is not None:
        step_time = _require_number(obj["power_step_time"], "scenario.power_step_time")
    delta = None
    if obj.get("power_step_delta") is not None:
        raw = obj["power_step_delta"]
        if not isinstance(raw, dict):
            raise SchemaError("scenario.power_step_delta: expected an object keyed by bus id")
        items = []
        for key, val in raw.items():
            try:
                bus_id = int(key)
            except (TypeError, ValueError):
                raise SchemaError(f"scenario.power_step_delta: bad bus id key {key!r}") from None
            items.append((bus_id, _require_number(val, f"scenario.power_step_delta[{key}]")))
        delta = tuple(sorted(items))
    return Scenario(global_sigma=global_sigma, power_step_time=step_time,
                    power_step_delta=delta)


def parse_network(text: str) -> PowerNetwork:
    """Parse a network document (see module docstring for the format)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    _check_keys(doc, ("buses", "lines"), ("scenario",), "document")
    if not isinstance(doc["buses"], list) or not doc["buses"]:
        raise SchemaError("buses must be a non-empty list")
    if not isinstance(doc["lines"], list):
        raise SchemaError("lines must be a list")
    buses = tuple(_parse_bus(b, i) for i, b in enumerate(doc["buses"]))
    lines = tuple(_parse_line(ln, i) for i, ln in enumerate(doc["lines"]))
    scenario = _parse_scenario(doc.get("scenario"))
    return PowerNetwork(buses=buses, lines=lines, scenario=scenario)


def parse_network_file(path: str) -> PowerNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def _bus_to_obj(b: Bus) -> dict:
    obj: dict[str, Any] = {
        "id": b.id, "kind": b.kind, "freq_damping": b.freq_damping,
        "cost_coeff": b.cost_coeff, "power_step": b.power_step,
        "voltage_mag": b.voltage_mag, "phase0": b.phase0,
    }
    if b.inertia is not None:
        obj["inertia"] = b.inertia
    if b.load_bounds is not None:
        obj["load_bounds"] = list(b.load_bounds)
    return obj


def _line_to_obj(ln: Line) -> dict:
    obj: dict[str, Any] = {"from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance}
    if ln.stochastic:
        obj["stochastic"] = True
    if ln.sigma is not None:
        obj["sigma"] = ln.sigma
    return obj


def _scenario_to_obj(sc: Scenario) -> dict:
    obj: dict[str, Any] = {}
    if sc.global_sigma is not None:
        obj["global_sigma"] = sc.global_sigma
    if sc.power_step_time is not None:
        obj["power_step_time"] = sc.power_step_time
    if sc.power_step_delta is not None:
        obj["power_step_delta"] = {str(i): v for i, v in sc.power_step_delta}
    return obj


def _to_document(net: PowerNetwork) -> dict:
    doc: dict[str, Any] = {
        "buses": [_bus_to_obj(b) for b in net.buses],
        "lines": [_line_to_obj(ln) for ln in net.lines],
    }
    sc = _scenario_to_obj(net.scenario)
    if sc:
        doc["scenario"] = sc
    return doc


def serialize_network(net: PowerNetwork) -> str:
    """Canonical JSON for a network; ``parse_network`` round-trips it exactly."""
    return json.dumps(_to_document(net), indent=2) + "\n"


def network_hash(net: PowerNetwork) -> str:
    """Short stable content hash of the canonical serialization."""
    blob = json.dumps(_to_document(net), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
