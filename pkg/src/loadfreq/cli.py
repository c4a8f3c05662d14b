"""Command-line interface.

Subcommands mirror the pipeline: ``olc`` (welfare optimum), ``model``
(assembled matrices), ``reduce`` (subspace split), ``analyze`` (stability
margin), ``moments`` (moment-ODE trajectories), ``oracle`` (margin
cross-validation), ``simulate`` (Monte Carlo), ``sweep-cost`` and
``sweep-penetration`` (margin curves).

Exit codes: 0 success; 2 infeasible model or sweep point (structurally valid
input that admits no analysis); 1 any other error, including malformed
documents and failed verification.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .experiments import report, sweep_cost, sweep_penetration
from .moments import (critical_variance_bisect, hurwitz_oracle,
                      propagate_moments, steady_state_covariance)
from .msstab import analyze
from .netmodel import (InvariantError, SchemaError, network_hash,
                       parse_network_file)
from .olc import solve_olc
from .reduction import ReductionError, reduce_model
from .sde import (SimConfig, StepDisturbance, path_noise_increments,
                  realized_voltage_product, simulate_ensemble, simulate_paths)
from .sysbuild import assemble

_ORACLE_RTOL = 1e-6


def _fmt(x) -> str:
    return repr(float(x))


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _parse_deltas(pairs: list[str]) -> dict[int, float]:
    out: dict[int, float] = {}
    for item in pairs:
        if "=" not in item:
            raise SchemaError(f"--step-delta expects BUS=VALUE, got {item!r}")
        bus, val = item.split("=", 1)
        out[int(bus)] = float(val)
    return out


def _cmd_olc(args) -> int:
    net = parse_network_file(args.network)
    sol = solve_olc(net)
    print(f"nu_star = {sol.nu_star!r}")
    print(f"objective = {sol.objective!r}")
    if sol.bounds_active:
        print("warning: closed-form optimum violates declared load bounds "
              "(simulation clips, analysis does not)")
    print(f"{'bus':>5} {'d':>24} {'d_hat':>24}")
    for bus_id, d, dh in zip(sol.bus_ids, sol.d, sol.d_hat):
        print(f"{bus_id:>5} {_fmt(d):>24} {_fmt(dh):>24}")
    if args.csv:
        lines = ["bus,d,d_hat"]
        lines += [f"{i},{_fmt(d)},{_fmt(dh)}"
                  for i, d, dh in zip(sol.bus_ids, sol.d, sol.d_hat)]
        lines += [f"# nu_star: {sol.nu_star!r}", f"# objective: {sol.objective!r}"]
        _write_text(args.csv, "\n".join(lines) + "\n")
    return 0


def _matrix_block(name: str, mat: np.ndarray) -> list[str]:
    lines = [f"# block: {name}"]
    mat = np.atleast_2d(mat)
    for row in mat:
        lines.append(",".join(_fmt(x) for x in row))
    return lines


def _cmd_model(args) -> int:
    net = parse_network_file(args.network)
    model = assemble(net)
    print(f"buses: {model.n} (generators {model.n_g}, loads {model.n_l})")
    print(f"lines: {model.p} (stochastic {model.s})")
    print(f"state dimension: {model.dim}")
    print(f"equilibrium frequency block: {np.array2string(model.u_star[:model.n_g], precision=8)}")
    if args.csv:
        lines: list[str] = []
        lines += _matrix_block("A", model.a)
        lines += _matrix_block("b", model.b)
        lines += _matrix_block("u_star", model.u_star)
        lines += _matrix_block("Cbar", model.cbar)
        lines += _matrix_block("Gbar", model.gbar)
        lines += _matrix_block("sigma", model.sigma)
        lines += _matrix_block("noise_rows", model.noise_rows.astype(float))
        _write_text(args.csv, "\n".join(lines) + "\n")
    return 0


def _cmd_reduce(args) -> int:
    net = parse_network_file(args.network)
    model = assemble(net)
    red = reduce_model(model)
    cycles = net.p - net.n + 1
    abscissa = float(np.max(np.real(np.linalg.eigvals(red.acal))))
    print(f"state dimension: {model.dim}")
    print(f"null-space dimension: {red.dim_null} (graph cycle count {cycles})")
    print(f"reduced dimension: {red.dim_x}")
    print(f"reduced drift spectral abscissa: {abscissa!r}")
    print(f"max |G_k|: {float(np.max(np.abs(red.g))) if red.s else 0.0!r}")
    return 0


def _cmd_analyze(args) -> int:
    net = parse_network_file(args.network)
    red = reduce_model(assemble(net))
    rep = analyze(red, sigma_sq=args.sigma_sq, exponent_mode=args.exponent_mode,
                  method=args.method)
    print(f"stochastic channels: {rep.s}")
    print(f"reduced dimension: {rep.dim_x}")
    print(f"rho(Ghat) = {rep.rho!r}")
    print(f"sigma_star_sq = {rep.sigma_star_sq!r}  (exponent_mode={rep.exponent_mode})")
    if rep.mss is not None:
        print(f"mean-square stable at sigma_sq={args.sigma_sq!r}: {'yes' if rep.mss else 'NO'}")
    for note in rep.notes:
        print(f"note: {note}")
    if args.csv:
        lines = [f"# rho: {rep.rho!r}", f"# sigma_star_sq: {rep.sigma_star_sq!r}",
                 f"# exponent_mode: {rep.exponent_mode}"]
        lines += _matrix_block("Ghat", rep.ghat)
        _write_text(args.csv, "\n".join(lines) + "\n")
    return 0


def _cmd_moments(args) -> int:
    net = parse_network_file(args.network)
    model = assemble(net)
    red = reduce_model(model)
    if args.from_equilibrium:
        mu0 = np.zeros(red.dim_x)
    else:
        # deviation of the flat (all-zero) state from the equilibrium
        mu0 = red.v_range.T @ (-model.u_star)
    s0 = np.outer(mu0, mu0)
    traj = propagate_moments(red, mu0, s0, t_end=args.t_end, dt=args.dt,
                             sigma_sq=args.sigma_sq)
    traces = traj.traces
    mu_norm = np.linalg.norm(traj.mean, axis=1)
    print(f"moment trajectory: {len(traj.times)} samples to t = {traj.times[-1]:g}")
    print(f"final trace: {_fmt(traces[-1])}")
    if args.steady:
        s_inf = steady_state_covariance(red, sigma_sq=args.sigma_sq)
        print(f"steady-state trace: {float(np.trace(s_inf))!r}")
    if args.csv:
        lines = ["time,trace_second,mu_norm"]
        lines += [f"{_fmt(t)},{_fmt(tr)},{_fmt(mn)}"
                  for t, tr, mn in zip(traj.times, traces, mu_norm)]
        _write_text(args.csv, "\n".join(lines) + "\n")
    if args.plot:
        from .plots import save_moments_plot
        save_moments_plot(traj, args.plot)
        print(f"figure written to {args.plot}")
    return 0


def _cmd_oracle(args) -> int:
    net = parse_network_file(args.network)
    red = reduce_model(assemble(net))
    rep = analyze(red)
    bisected = critical_variance_bisect(red, rel_tol=args.rel_tol,
                                        max_dim=args.max_dim)
    print(f"sigma_star_sq (H2 route)       = {rep.sigma_star_sq!r}")
    print(f"sigma_star_sq (bisection route) = {bisected!r}")
    if args.sigma_sq is not None:
        absc = hurwitz_oracle(red, args.sigma_sq, max_dim=args.max_dim)
        print(f"moment-generator abscissa at sigma_sq={args.sigma_sq!r}: {absc!r}")
    if np.isinf(rep.sigma_star_sq) and np.isinf(bisected):
        rel = 0.0
    else:
        rel = abs(bisected - rep.sigma_star_sq) / rep.sigma_star_sq
    print(f"relative difference = {rel!r}")
    if not rel <= _ORACLE_RTOL:
        print(f"FAIL: routes disagree beyond {_ORACLE_RTOL:g}", file=sys.stderr)
        return 1
    print("routes agree")
    return 0


def _ensemble_csv(stats, echo: dict) -> str:
    lines = [f"# {k}: {v}" for k, v in echo.items()]
    cols = ["time", "mean_norm", "second_moment", "second_moment_halfwidth",
            "freq_min", "freq_max", "n_live"]
    has_proj = stats.proj_second_moment is not None
    if has_proj:
        cols += ["proj_second_moment", "proj_second_moment_halfwidth"]
    lines.append(",".join(cols))
    mean_norm = np.linalg.norm(stats.mean, axis=1)
    for i, t in enumerate(stats.times):
        row = [_fmt(t), _fmt(mean_norm[i]), _fmt(stats.second_moment[i]),
               _fmt(stats.second_moment_halfwidth[i]), _fmt(stats.freq_min[i]),
               _fmt(stats.freq_max[i]), str(int(stats.n_live[i]))]
        if has_proj:
            row += [_fmt(stats.proj_second_moment[i]),
                    _fmt(stats.proj_second_moment_halfwidth[i])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _cmd_simulate(args) -> int:
    net = parse_network_file(args.network)
    model = assemble(net)
    step = None
    if args.step_at is not None or args.step_delta:
        if args.step_at is None:
            raise SchemaError("--step-delta requires --step-at")
        step = StepDisturbance.from_mapping(args.step_at, _parse_deltas(args.step_delta))
    elif not args.no_step and net.scenario.power_step_time is not None:
        step = StepDisturbance.from_mapping(net.scenario.power_step_time,
                                            net.scenario.delta_map())
    projector = None
    if args.reduced_stats:
        projector = reduce_model(model).v_range.T
    cfg = SimConfig(
        dt=args.dt, t_end=args.t_end, n_paths=args.paths, seed=args.seed,
        sigma_override=None if args.sigma_sq is None else float(np.sqrt(args.sigma_sq)),
        step_disturbance=step, record_stride=args.record_stride,
        saturation=args.saturation, threads=args.threads,
        u0=np.zeros(model.dim) if args.from_rest else None,
        projector=projector)
    stats = simulate_ensemble(model, cfg)
    echo = {
        "network_hash": network_hash(net),
        "paths": str(cfg.n_paths), "dt": _fmt(cfg.dt), "t_end": _fmt(cfg.t_end),
        "seed": str(cfg.seed), "record_stride": str(cfg.record_stride),
        "saturation": str(cfg.saturation).lower(),
        "sigma_override": "" if cfg.sigma_override is None else _fmt(cfg.sigma_override),
        "diverged_paths": str(len(stats.diverged)),
    }
    text = _ensemble_csv(stats, echo)
    if args.csv:
        _write_text(args.csv, text)
    else:
        sys.stdout.write(text)
    if stats.diverged:
        print(f"warning: {len(stats.diverged)} path(s) diverged", file=sys.stderr)
    if args.dump_paths:
        times, traj = simulate_paths(model, cfg, range(min(args.dump_count, cfg.n_paths)))
        lines = ["path,time," + ",".join(f"u{i}" for i in range(model.dim))]
        for p in range(traj.shape[0]):
            for r, t in enumerate(times):
                lines.append(f"{p},{_fmt(t)}," + ",".join(_fmt(x) for x in traj[p, r]))
        _write_text(args.dump_paths, "\n".join(lines) + "\n")
    if args.voltage_trace:
        if model.s == 0:
            raise InvariantError("no stochastic lines: no voltage trace to emit")
        incr = path_noise_increments(model, cfg, 0)
        sigma = model.sigma if cfg.sigma_override is None else \
            np.full(model.s, cfg.sigma_override)
        samples = realized_voltage_product(sigma[None, :], incr, cfg.dt)
        lines = ["# per-step normalized voltage-product samples (discretization"
                 " artifact: 1 + sigma*dW/sqrt(dt), path 0)"]
        lines.append("time," + ",".join(f"link{k + 1}" for k in range(model.s)))
        for i in range(samples.shape[0]):
            lines.append(_fmt(i * cfg.dt) + "," + ",".join(_fmt(x) for x in samples[i]))
        _write_text(args.voltage_trace, "\n".join(lines) + "\n")
    if args.plot:
        from .plots import save_ensemble_plot
        save_ensemble_plot(stats, args.plot)
        print(f"figure written to {args.plot}", file=sys.stderr)
    return 0


def _finish_sweep(result, args) -> int:
    text = report(result, "text" if args.text else "csv")
    if args.csv:
        _write_text(args.csv, report(result, "csv"))
        if args.text:
            sys.stdout.write(text)
    else:
        sys.stdout.write(text)
    if args.plot:
        from .plots import save_sweep_plot
        save_sweep_plot(result, args.plot)
        print(f"figure written to {args.plot}", file=sys.stderr)
    if any(not pt.feasible for pt in result.points):
        print("warning: sweep contains infeasible points", file=sys.stderr)
        return 2
    return 0


def _cmd_sweep_cost(args) -> int:
    net = parse_network_file(args.network)
    values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    result = sweep_cost(net, values, mode=args.mode, verify=args.verify)
    return _finish_sweep(result, args)


def _cmd_sweep_penetration(args) -> int:
    net = parse_network_file(args.network)
    with open(args.sets_file, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "sets" not in doc:
        raise SchemaError("sets file must be a JSON object with a 'sets' key")
    result = sweep_penetration(net, doc["sets"], verify=args.verify)
    return _finish_sweep(result, args)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadfreq",
        description="Stochastic stability analysis of load-side frequency control")
    parser.add_argument("--version", action="version", version=f"loadfreq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("network", help="network document (JSON)")
        p.set_defaults(func=func)
        return p

    p = add("olc", _cmd_olc, "closed-form optimal load control")
    p.add_argument("--csv", help="write per-bus solution CSV ('-' for stdout)")

    p = add("model", _cmd_model, "assemble the closed-loop state space")
    p.add_argument("--csv", help="write matrix blocks as CSV")

    add("reduce", _cmd_reduce, "split off the cycle-space null directions")

    p = add("analyze", _cmd_analyze, "mean-square stability margin")
    p.add_argument("--sigma-sq", type=float, help="classify this common noise variance")
    p.add_argument("--exponent-mode", choices=["variance", "stddev"], default="variance")
    p.add_argument("--method", choices=["auto", "direct", "schur"], default="auto")
    p.add_argument("--csv", help="write Ghat and summary as CSV")

    p = add("moments", _cmd_moments, "integrate the moment ODEs")
    p.add_argument("--t-end", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--sigma-sq", type=float, default=None,
                   help="uniform noise variance (default: per-line sigmas)")
    p.add_argument("--from-equilibrium", action="store_true",
                   help="start from zero deviation instead of the flat state")
    p.add_argument("--steady", action="store_true", help="also print the stationary trace")
    p.add_argument("--csv", help="write the trajectory as CSV")
    p.add_argument("--plot", help="render the trajectory to this image file")

    p = add("oracle", _cmd_oracle, "cross-validate the margin against the moment generator")
    p.add_argument("--sigma-sq", type=float, help="also report the abscissa here")
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--max-dim", type=int, default=64)

    p = add("simulate", _cmd_simulate, "Monte Carlo the stochastic closed loop")
    p.add_argument("--sigma-sq", type=float, default=None,
                   help="override all channels with this common variance")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-stride", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--step-at", type=float, default=None, help="step disturbance time")
    p.add_argument("--step-delta", action="append", default=[], metavar="BUS=VALUE",
                   help="per-bus power step (repeatable)")
    p.add_argument("--no-step", action="store_true",
                   help="ignore any scenario step in the document")
    p.add_argument("--saturation", action="store_true", help="honor load bounds")
    p.add_argument("--from-rest", action="store_true",
                   help="start from the flat state instead of the equilibrium")
    p.add_argument("--reduced-stats", action="store_true",
                   help="add statistics of the reduced-space deviation")
    p.add_argument("--csv", help="write statistics CSV (default: stdout)")
    p.add_argument("--plot", help="render statistics to this image file")
    p.add_argument("--dump-paths", help="write the first --dump-count paths as CSV")
    p.add_argument("--dump-count", type=int, default=8)
    p.add_argument("--voltage-trace", help="write path-0 voltage-product samples as CSV")

    p = add("sweep-cost", _cmd_sweep_cost, "margin vs controllable-load responsiveness")
    p.add_argument("--values", required=True, help="comma-separated alpha values")
    p.add_argument("--mode", choices=["scale", "absolute"], default="scale")
    p.add_argument("--verify", action="store_true",
                   help="cross-check every point against the bisection oracle (slow)")
    p.add_argument("--csv", help="write the report to this file")
    p.add_argument("--text", action="store_true", help="print the text rendering")
    p.add_argument("--plot", help="render the curve to this image file")

    p = add("sweep-penetration", _cmd_sweep_penetration, "margin vs stochastic line count")
    p.add_argument("--sets-file", required=True,
                   help="JSON file: {\"sets\": [[[from,to], ...], ...]}")
    p.add_argument("--verify", action="store_true",
                   help="cross-check every point against the bisection oracle (slow)")
    p.add_argument("--csv", help="write the report to this file")
    p.add_argument("--text", action="store_true", help="print the text rendering")
    p.add_argument("--plot", help="render the curve to this image file")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, ReductionError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
