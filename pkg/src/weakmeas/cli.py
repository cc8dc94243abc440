"""Command line front end.

Subcommands:

- ``trajectory``: one trajectory, JSON summary plus optional per-step table.
- ``ensemble``: trajectory ensemble, JSON summary plus optional histogram table.
- ``ydist``: analytic distribution of the running average, as a table.
- ``disturbance``: disturbance against target statistical error, as a table.
- ``saturation``: accuracy saturation curve, as a table.
- ``povm-check``: quadrature residual of the completeness identity, as JSON.
- ``resources``: weak-vs-projective repetition comparison, as JSON.
- ``selftest``: run the pinned verification criteria.

Tables default to CSV with 17 significant digits (round-trip exact for
doubles); ``--format json`` emits the same rows as a JSON array.  Every JSON
summary embeds the fully resolved configuration.  ``--figure PATH`` renders a
matplotlib figure next to the table output.  Exit codes: 0 on success, 2 on
invalid configuration or arguments, 3 when the selftest finds a failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analytics import (
    average_distribution,
    disturbance_curve,
    disturbance_strong_limit,
    disturbance as disturbance_at,
    required_weak_repetitions,
    saturation_ratio,
    spectral_spread,
    statistical_error,
)
from .config import ConfigError, RunConfig, load_config_file
from .core import Spectrum, ApparatusConfig, povm_completeness_residual
from .trajectories import run_ensemble, run_trajectory, trajectory_stream

__all__ = ["main", "entry", "build_parser"]


def _num(value) -> str:
    return "%.17g" % float(value)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return _num(value)


def _jsonable(value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    return float(value)


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit_table(path: str | None, header: list[str], rows, fmt: str) -> None:
    if fmt == "json":
        payload = [dict(zip(header, (_jsonable(v) for v in row)))
                   for row in rows]
        _write_text(path, json.dumps(payload, indent=2) + "\n")
        return
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    _write_text(path, "\n".join(lines) + "\n")


def _emit_json(path: str | None, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2) + "\n")


def _complex_pairs(values) -> list[list[float]]:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values).ravel()]


def _matrix_pairs(matrix) -> list[list[list[float]]]:
    return [_complex_pairs(row) for row in np.asarray(matrix)]


def _float_list(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated list of numbers, got {text!r}") from exc


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected a comma-separated list of integers, got {text!r}") from exc


_OVERRIDE_KEYS = ("delta_p", "max_steps", "trajectories", "master_seed",
                  "convergence_tol", "bins", "early_stop", "workers", "format")


def _resolve_config(ns: argparse.Namespace) -> RunConfig:
    cfg = load_config_file(ns.config) if ns.config else RunConfig()
    updates = {}
    if getattr(ns, "spectrum", None) is not None:
        updates["spectrum"] = ns.spectrum
    if getattr(ns, "amplitudes", None) is not None:
        updates["amplitudes"] = tuple(complex(v) for v in ns.amplitudes)
        updates["probabilities"] = None
    if getattr(ns, "probabilities", None) is not None:
        updates["probabilities"] = ns.probabilities
        if "amplitudes" not in updates:
            updates["amplitudes"] = None
    for key in _OVERRIDE_KEYS:
        value = getattr(ns, key, None)
        if value is not None:
            updates[key] = value
    from dataclasses import replace

    return replace(cfg, **updates).validate()


def _system_flags(parser: argparse.ArgumentParser) -> None:
    grp = parser.add_argument_group("system")
    grp.add_argument("--config", metavar="FILE",
                     help="JSON config file; flags override its entries")
    grp.add_argument("--spectrum", type=_csv_floats, metavar="S1,S2,...",
                     help="observable eigenvalues (distinct)")
    grp.add_argument("--amplitudes", type=_csv_floats, metavar="A1,A2,...",
                     help="real amplitudes, normalized for you; use the "
                          "config file for complex [re, im] pairs")
    grp.add_argument("--probabilities", type=_csv_floats, metavar="W1,W2,...",
                     help="Born weights (zero phases), alternative to "
                          "--amplitudes")
    grp.add_argument("--delta-p", dest="delta_p", type=float,
                     help="pointer spread")


def _run_flags(parser: argparse.ArgumentParser, *, steps=True, ensemble=False):
    grp = parser.add_argument_group("run")
    if steps:
        grp.add_argument("--max-steps", dest="max_steps", type=int,
                         help="readings per trajectory (default 1000)")
        grp.add_argument("--convergence-tol", dest="convergence_tol",
                         type=float,
                         help="early-stop threshold on 1 - max weight "
                              "(default 1e-6)")
        grp.add_argument("--early-stop", dest="early_stop",
                         action=argparse.BooleanOptionalAction, default=None,
                         help="stop once the state settles on an eigenstate "
                              "(default on)")
    if ensemble:
        grp.add_argument("--trajectories", type=int,
                         help="ensemble size (default 1000)")
        grp.add_argument("--bins", type=int,
                         help="histogram bin count (default 101)")
        grp.add_argument("--workers", type=int,
                         help="worker processes; statistics are bitwise "
                              "identical for any count (default 1)")
    grp.add_argument("--master-seed", dest="master_seed", type=int,
                     help="run seed; falls back to the SEED environment "
                          "variable, then 0")


def _output_flags(parser: argparse.ArgumentParser, *, table: str | None,
                  summary=False, figure=True) -> None:
    grp = parser.add_argument_group("output")
    if table is not None:
        grp.add_argument("--out", metavar="FILE",
                         help=f"write the {table} table here ('-' or omit "
                              "for stdout where noted)")
        grp.add_argument("--format", choices=("csv", "json"),
                         help="table format (default csv)")
    if summary:
        grp.add_argument("--summary", metavar="FILE",
                         help="write the JSON summary here instead of stdout")
    if figure:
        grp.add_argument("--figure", metavar="FILE",
                         help="render a matplotlib figure to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakmeas",
        description="Repeated weak measurements on a single system copy: "
                    "trajectory simulation and closed-form checks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trajectory", help="simulate one trajectory")
    _system_flags(p)
    _run_flags(p)
    p.add_argument("--stream-index", dest="stream_index", type=int, default=0,
                   help="trajectory index within the seed's ensemble "
                        "(default 0)")
    _output_flags(p, table="per-step", summary=True)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("ensemble", help="simulate a trajectory ensemble")
    _system_flags(p)
    _run_flags(p, ensemble=True)
    _output_flags(p, table="histogram", summary=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("ydist",
                       help="analytic running-average distribution")
    _system_flags(p)
    p.add_argument("--max-steps", dest="max_steps", type=int,
                   help="readings entering the average (default 1000)")
    p.add_argument("--points", type=int, default=2048,
                   help="grid resolution (default 2048)")
    _output_flags(p, table="distribution", summary=True)
    p.set_defaults(func=cmd_ydist)

    p = sub.add_parser("disturbance",
                       help="disturbance vs. target statistical error")
    _system_flags(p)
    p.add_argument("--max-steps", dest="max_steps", type=int,
                   help="readings for the reference point (default 1000)")
    p.add_argument("--epsilons", type=_csv_floats, metavar="E1,E2,...",
                   help="explicit error grid; overrides the range flags")
    p.add_argument("--eps-min", dest="eps_min", type=float,
                   help="smallest target error (default min gap / 50)")
    p.add_argument("--eps-max", dest="eps_max", type=float,
                   help="largest target error (default 5x spectral span)")
    p.add_argument("--eps-points", dest="eps_points", type=int, default=200,
                   help="geometric grid size (default 200)")
    _output_flags(p, table="disturbance", summary=True)
    p.set_defaults(func=cmd_disturbance)

    p = sub.add_parser("saturation", help="accuracy saturation curve")
    p.add_argument("--config", metavar="FILE",
                   help="JSON config file (only format is used here)")
    p.add_argument("--f-values", dest="f_values", type=_csv_floats,
                   metavar="F1,F2,...",
                   help="explicit truncation points; overrides the range flags")
    p.add_argument("--f-max", dest="f_max", type=float, default=3.0,
                   help="largest truncation point (default 3)")
    p.add_argument("--f-points", dest="f_points", type=int, default=301,
                   help="grid size (default 301)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--figure", metavar="FILE")
    p.set_defaults(func=cmd_saturation)

    p = sub.add_parser("povm-check",
                       help="completeness residual of the pointer operators")
    _system_flags(p)
    p.add_argument("--quad-points", dest="quad_points", type=int, default=8192,
                   help="trapezoid points, at least 4096 (default 8192)")
    p.add_argument("--out", metavar="FILE",
                   help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_povm_check)

    p = sub.add_parser("resources",
                       help="weak readings needed to match projective accuracy")
    _system_flags(p)
    p.add_argument("--delta-s", dest="delta_s", type=float,
                   help="spectral spread; computed from the state if omitted")
    p.add_argument("--strong-repetitions", dest="strong_repetitions", type=int,
                   required=True, help="projective readings to match")
    p.add_argument("--out", metavar="FILE",
                   help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_resources)

    p = sub.add_parser("selftest", help="run the pinned verification criteria")
    p.add_argument("--only", type=_csv_ints, metavar="N1,N2,...",
                   help="criterion numbers to run (default: all)")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for ensemble criteria (results are "
                        "identical for any count)")
    p.set_defaults(func=cmd_selftest)

    return parser


def cmd_trajectory(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    state, app = cfg.build_system()
    seed = cfg.seed()
    keep = bool(ns.out or ns.figure)
    rec = run_trajectory(state, app, cfg.max_steps, cfg.convergence_tol,
                         trajectory_stream(seed, ns.stream_index),
                         early_stop=cfg.early_stop, keep_outcomes=keep,
                         seed_id=ns.stream_index)
    if ns.out:
        outs = rec.outcomes.outcomes
        running = np.cumsum(outs) / np.arange(1, outs.size + 1)
        rows = [(i + 1, float(outs[i]), float(running[i]))
                for i in range(outs.size)]
        _emit_table(ns.out, ["step", "outcome", "running_average"], rows,
                    cfg.format)
    if ns.figure:
        from . import plotting

        plotting.save_running_average(rec, state.spectrum.eigenvalues,
                                      ns.figure)
    summary = {
        "command": "trajectory",
        "config": cfg.resolved(state, app) | {"stream_index": ns.stream_index},
        "results": {
            "steps_taken": rec.steps_taken,
            "converged": rec.converged,
            "terminal_index": rec.terminal_index,
            "terminal_fidelity": rec.terminal_fidelity,
            "average": rec.average,
            "first_outcome": rec.first_outcome,
            "sufficient_stats": {"count": rec.outcomes.count,
                                 "total": rec.outcomes.total},
            "final_probabilities": _float_list(rec.final_state.probabilities),
            "final_amplitudes": _complex_pairs(rec.final_state.amplitudes),
        },
    }
    _emit_json(ns.summary, summary)
    return 0


def cmd_ensemble(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    state, app = cfg.build_system()
    seed = cfg.seed()
    stats = run_ensemble(state, app, cfg.trajectories, cfg.max_steps,
                         cfg.convergence_tol, seed, bins=cfg.bins,
                         early_stop=cfg.early_stop, workers=cfg.workers)
    analytic = None
    if stats.tv_distance is not None:
        analytic = average_distribution(state, app, cfg.max_steps)
        analytic_masses = analytic.bin_masses(stats.bin_edges)
    if ns.out:
        rows = []
        for k in range(stats.counts.size):
            rows.append((
                float(stats.bin_edges[k]), float(stats.bin_edges[k + 1]),
                int(stats.counts[k]), float(stats.empirical_masses[k]),
                None if analytic is None else float(analytic_masses[k])))
        _emit_table(ns.out,
                    ["bin_left", "bin_right", "count", "empirical_mass",
                     "analytic_mass"], rows, cfg.format)
    if ns.figure:
        from . import plotting

        plotting.save_histogram(stats, analytic, ns.figure)
    terminal = None
    if stats.unconverged == 0:
        from .trajectories import terminal_frequencies

        tf = terminal_frequencies(stats)
        terminal = {"frequencies": _float_list(tf.frequencies),
                    "chi_square": tf.chi_square, "p_value": tf.p_value,
                    "dof": tf.dof}
    summary = {
        "command": "ensemble",
        "config": cfg.resolved(state, app),
        "results": {
            "trajectories": stats.trajectories,
            "mean_average": stats.mean_average,
            "mean_steps": stats.mean_steps,
            "first_outcome_mean": stats.first_outcome_mean,
            "tv_distance": stats.tv_distance,
            "unconverged": stats.unconverged,
            "terminal_counts": [int(c) for c in stats.terminal_counts],
            "terminal": terminal,
            "born_weights": _float_list(stats.born_weights),
            "mean_final_density": _matrix_pairs(stats.mean_final_density.entries),
            "final_density_sem": [
                _float_list(row) for row in stats.final_density_sem],
        },
    }
    _emit_json(ns.summary, summary)
    return 0


def cmd_ydist(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    state, app = cfg.build_system()
    if ns.points < 2:
        raise ConfigError("points must be at least 2")
    dist = average_distribution(state, app, cfg.max_steps, points=ns.points)
    rows = list(zip((float(x) for x in dist.grid),
                    (float(y) for y in dist.density)))
    _emit_table(ns.out, ["average", "density"], rows, cfg.format)
    if ns.figure:
        from . import plotting

        plotting.save_distribution(dist, ns.figure)
    if ns.summary or ns.out:
        summary = {
            "command": "ydist",
            "config": cfg.resolved(state, app) | {"points": ns.points},
            "results": {
                "sigma": dist.sigma,
                "mean": dist.mean(),
                "variance": dist.variance(),
                "grid_normalization": dist.normalization(),
            },
        }
        # summary goes to --summary, or to stdout once the table moved to a file
        _emit_json(ns.summary if ns.summary else None, summary)
    return 0


def cmd_disturbance(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    state, app = cfg.build_system()
    if ns.epsilons is not None:
        eps = np.asarray(ns.epsilons, dtype=float)
        if np.any(eps <= 0.0):
            raise ConfigError("epsilons must be positive")
    else:
        lo = ns.eps_min if ns.eps_min is not None else state.spectrum.min_gap / 50.0
        span = float(state.spectrum.eigenvalues.max()
                     - state.spectrum.eigenvalues.min())
        hi = ns.eps_max if ns.eps_max is not None else 5.0 * span
        if ns.eps_points < 2:
            raise ConfigError("eps-points must be at least 2")
        if not 0.0 < lo < hi:
            raise ConfigError("need 0 < eps-min < eps-max")
        eps = np.geomspace(lo, hi, ns.eps_points)
    points = disturbance_curve(state, eps)
    rows = [(pt.epsilon, pt.disturbance) for pt in points]
    _emit_table(ns.out, ["epsilon", "disturbance"], rows, cfg.format)
    if ns.figure:
        from . import plotting

        plotting.save_disturbance_curve(
            [pt.epsilon for pt in points], [pt.disturbance for pt in points],
            disturbance_strong_limit(state), ns.figure)
    eps_run = statistical_error(app, cfg.max_steps)
    summary = {
        "command": "disturbance",
        "config": cfg.resolved(state, app),
        "results": {
            "strong_limit": disturbance_strong_limit(state),
            "epsilon_at_max_steps": eps_run,
            "disturbance_at_max_steps": disturbance_at(state, eps_run),
        },
    }
    if ns.summary:
        _emit_json(ns.summary, summary)
    elif ns.out:
        _emit_json(None, summary)
    return 0


def cmd_saturation(ns: argparse.Namespace) -> int:
    cfg = load_config_file(ns.config) if ns.config else RunConfig()
    fmt = ns.format if ns.format is not None else cfg.format
    if ns.f_values is not None:
        f_grid = np.asarray(ns.f_values, dtype=float)
        if np.any(f_grid < 0.0):
            raise ConfigError("truncation points must be non-negative")
    else:
        if ns.f_max <= 0.0 or ns.f_points < 2:
            raise ConfigError("need f-max > 0 and f-points >= 2")
        f_grid = np.linspace(0.0, ns.f_max, ns.f_points)
    ratios = [saturation_ratio(float(f)) for f in f_grid]
    rows = list(zip((float(f) for f in f_grid), ratios))
    _emit_table(ns.out, ["f", "saturation_ratio"], rows, fmt)
    if ns.figure:
        from . import plotting

        plotting.save_saturation_curve(f_grid, ratios, ns.figure)
    return 0


def cmd_povm_check(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    if cfg.spectrum is None:
        raise ConfigError("spectrum is required (e.g. --spectrum 1,-1)")
    if cfg.delta_p is None:
        raise ConfigError("delta_p is required (e.g. --delta-p 10)")
    try:
        spectrum = Spectrum(cfg.spectrum)
        app = ApparatusConfig(float(cfg.delta_p))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if ns.quad_points < 4096:
        raise ConfigError("quad-points must be at least 4096")
    residual = povm_completeness_residual(spectrum, app, ns.quad_points)
    payload = {
        "command": "povm-check",
        "config": {
            "spectrum": _float_list(spectrum.eigenvalues),
            "delta_p": app.delta_p,
            "quad_points": ns.quad_points,
        },
        "results": {"residual": residual},
    }
    _emit_json(ns.out, payload)
    return 0


def cmd_resources(ns: argparse.Namespace) -> int:
    cfg = _resolve_config(ns)
    if cfg.delta_p is None:
        raise ConfigError("delta_p is required (e.g. --delta-p 10)")
    if ns.delta_s is not None:
        delta_s = float(ns.delta_s)
        system = {"delta_p": float(cfg.delta_p), "delta_s": delta_s}
    else:
        state, app = cfg.build_system()
        delta_s = spectral_spread(state)
        system = cfg.resolved(state, app) | {"delta_s": delta_s}
    weak = required_weak_repetitions(float(cfg.delta_p), delta_s,
                                     ns.strong_repetitions)
    payload = {
        "command": "resources",
        "config": system | {"strong_repetitions": ns.strong_repetitions},
        "results": {
            "weak_repetitions": weak,
            "weak_per_strong": weak / ns.strong_repetitions,
        },
    }
    _emit_json(ns.out, payload)
    return 0


def cmd_selftest(ns: argparse.Namespace) -> int:
    from .acceptance import run_criteria

    if ns.workers < 1:
        raise ConfigError("workers must be at least 1")
    results = run_criteria(ns.only, workers=ns.workers)
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"criterion {res.number:>2} {status}  {res.title}  "
              f"[{res.duration:.1f}s]")
        for line in res.details:
            print(f"    {line}")
    passed = sum(res.passed for res in results)
    print(f"passed {passed} of {len(results)} criteria")
    return 0 if passed == len(results) else 3


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
