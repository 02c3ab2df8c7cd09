"""Command-line entry point: ``windbo run|validate|replay|serve``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import (AckleyConfig, Problem, ackley, ackley_bo_defaults, de_baseline,
                         ga_baseline, sa_baseline)
from .cases import data_path
from .config import CaseConfig, ConfigError, load_config
from .engine import EngineError, PenaltyConfig, TraceWriter, run_bo
from .exchange import ExchangeError, ExternalEvaluator, serve, wake_solver
from .layout import WindFarmCase, circle_boundary, load_boundary, square_boundary
from .wake import load_rose, load_turbine_curve, nrel_5mw

logger = logging.getLogger("windbo")

__all__ = ["main", "build_case", "build_problem", "run_case", "replay_trace", "ReplayError"]


class ReplayError(ValueError):
    pass


def _data_file(cfg: CaseConfig, value: str) -> Path:
    if value.startswith("builtin:"):
        return data_path(value.split(":", 1)[1])
    return cfg.resolve(value)


def build_case(cfg: CaseConfig) -> WindFarmCase:
    farm = cfg.farm
    t = farm.turbine
    if t.curve == "builtin":
        turbine = nrel_5mw()
    else:
        turbine = load_turbine_curve(cfg.resolve(t.curve), t.rotor_diameter, t.hub_height, t.cut_in,
                                     t.cut_out, t.rated_power)
    rose = load_rose(_data_file(cfg, farm.rose))
    b = farm.boundary
    if b.startswith("square:"):
        boundary = square_boundary(float(b.split(":", 1)[1]))
    elif b.startswith("circle:"):
        boundary = circle_boundary(float(b.split(":", 1)[1]))
    else:
        boundary = load_boundary(_data_file(cfg, b))
    return WindFarmCase.build(farm.n_turbines, turbine, rose, boundary, farm.wake, farm.cell, name="farm")


def build_problem(cfg: CaseConfig):
    """The problem to maximize, plus the wind-farm case for layout problems (else None)."""
    if cfg.problem == "benchmark":
        acfg = AckleyConfig(d=cfg.benchmark.d)
        return Problem(f"ackley-{acfg.d}d", lambda x: -float(ackley(x, acfg)), acfg.space(), sense=-1.0,
                       bo_defaults=ackley_bo_defaults(acfg.d)), None
    case = build_case(cfg)
    if cfg.evaluator.mode == "external-exchange":
        ev = ExternalEvaluator(cfg.resolve(cfg.evaluator.exchange_dir), case.rose,
                               cfg.evaluator.poll_interval, cfg.evaluator.timeout)

        def objective(vec):
            return ev.aep(case.snap(vec).xy) / 1e9
    else:
        objective = case.aep_gwh
    return Problem("farm", objective, case.design_space(), canonicalize=case.canonicalize,
                   canonicalize_many=case.canonicalize_many, discrete=True,
                   penalty=PenaltyConfig(scale=case.turbine.rotor_diameter)), case


def _write_layout(path: Path, case: WindFarmCase, vec) -> None:
    layout = case.snap(vec)
    with open(path, "w") as fh:
        fh.write("turbine_id x_m y_m cell_ix cell_iy\n")
        for i, ((x, y), (ix, iy)) in enumerate(zip(layout.xy, layout.cells)):
            fh.write(f"{i} {format(x, '.17g')} {format(y, '.17g')} {ix} {iy}\n")


def _write_summary(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, float):
                v = format(v, ".17g")
            fh.write(f"{k} {v}\n")


def run_case(cfg: CaseConfig, out_dir: Optional[Path] = None) -> int:
    """Run one case and write ``trace.txt``, ``summary.txt`` and (layouts) ``layout.txt``.

    Returns the process exit status.
    """
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem, case = build_problem(cfg)
    t0 = time.perf_counter()
    summary = {"method": cfg.method, "seed": cfg.seed}
    status = 0
    with open(out / "trace.txt", "w") as fh:
        tw = TraceWriter(fh)
        try:
            if cfg.method in ("switch-af", "msp-only", "mes-only"):
                res = run_bo(problem.objective, problem.space, cfg.bo, penalty=problem.penalty,
                             canonicalize=problem.canonicalize, canonicalize_many=problem.canonicalize_many,
                             discrete=problem.discrete, trace=tw)
                best_x, best = res.x, res.fun
                summary.update(terminated_by=res.state.terminated_by.value, evals=res.state.evals,
                               switched_at=res.state.switched_at if res.state.switched_at is not None else "-")
            else:
                label = cfg.method.split("-", 1)[1].upper()

                def on_eval(i, x, val, best_so_far):
                    tw.write(i, label, x, val, val, best_so_far)

                fn = {"direct-de": de_baseline, "direct-ga": ga_baseline, "direct-sa": sa_baseline}[cfg.method]
                kwargs = {"config": cfg.bo.de_surrogate} if cfg.method == "direct-de" else {}
                r = fn(problem.objective, problem.space, cfg.budget, seed=cfg.seed,
                       canonicalize=problem.canonicalize, on_eval=on_eval, **kwargs)
                best_x, best = r.x, r.fun
                summary.update(terminated_by="budget", evals=r.nfev)
        except (EngineError, ExchangeError) as exc:
            state = getattr(exc, "state", None)
            summary.update(status="failed", error=str(exc).replace("\n", " "),
                           evals=state.evals if state is not None else "-")
            status = 1
            best_x, best = None, float("nan")
    summary["best"] = float(problem.report(best)) if best_x is not None else "-"
    summary["wall_time_s"] = round(time.perf_counter() - t0, 3)
    summary.setdefault("status", "ok")
    if case is not None and best_x is not None:
        _write_layout(out / "layout.txt", case, best_x)
    _write_summary(out / "summary.txt", summary)
    return status


def replay_trace(path) -> tuple:
    """Recompute best-so-far from a trace; returns ``(rows, best)``.

    Raises :class:`ReplayError` on non-consecutive indices, ragged rows or a
    stored best-so-far that disagrees with the recomputed one.
    """
    best = -np.inf
    width = None
    n = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if width is None:
                width = len(parts)
            if len(parts) != width or width < 6:
                raise ReplayError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
            try:
                idx = int(parts[0])
                pen, stored = float(parts[-2]), float(parts[-1])
            except ValueError as exc:
                raise ReplayError(f"{path}:{lineno}: {exc}") from None
            n += 1
            if idx != n:
                raise ReplayError(f"{path}:{lineno}: evaluation index {idx}, expected {n}")
            best = max(best, pen)
            if stored != best:
                raise ReplayError(f"{path}:{lineno}: stored best {stored!r} differs from recomputed {best!r}")
    return n, best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="windbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a case file")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--output", help="output directory (overrides output_dir)")
    p_val = sub.add_parser("validate", help="parse a case file and check referenced files")
    p_val.add_argument("config")
    p_rep = sub.add_parser("replay", help="verify a trace file and print its best value")
    p_rep.add_argument("trace")
    p_srv = sub.add_parser("serve", help="answer external-evaluator requests with the wake model")
    p_srv.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            n, best = replay_trace(args.trace)
            print(f"ok rows {n} best {format(best, '.17g')}")
            return 0
        cfg = load_config(args.config)
        if args.command == "validate":
            if cfg.problem == "wflo":
                case = build_case(cfg)
                print(f"ok wflo turbines {case.n_turbines} cells {case.grid.capacity} states {len(case.rose)}")
            else:
                print(f"ok benchmark ackley d={cfg.benchmark.d}")
            return 0
        if args.command == "serve":
            case = build_case(cfg)
            directory = cfg.resolve(cfg.evaluator.exchange_dir)
            directory.mkdir(parents=True, exist_ok=True)
            serve(directory, wake_solver(case.turbine, case.wake), cfg.evaluator.poll_interval)
            return 0
        return run_case(cfg, Path(args.output) if args.output else None)
    except (ConfigError, ReplayError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
