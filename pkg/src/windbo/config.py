"""Case configuration files (YAML) for the command-line runner.

A case file has these top-level keys::

    problem: wflo | benchmark
    method: switch-af | msp-only | mes-only | direct-de | direct-ga | direct-sa
    seed: 0
    output_dir: out
    benchmark: {function: ackley, d: 4}                          # problem: benchmark
    farm: {n_turbines, boundary, rose, cell, turbine: {...}, wake: {...}}   # problem: wflo
    bo: {n_initial, N_max, pop_size_monitor, epsilon1, epsilon2, switch_epsilon, K, ...}
    kriging: {p, theta_bounds, n_starts, ...}
    de_surrogate: {population_size, mutation, recombination, strategy, tolerance, max_generations}
    de_mes: {...}
    baseline: {budget}
    evaluator: {mode: in-process-wake | external-exchange, exchange_dir, poll_interval, timeout}

Relative file paths are resolved against the directory of the case file.
``boundary`` is a file path or ``square:<side_m>`` / ``circle:<diameter_m>``.
``turbine.curve: builtin`` selects the bundled NREL 5 MW tables.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .de import DeConfig
from .engine import BoConfig, Method
from .kriging import KrigingConfig
from .wake import WakeParams

__all__ = [
    "ConfigError",
    "TurbineConfig",
    "FarmConfig",
    "BenchmarkConfig",
    "EvaluatorBinding",
    "CaseConfig",
    "load_config",
    "loads_config",
    "dump_config",
]

METHODS = ("switch-af", "msp-only", "mes-only", "direct-de", "direct-ga", "direct-sa")
_BO_SCALARS = ("n_initial", "N_max", "pop_size_monitor", "epsilon1", "epsilon2", "switch_epsilon", "K",
               "initial_design", "oversample", "refit_growth", "refit_starts", "mutate_fraction",
               "mutation_probability", "mutation_radius", "snap_acquisition")


class ConfigError(ValueError):
    """Bad case file; the message names the file, line and field when known."""


@dataclass
class TurbineConfig:
    curve: str = "builtin"
    rotor_diameter: float = 126.0
    hub_height: float = 90.0
    cut_in: float = 3.0
    cut_out: float = 25.0
    rated_power: float = 5.0e6


@dataclass
class FarmConfig:
    n_turbines: int = 16
    boundary: str = "square:2268"
    rose: str = "builtin:rose_8state.txt"
    cell: Optional[float] = None
    turbine: TurbineConfig = field(default_factory=TurbineConfig)
    wake: WakeParams = field(default_factory=WakeParams)


@dataclass
class BenchmarkConfig:
    function: str = "ackley"
    d: int = 4


@dataclass
class EvaluatorBinding:
    mode: str = "in-process-wake"
    exchange_dir: str = "exchange"
    poll_interval: float = 0.5
    timeout: float = 1800.0

    def __post_init__(self):
        if self.mode not in ("in-process-wake", "external-exchange"):
            raise ValueError(f"unknown evaluator mode {self.mode!r}")
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be positive")
        if not self.timeout > self.poll_interval:
            raise ValueError("timeout must exceed poll_interval")


@dataclass
class CaseConfig:
    problem: str
    method: str = "switch-af"
    seed: int = 0
    output_dir: str = "out"
    benchmark: Optional[BenchmarkConfig] = None
    farm: Optional[FarmConfig] = None
    bo: BoConfig = field(default_factory=BoConfig)
    baseline_budget: Optional[int] = None
    evaluator: EvaluatorBinding = field(default_factory=EvaluatorBinding)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def budget(self) -> int:
        if self.method.startswith("direct-") and self.baseline_budget is not None:
            return self.baseline_budget
        return self.bo.N_max


def _node_lines(node, prefix="", out=None) -> Dict[str, int]:
    """Map dotted key paths to 1-based line numbers."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            _node_lines(v, key + ".", out)
    return out


class _Ctx:
    def __init__(self, source: str, lines: Dict[str, int]):
        self.source = source
        self.lines = lines

    def error(self, key: str, msg: str) -> ConfigError:
        line = self.lines.get(key)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: field '{key}': {msg}")


def _section(ctx: _Ctx, data: dict, key: str) -> dict:
    val = data.get(key) or {}
    if not isinstance(val, dict):
        raise ctx.error(key, "expected a mapping")
    return val


def _build(ctx: _Ctx, cls, data: dict, prefix: str, convert=None):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown keys."""
    names = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            raise ctx.error(f"{prefix}{k}", f"unknown key; expected one of {sorted(names)}")
        if convert and k in convert:
            try:
                v = convert[k](v)
            except (TypeError, ValueError) as exc:
                raise ctx.error(f"{prefix}{k}", str(exc)) from None
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ctx.error(prefix.rstrip(".") or cls.__name__, str(exc)) from None


def _pair(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError(f"expected a two-element list, got {v!r}")
    return (float(v[0]), float(v[1]))


def _num(kind):
    def conv(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"expected a number, got {v!r}")
        if kind is int and float(v) != int(v):
            raise ValueError(f"expected an integer, got {v!r}")
        return kind(v)
    return conv


def _flag(v):
    if not isinstance(v, bool):
        raise ValueError(f"expected true or false, got {v!r}")
    return v


_DE_CONV = {"population_size": _num(int), "mutation": _pair, "recombination": _num(float),
            "tolerance": _num(float), "max_generations": _num(int)}
_KRIG_CONV = {"p": _num(float), "theta_bounds": _pair, "n_starts": _num(int), "maxiter": _num(int),
              "nugget_start": _num(float), "nugget_max": _num(float), "duplicate_tol": _num(float)}
_BO_CONV = {"n_initial": _num(int), "N_max": _num(int), "pop_size_monitor": _num(int),
            "epsilon1": _num(float), "epsilon2": _num(float), "switch_epsilon": _num(float),
            "K": _num(int), "oversample": _num(int), "refit_growth": _num(float), "refit_starts": _num(int),
            "mutate_fraction": _num(float), "mutation_probability": _num(float),
            "mutation_radius": _num(float), "snap_acquisition": _flag}


def _check_file(ctx: _Ctx, key: str, value: str, base: Path) -> None:
    if value.startswith("builtin:") or value.startswith("square:") or value.startswith("circle:"):
        return
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise ctx.error(key, f"file not found: {p}")


def loads_config(text: str, source: str = "<string>", base_dir: Optional[Path] = None) -> CaseConfig:
    base = Path(base_dir) if base_dir is not None else Path(".")
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    ctx = _Ctx(source, _node_lines(node))
    known = {"problem", "method", "seed", "output_dir", "benchmark", "farm", "bo", "kriging",
             "de_surrogate", "de_mes", "baseline", "evaluator"}
    for k in data:
        if k not in known:
            raise ctx.error(k, f"unknown key; expected one of {sorted(known)}")

    problem = data.get("problem")
    if problem not in ("wflo", "benchmark"):
        raise ctx.error("problem", f"must be 'wflo' or 'benchmark', got {problem!r}")
    method = data.get("method", "switch-af")
    if method not in METHODS:
        raise ctx.error("method", f"must be one of {METHODS}, got {method!r}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ctx.error("seed", f"must be a nonnegative integer, got {seed!r}")
    output_dir = str(data.get("output_dir", "out"))

    benchmark = farm = None
    if problem == "benchmark":
        bsec = _section(ctx, data, "benchmark")
        benchmark = _build(ctx, BenchmarkConfig, bsec, "benchmark.", {"d": _num(int)})
        if benchmark.function != "ackley":
            raise ctx.error("benchmark.function", f"only 'ackley' is available, got {benchmark.function!r}")
        if benchmark.d < 1:
            raise ctx.error("benchmark.d", "must be at least 1")
    else:
        fsec = dict(_section(ctx, data, "farm"))
        tsec = fsec.pop("turbine", None) or {}
        wsec = fsec.pop("wake", None) or {}
        turbine = _build(ctx, TurbineConfig, tsec, "farm.turbine.",
                         {k: _num(float) for k in ("rotor_diameter", "hub_height", "cut_in", "cut_out",
                                                   "rated_power")})
        wake = _build(ctx, WakeParams, wsec, "farm.wake.",
                      {k: _num(float) for k in ("k_y", "k_z", "air_density")})
        farm = _build(ctx, FarmConfig, fsec, "farm.",
                      {"n_turbines": _num(int), "cell": lambda v: None if v is None else _num(float)(v),
                       "boundary": str, "rose": str})
        farm.turbine, farm.wake = turbine, wake
        _check_file(ctx, "farm.boundary", farm.boundary, base)
        _check_file(ctx, "farm.rose", farm.rose, base)
        if turbine.curve != "builtin":
            _check_file(ctx, "farm.turbine.curve", turbine.curve, base)

    kriging = _build(ctx, KrigingConfig, _section(ctx, data, "kriging"), "kriging.", _KRIG_CONV)
    de_s = _build(ctx, DeConfig, _section(ctx, data, "de_surrogate"), "de_surrogate.", _DE_CONV)
    de_m = _build(ctx, DeConfig, _section(ctx, data, "de_mes"), "de_mes.", _DE_CONV)
    bsec = _section(ctx, data, "bo")
    for k in bsec:
        if k not in _BO_SCALARS:
            raise ctx.error(f"bo.{k}", f"unknown key; expected one of {sorted(_BO_SCALARS)}")
    bo_kwargs = {}
    for k, v in bsec.items():
        try:
            bo_kwargs[k] = _BO_CONV[k](v) if k in _BO_CONV else v
        except ValueError as exc:
            raise ctx.error(f"bo.{k}", str(exc)) from None
    bo_method = method if method in ("switch-af", "msp-only", "mes-only") else "switch-af"
    try:
        bo = BoConfig(**bo_kwargs, kriging=kriging, de_surrogate=de_s, de_mes=de_m,
                      method=Method(bo_method), seed=seed)
    except (TypeError, ValueError) as exc:
        raise ctx.error("bo", str(exc)) from None

    baseline = _section(ctx, data, "baseline")
    for k in baseline:
        if k != "budget":
            raise ctx.error(f"baseline.{k}", "unknown key; expected 'budget'")
    baseline_budget = baseline.get("budget")
    if baseline_budget is not None:
        try:
            baseline_budget = _num(int)(baseline_budget)
        except ValueError as exc:
            raise ctx.error("baseline.budget", str(exc)) from None

    evaluator = _build(ctx, EvaluatorBinding, _section(ctx, data, "evaluator"), "evaluator.",
                       {"poll_interval": _num(float), "timeout": _num(float), "exchange_dir": str})
    if evaluator.mode == "external-exchange" and problem != "wflo":
        raise ctx.error("evaluator.mode", "external evaluation applies to wflo problems only")

    return CaseConfig(problem=problem, method=method, seed=seed, output_dir=output_dir,
                      benchmark=benchmark, farm=farm, bo=bo, baseline_budget=baseline_budget,
                      evaluator=evaluator, base_dir=base)


def load_config(path) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return loads_config(text, str(path), path.parent)


def _plain(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if hasattr(obj, "value") and isinstance(obj, str):
        return obj.value
    return obj


def to_dict(cfg: CaseConfig) -> dict:
    out: Dict[str, Any] = {"problem": cfg.problem, "method": cfg.method, "seed": cfg.seed,
                           "output_dir": cfg.output_dir}
    if cfg.benchmark is not None:
        out["benchmark"] = _plain(cfg.benchmark)
    if cfg.farm is not None:
        out["farm"] = _plain(cfg.farm)
    bo = cfg.bo
    out["bo"] = {k: _plain(getattr(bo, k)) for k in _BO_SCALARS}
    out["kriging"] = _plain(bo.kriging)
    out["de_surrogate"] = _plain(bo.de_surrogate)
    out["de_mes"] = _plain(bo.de_mes)
    if cfg.baseline_budget is not None:
        out["baseline"] = {"budget": cfg.baseline_budget}
    out["evaluator"] = _plain(cfg.evaluator)
    return out


def dump_config(cfg: CaseConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)
