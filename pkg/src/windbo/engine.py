"""Bayesian optimization loop with the MSP -> MES acquisition switch."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np

from .acquisition import (
    Phase,
    YStarPool,
    mes_batch,
    msp_batch,
    sample_ystars,
    switch_check,
)
from .de import DeConfig, SeededInitPlan, de_optimize
from .kriging import Dataset, FitError, KrigingConfig, KrigingModel, fit
from .sampling import DesignSpace, constrained_lhs, standard_lhs

logger = logging.getLogger(__name__)

__all__ = [
    "Method",
    "BoConfig",
    "PenaltyConfig",
    "BoRunState",
    "BoResult",
    "HistoryEntry",
    "Terminated",
    "EngineError",
    "penalized",
    "penalty_factor",
    "variance_criterion",
    "run_bo",
    "TraceWriter",
]

DUPLICATE_L1 = 1e-9


class Method(str, enum.Enum):
    SWITCH = "switch-af"
    MSP = "msp-only"
    MES = "mes-only"


class Terminated(str, enum.Enum):
    BUDGET = "budget"
    VARIANCE = "variance"
    MES = "mes-threshold"
    NONE = "none"


class EngineError(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class PenaltyConfig:
    """Penalty factor ``lambda = 1 / (1 + v / scale)`` for constraint violation ``v``.

    ``mode="multiplicative"`` returns ``lambda * f`` (objectives known to be
    positive, e.g. AEP). ``mode="additive"`` returns
    ``f - (1 - lambda) * range_estimate`` which also worsens negative values.
    """

    scale: float = 1.0
    mode: str = "multiplicative"
    range_estimate: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("penalty scale must be positive")
        if self.mode not in ("multiplicative", "additive"):
            raise ValueError(f"unknown penalty mode {self.mode!r}")


def penalty_factor(violation, scale: float) -> np.ndarray:
    v = np.asarray(violation, dtype=float)
    return 1.0 / (1.0 + v / scale)


def _apply_penalty(values, lam, penalty: PenaltyConfig):
    if penalty.mode == "multiplicative":
        return lam * values
    return values - (1.0 - lam) * penalty.range_estimate


def penalized(objective: Callable, space: DesignSpace, penalty: Optional[PenaltyConfig] = None,
              vectorized: bool = False) -> Callable:
    """Wrap ``objective`` so constraint violations lower its value."""
    penalty = penalty or PenaltyConfig()

    if vectorized:
        def wrapped_batch(X):
            X = np.atleast_2d(X)
            vals = np.asarray(objective(X), dtype=float)
            lam = penalty_factor(space.violations(X), penalty.scale)
            return np.where(lam < 1.0, _apply_penalty(vals, lam, penalty), vals)
        return wrapped_batch

    def wrapped(x):
        val = float(objective(x))
        lam = float(penalty_factor(space.violations(np.asarray(x)[None, :])[0], penalty.scale))
        return val if lam >= 1.0 else float(_apply_penalty(val, lam, penalty))
    return wrapped


def variance_criterion(y, n: int, epsilon1: float = 0.1):
    """Population standard deviation of the ``n`` largest values, and whether it is <= epsilon1.

    When fewer than ``n`` values exist all of them form the elite.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("variance criterion needs at least one value")
    top = np.sort(y)[::-1][: min(n, y.size)]
    var = float(np.std(top))
    return var, bool(var <= epsilon1)


def _de_surrogate_default():
    return DeConfig(strategy="best1bin", tolerance=1e-3)


def _de_mes_default():
    return DeConfig(strategy="best2bin", tolerance=1e-15)


@dataclass
class BoConfig:
    n_initial: int = 160
    N_max: int = 1000
    pop_size_monitor: int = 20
    epsilon1: float = 0.1
    epsilon2: float = 1e-4
    switch_epsilon: float = 0.0
    K: int = 10
    de_surrogate: DeConfig = field(default_factory=_de_surrogate_default)
    de_mes: DeConfig = field(default_factory=_de_mes_default)
    kriging: KrigingConfig = field(default_factory=KrigingConfig)
    method: Method = Method.SWITCH
    initial_design: str = "constrained"
    oversample: int = 20
    refit_growth: float = 1.1
    refit_starts: int = 1
    mutate_fraction: float = 0.5
    mutation_probability: float = 0.3
    mutation_radius: float = 0.1
    snap_acquisition: bool = False
    seed: int = 0

    def __post_init__(self):
        self.method = Method(self.method)
        if self.n_initial < 2:
            raise ValueError("n_initial must be at least 2")
        if self.N_max < self.n_initial:
            raise ValueError("N_max must be at least n_initial")
        if self.epsilon1 < 0 or self.epsilon2 < 0:
            raise ValueError("epsilon1 and epsilon2 must be nonnegative")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.initial_design not in ("standard", "constrained"):
            raise ValueError("initial_design must be 'standard' or 'constrained'")


@dataclass
class HistoryEntry:
    iteration: int
    point: np.ndarray
    raw: float
    penalized: float
    phase: str
    af_value: float
    feasible: bool = True


@dataclass
class BoRunState:
    dataset: Dataset
    phase: Phase = Phase.MSP
    evals: int = 0
    history: list = field(default_factory=list)
    terminated_by: Terminated = Terminated.NONE
    raw: list = field(default_factory=list)
    feasible: list = field(default_factory=list)
    model: Optional[KrigingModel] = None
    switched_at: Optional[int] = None
    best_trace: list = field(default_factory=list)
    pool: Optional[YStarPool] = None


@dataclass
class BoResult:
    x: np.ndarray
    fun: float
    state: BoRunState
    wall_time: float = 0.0


class TraceWriter:
    """Append one line per evaluation: ``eval_index phase x... raw penalized best_so_far``."""

    def __init__(self, stream: TextIO):
        self.stream = stream

    @staticmethod
    def fmt(v: float) -> str:
        return format(float(v), ".17g")

    def write(self, index: int, phase: str, x, raw: float, pen: float, best: float) -> None:
        coords = " ".join(self.fmt(c) for c in np.ravel(x))
        self.stream.write(f"{index} {phase} {coords} {self.fmt(raw)} {self.fmt(pen)} {self.fmt(best)}\n")
        self.stream.flush()


def _seed(config: BoConfig, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(config.seed), *keys]))


def run_bo(objective: Callable, space: DesignSpace, config: Optional[BoConfig] = None, *,
           penalty: Optional[PenaltyConfig] = None,
           canonicalize: Optional[Callable] = None,
           canonicalize_many: Optional[Callable] = None,
           discrete: bool = False,
           trace: Optional[TraceWriter] = None,
           callback: Optional[Callable[[BoRunState], None]] = None) -> BoResult:
    """Maximize an expensive ``objective`` over ``space``.

    Parameters
    ----------
    objective : callable
        ``f(x) -> float`` on a single point; treated as deterministic.
    space : DesignSpace
        Box plus optional constraint. Infeasible points are scored through
        :func:`penalized`.
    config : BoConfig
    penalty : PenaltyConfig, optional
    canonicalize : callable, optional
        Maps a proposed point onto the representation actually evaluated and
        stored (e.g. snapping turbine coordinates to grid cells).
    canonicalize_many : callable, optional
        Row-wise batch version of ``canonicalize``; used to score acquisition
        functions on canonical points when ``config.snap_acquisition`` is set.
    discrete : bool
        Duplicate proposals are then detected by exact equality instead of an
        L1 tolerance.
    trace : TraceWriter, optional
        Receives one line per evaluation as soon as it completes.
    callback : callable, optional
        Called with the run state after every infill.
    """
    config = config or BoConfig()
    penalty = penalty or PenaltyConfig()
    canon = canonicalize or (lambda x: np.asarray(x, dtype=float))
    t0 = time.perf_counter()

    if config.initial_design == "standard" or not space.constrained:
        X0 = standard_lhs(space, config.n_initial, _seed(config, 0)).points
    else:
        X0 = constrained_lhs(space, config.n_initial, config.oversample * config.n_initial,
                             _seed(config, 0)).points
    X0 = np.vstack([canon(x) for x in X0])

    state = BoRunState(dataset=Dataset(np.empty((0, space.dim)), np.empty(0)))
    state.phase = Phase.MES if config.method == Method.MES else Phase.MSP
    best = -np.inf

    def record(x, phase_label, af_value, iteration):
        nonlocal best
        try:
            raw = float(objective(x))
        except Exception as exc:
            raise EngineError(f"evaluation {state.evals + 1} failed: {exc}", state) from exc
        feas = bool(space.feasible(x))
        lam = 1.0 if feas else float(penalty_factor(space.violations(x[None, :])[0], penalty.scale))
        pen = raw if lam >= 1.0 else float(_apply_penalty(raw, lam, penalty))
        state.dataset.append(x, pen)
        state.raw.append(raw)
        state.feasible.append(feas)
        state.evals += 1
        best = max(best, pen)
        state.best_trace.append(best)
        state.history.append(HistoryEntry(iteration, x.copy(), raw, pen, phase_label, af_value, feas))
        if trace is not None:
            trace.write(state.evals, phase_label, x, raw, pen, best)

    for x in X0:
        if _is_duplicate(x, state.dataset.X, discrete):
            continue
        record(x, "INIT", float("nan"), 0)
        if state.evals >= config.N_max:
            break

    theta = None
    n_at_opt = 0
    iteration = 0
    while True:
        if state.evals >= config.N_max:
            state.terminated_by = Terminated.BUDGET
            break
        _, triggered = variance_criterion(state.dataset.y, config.pop_size_monitor, config.epsilon1)
        if triggered:
            state.terminated_by = Terminated.VARIANCE
            break
        iteration += 1

        reopt = theta is None or len(state.dataset) >= config.refit_growth * n_at_opt
        try:
            if theta is None:
                model = fit(state.dataset, space, config.kriging, seed=_seed(config, iteration, 1))
            elif reopt:
                kcfg = _with_starts(config.kriging, config.refit_starts)
                model = fit(state.dataset, space, kcfg, seed=_seed(config, iteration, 1), theta0=theta)
            else:
                model = fit(state.dataset, space, config.kriging, theta0=theta, optimize=False)
        except (FitError, np.linalg.LinAlgError) as exc:
            raise EngineError(f"surrogate fit failed at iteration {iteration}: {exc}", state) from exc
        if reopt:
            theta, n_at_opt = model.theta.copy(), len(state.dataset)
        state.model = model

        ib = int(np.argmax(state.dataset.y))
        plan = SeededInitPlan(random_fraction=1.0 - config.mutate_fraction,
                              mutate_fraction=config.mutate_fraction,
                              incumbent=state.dataset.X[ib],
                              mutation_probability=config.mutation_probability,
                              mutation_radius=config.mutation_radius)
        yrange = float(np.ptp(model.y_norm)) or 1.0
        msp_penalty = PenaltyConfig(scale=penalty.scale, mode="additive", range_estimate=yrange)
        if config.snap_acquisition and canonicalize_many is not None:
            on_grid = canonicalize_many
        elif config.snap_acquisition and canonicalize is not None:
            def on_grid(P):
                return np.vstack([canon(p) for p in np.atleast_2d(P)])
        else:
            def on_grid(P):
                return P
        msp_obj = penalized(lambda P: msp_batch(model, on_grid(P)), space, msp_penalty, vectorized=True)

        pool = sample_ystars(model, space, config.de_surrogate, config.K,
                             seed=np.random.SeedSequence([int(config.seed), iteration, 2]),
                             init=plan, objective=msp_obj)
        state.pool = pool
        msp_run = pool.runs[pool.best_index]
        x_msp = canon(msp_run.x)

        if state.phase == Phase.MSP and config.method == Method.SWITCH:
            if switch_check(x_msp, state.dataset.X, config.switch_epsilon):
                state.phase = Phase.MES
                state.switched_at = iteration
                logger.info("switching to MES at iteration %d (evals=%d)", iteration, state.evals)

        if state.phase == Phase.MSP:
            x_new = x_msp
            af_val = float(msp_run.fun)
            if _is_duplicate(x_new, state.dataset.X, discrete):
                x_new = _fallback(pool.runs, state.dataset.X, canon, discrete, space, plan,
                                  _seed(config, iteration, 3))
        else:
            mes_plan = plan
            mes_obj = penalized(lambda P: mes_batch(model, on_grid(P), pool, exact=False), space,
                                PenaltyConfig(scale=penalty.scale, mode="multiplicative"), vectorized=True)
            mes_run = de_optimize(mes_obj, space, config.de_mes, mes_plan, vectorized=True,
                                  seed=_seed(config, iteration, 4))
            af_val = float(mes_run.fun)
            if af_val < config.epsilon2:
                state.terminated_by = Terminated.MES
                break
            x_new = canon(mes_run.x)
            if _is_duplicate(x_new, state.dataset.X, discrete):
                x_new = _fallback([mes_run], state.dataset.X, canon, discrete, space, plan,
                                  _seed(config, iteration, 3))

        if _is_duplicate(x_new, state.dataset.X, discrete):
            raise EngineError(f"duplicate infill proposal at iteration {iteration}", state)
        record(x_new, state.phase.value, af_val, iteration)
        if callback is not None:
            callback(state)

    y_raw = np.asarray(state.raw)
    feas = np.asarray(state.feasible, dtype=bool)
    if np.any(feas):
        idx = np.flatnonzero(feas)[int(np.argmax(y_raw[feas]))]
        best_val = float(y_raw[idx])
    else:
        idx = int(np.argmax(state.dataset.y))
        best_val = float(state.dataset.y[idx])
    return BoResult(state.dataset.X[idx].copy(), best_val, state, time.perf_counter() - t0)


def _with_starts(cfg: KrigingConfig, n_starts: int) -> KrigingConfig:
    from dataclasses import replace
    return replace(cfg, n_starts=n_starts)


def _is_duplicate(x, X, discrete: bool) -> bool:
    if X.shape[0] == 0:
        return False
    dist = np.abs(X - x).sum(axis=1)
    if discrete:
        return bool(np.any(dist == 0.0))
    return bool(np.any(dist <= DUPLICATE_L1))


def _fallback(runs, X, canon, discrete, space, plan, rng):
    """Best-scoring DE population member that is not already a sample."""
    pops = np.vstack([r.population for r in runs])
    energies = np.concatenate([r.energies for r in runs])
    seen = X
    for i in np.argsort(-energies, kind="stable"):
        cand = canon(pops[i])
        if not _is_duplicate(cand, seen, discrete):
            return cand
    # whole population collapsed onto known samples: random mutation of the incumbent
    from .de import _mutate_incumbent
    for _ in range(1000):
        cand = canon(_mutate_incumbent(space, plan, 1, rng)[0])
        if not _is_duplicate(cand, seen, discrete):
            return cand
    for _ in range(1000):
        cand = canon(constrained_lhs(space, 1, seed=rng).points[0])
        if not _is_duplicate(cand, seen, discrete):
            break
    return cand
