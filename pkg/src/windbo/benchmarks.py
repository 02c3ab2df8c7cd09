"""Test objectives, heuristic baselines and a multi-seed experiment harness.

Every optimizer here maximizes. Minimization problems such as Ackley are
registered negated; reported values are converted back to the problem's own
sense.
"""

from __future__ import annotations

import enum
import logging
import time
import traceback
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, TextIO

import numpy as np

from .de import DeConfig, DeEvaluationError, de_optimize
from .kriging import KrigingConfig
from .engine import BoConfig, Method, PenaltyConfig, run_bo
from .sampling import DesignSpace, as_generator, constrained_lhs, standard_lhs

logger = logging.getLogger(__name__)

__all__ = [
    "AckleyConfig",
    "ackley",
    "BudgetExhausted",
    "CountingObjective",
    "BaselineResult",
    "GaConfig",
    "SaConfig",
    "ga_baseline",
    "sa_baseline",
    "de_baseline",
    "Problem",
    "register_problem",
    "get_problem",
    "ExperimentMethod",
    "ExperimentPlan",
    "RunRecord",
    "ExperimentResult",
    "run_experiment",
]


@dataclass(frozen=True)
class AckleyConfig:
    d: int = 4
    a: float = 20.0
    b: float = 0.2
    c: float = 2.0 * np.pi
    bound: float = 32.768

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("Ackley dimension must be at least 1")
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("Ackley constants a, b, c must be positive")

    def space(self) -> DesignSpace:
        return DesignSpace(np.full(self.d, -self.bound), np.full(self.d, self.bound))


def ackley(x, cfg: AckleyConfig = AckleyConfig()):
    """Ackley function; rows of a 2-D ``x`` are evaluated independently."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cfg.d:
        raise ValueError(f"expected {cfg.d} coordinates, got {x.shape[-1]}")
    r = np.sqrt(np.mean(x * x, axis=-1))
    s = np.mean(np.cos(cfg.c * x), axis=-1)
    return -cfg.a * np.exp(-cfg.b * r) - np.exp(s) + cfg.a + np.e


class BudgetExhausted(RuntimeError):
    pass


class CountingObjective:
    """Counts calls, records best-so-far after each one, and enforces a budget."""

    def __init__(self, objective: Callable, budget: Optional[int] = None,
                 on_eval: Optional[Callable] = None):
        self.objective = objective
        self.budget = budget
        self.on_eval = on_eval
        self.calls = 0
        self.best = -np.inf
        self.best_x = None
        self.trace: list = []

    def __call__(self, x) -> float:
        if self.budget is not None and self.calls >= self.budget:
            raise BudgetExhausted(f"budget of {self.budget} evaluations used up")
        x = np.asarray(x, dtype=float)
        val = float(self.objective(x))
        self.calls += 1
        if val > self.best:
            self.best, self.best_x = val, x.copy()
        self.trace.append(self.best)
        if self.on_eval is not None:
            self.on_eval(self.calls, x, val, self.best)
        return val

    @property
    def remaining(self) -> int:
        return np.inf if self.budget is None else self.budget - self.calls


@dataclass
class BaselineResult:
    x: np.ndarray
    fun: float
    nfev: int
    trace: list


def _initial_points(space: DesignSpace, n: int, rng) -> np.ndarray:
    if space.constrained:
        return constrained_lhs(space, n, seed=rng).points
    return standard_lhs(space, n, seed=rng).points


@dataclass
class GaConfig:
    """Generational GA. ``mutation_rate=None`` means ``1/d``; mutation steps are Gaussian with
    standard deviation ``mutation_scale`` times the axis span."""

    population_size: int = 70
    tournament: int = 3
    crossover: float = 0.9
    mutation_rate: Optional[float] = None
    mutation_scale: float = 0.1
    elitism: int = 1


def ga_baseline(objective: Callable, space: DesignSpace, budget: int, config: GaConfig = GaConfig(),
                seed=None, canonicalize: Optional[Callable] = None,
                on_eval: Optional[Callable] = None) -> BaselineResult:
    """Tournament selection, uniform crossover and per-gene Gaussian mutation.

    Makes exactly ``budget`` objective calls; the last generation is cut short
    if needed.
    """
    rng = as_generator(seed)
    canon = canonicalize or (lambda x: x)
    f = CountingObjective(objective, budget, on_eval)
    d = space.dim
    rate = 1.0 / d if config.mutation_rate is None else config.mutation_rate
    size = config.population_size
    pop = np.vstack([canon(x) for x in _initial_points(space, size, rng)])
    fit = np.full(size, -np.inf)
    try:
        for i in range(size):
            fit[i] = f(pop[i])
        while True:
            order = np.argsort(-fit, kind="stable")
            children = [pop[j].copy() for j in order[: config.elitism]]
            child_fit = [fit[j] for j in order[: config.elitism]]

            def pick():
                c = rng.integers(0, size, config.tournament)
                return pop[c[np.argmax(fit[c])]]

            while len(children) < size:
                a, b = pick(), pick()
                if rng.random() < config.crossover:
                    mask = rng.random(d) < 0.5
                    a, b = np.where(mask, a, b), np.where(mask, b, a)
                for child in (a, b):
                    if len(children) >= size:
                        break
                    mut = rng.random(d) < rate
                    child = np.where(mut, child + rng.normal(0.0, config.mutation_scale, d) * space.span, child)
                    child = canon(space.clip(child))
                    children.append(child)
                    child_fit.append(f(child))
            pop, fit = np.vstack(children), np.asarray(child_fit)
    except BudgetExhausted:
        pass
    return BaselineResult(f.best_x, f.best, f.calls, f.trace)


@dataclass
class SaConfig:
    """Simulated annealing with geometric cooling.

    ``initial_temperature=None`` sets it to the standard deviation of
    ``initial_samples`` random evaluations (these count toward the budget);
    ``0`` gives a greedy search. Each proposal moves ``move_fraction`` of the
    coordinates (at least one) by Gaussian steps of ``step`` times the span.
    """

    initial_temperature: Optional[float] = None
    cooling: float = 0.995
    step: float = 0.1
    move_fraction: float = 0.1
    initial_samples: int = 10


def sa_baseline(objective: Callable, space: DesignSpace, budget: int, config: SaConfig = SaConfig(),
                seed=None, canonicalize: Optional[Callable] = None,
                on_eval: Optional[Callable] = None) -> BaselineResult:
    rng = as_generator(seed)
    canon = canonicalize or (lambda x: x)
    f = CountingObjective(objective, budget, on_eval)
    d = space.dim
    k = max(1, int(round(config.move_fraction * d)))
    try:
        starts = [canon(x) for x in _initial_points(space, max(1, config.initial_samples), rng)]
        vals = [f(x) for x in starts]
        i0 = int(np.argmax(vals))
        x, fx = starts[i0], vals[i0]
        if config.initial_temperature is None:
            T = float(np.std(vals)) or 1.0
        else:
            T = float(config.initial_temperature)
        while True:
            idx = rng.choice(d, size=k, replace=False)
            cand = x.copy()
            cand[idx] += rng.normal(0.0, config.step, k) * space.span[idx]
            cand = canon(space.clip(cand))
            if not space.feasible(cand):
                continue
            fc = f(cand)
            if fc >= fx or (T > 0 and rng.random() < np.exp((fc - fx) / T)):
                x, fx = cand, fc
            T *= config.cooling
    except BudgetExhausted:
        pass
    return BaselineResult(f.best_x, f.best, f.calls, f.trace)


def de_baseline(objective: Callable, space: DesignSpace, budget: int, config: DeConfig = DeConfig(),
                seed=None, canonicalize: Optional[Callable] = None,
                on_eval: Optional[Callable] = None) -> BaselineResult:
    """Plain DE on the expensive objective, stopped after exactly ``budget`` calls."""
    canon = canonicalize or (lambda x: x)
    f = CountingObjective(objective, budget, on_eval)
    cfg = replace(config, max_generations=10 ** 9, tolerance=0.0)
    try:
        de_optimize(lambda x: f(canon(x)), space, cfg, seed=seed)
    except DeEvaluationError as exc:
        if not isinstance(exc.__cause__, BudgetExhausted):
            raise
    return BaselineResult(f.best_x, f.best, f.calls, f.trace)


@dataclass
class Problem:
    """A maximization problem as seen by the optimizers.

    ``sense=-1`` marks a negated minimization problem; :meth:`report`
    converts values back.
    """

    name: str
    objective: Callable
    space: DesignSpace
    sense: float = 1.0
    canonicalize: Optional[Callable] = None
    canonicalize_many: Optional[Callable] = None
    discrete: bool = False
    penalty: Optional[PenaltyConfig] = None
    bo_defaults: Dict = field(default_factory=dict)

    def report(self, value: float) -> float:
        return self.sense * value


_REGISTRY: Dict[str, Callable[[], Problem]] = {}


def register_problem(name: str, factory: Callable[[], Problem]) -> None:
    _REGISTRY[name] = factory


def get_problem(name: str) -> Problem:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; registered: {sorted(_REGISTRY)}") from None


def ackley_bo_defaults(d: int) -> Dict:
    return dict(
        n_initial=10 if d <= 4 else 25,
        pop_size_monitor=20,
        epsilon1=1e-6,
        epsilon2=0.0,
        switch_epsilon=0.25 * d,
        K=3,
        de_surrogate=DeConfig(population_size=30, strategy="best1bin", tolerance=1e-3, max_generations=100),
        de_mes=DeConfig(population_size=30, strategy="best2bin", tolerance=1e-15, max_generations=50),
    )


def _ackley_problem(d: int) -> Problem:
    cfg = AckleyConfig(d=d)
    return Problem(f"ackley-{d}d", lambda x: -float(ackley(x, cfg)), cfg.space(), sense=-1.0,
                   bo_defaults=ackley_bo_defaults(d))


def wflo_bo_defaults(case) -> Dict:
    return dict(
        n_initial=160 if case.n_turbines <= 16 else 250,
        pop_size_monitor=20,
        epsilon1=0.1,
        epsilon2=1e-4,
        switch_epsilon=0.0,
        K=3,
        snap_acquisition=True,
        kriging=KrigingConfig(theta_bounds=(10.0, 1000.0)),
        initial_design="standard" if case.rectangular else "constrained",
        # enough oversampling that the first LHS pass usually holds every feasible point needed
        oversample=20 if case.rectangular else int(min(1000, np.ceil(2.0 / case.feasible_fraction()))),
        de_surrogate=DeConfig(population_size=70, strategy="best1bin", tolerance=1e-3, max_generations=100),
        de_mes=DeConfig(population_size=70, strategy="best2bin", tolerance=1e-15, max_generations=100),
    )


def wflo_problem(case) -> Problem:
    return Problem(case.name, case.aep_gwh, case.design_space(), canonicalize=case.canonicalize,
                   canonicalize_many=case.canonicalize_many, discrete=True,
                   penalty=PenaltyConfig(scale=case.turbine.rotor_diameter),
                   bo_defaults=wflo_bo_defaults(case))


def _wflo_factory(name: str):
    def factory():
        from .cases import build_case
        return wflo_problem(build_case(name))
    return factory


for _d in (2, 4, 10):
    register_problem(f"ackley-{_d}d", lambda _d=_d: _ackley_problem(_d))
for _name in ("case1", "case2", "case3"):
    register_problem(_name, _wflo_factory(_name))


class ExperimentMethod(str, enum.Enum):
    SWITCH = "switch-af"
    MSP = "msp-only"
    MES = "mes-only"
    DE = "direct-de"
    GA = "direct-ga"
    SA = "direct-sa"


@dataclass
class ExperimentPlan:
    objective: str
    method: ExperimentMethod
    budget: int
    repeats: int = 10
    base_seed: int = 0
    bo_overrides: Dict = field(default_factory=dict)
    de: DeConfig = field(default_factory=DeConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    sa: SaConfig = field(default_factory=SaConfig)

    def __post_init__(self):
        self.method = ExperimentMethod(self.method)
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")

    def bo_config(self, problem: Problem, seed: int) -> BoConfig:
        opts = dict(problem.bo_defaults)
        opts.update(self.bo_overrides)
        opts.update(N_max=self.budget, seed=seed, method=Method(self.method.value))
        return BoConfig(**opts)


@dataclass
class RunRecord:
    seed: int
    best: float
    evals: int
    trace: list
    wall_time: float
    terminated_by: str = ""
    ok: bool = True
    error: str = ""
    x: Optional[np.ndarray] = None


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    runs: list

    @property
    def finals(self) -> np.ndarray:
        return np.array([r.best for r in self.runs if r.ok])

    @property
    def failed_seeds(self) -> list:
        return [r.seed for r in self.runs if not r.ok]

    def median(self) -> float:
        return float(np.median(self.finals)) if self.finals.size else float("nan")

    def write_table(self, stream: TextIO) -> None:
        """Rows ``seed eval_index best_so_far`` (values in the problem's own sense)."""
        stream.write("seed eval_index best_so_far\n")
        for r in self.runs:
            for i, v in enumerate(r.trace, 1):
                stream.write(f"{r.seed} {i} {format(float(v), '.17g')}\n")

    def summary(self) -> str:
        lines = ["seed status evals best terminated_by wall_s"]
        for r in self.runs:
            status = "ok" if r.ok else "FAILED"
            lines.append(f"{r.seed} {status} {r.evals} {format(r.best, '.17g')} "
                         f"{r.terminated_by or '-'} {r.wall_time:.3f}")
        return "\n".join(lines) + "\n"


def _run_one(plan: ExperimentPlan, problem: Problem, seed: int) -> RunRecord:
    t0 = time.perf_counter()
    m = plan.method
    if m in (ExperimentMethod.SWITCH, ExperimentMethod.MSP, ExperimentMethod.MES):
        counter = CountingObjective(problem.objective, plan.budget)
        res = run_bo(counter, problem.space, plan.bo_config(problem, seed), penalty=problem.penalty,
                     canonicalize=problem.canonicalize, canonicalize_many=problem.canonicalize_many,
                     discrete=problem.discrete)
        # best over raw feasible values, as returned by the engine
        trace = []
        best = -np.inf
        for raw, feas in zip(res.state.raw, res.state.feasible):
            if feas:
                best = max(best, raw)
            trace.append(best)
        return RunRecord(seed, problem.report(res.fun), counter.calls,
                         [problem.report(v) for v in trace], time.perf_counter() - t0,
                         res.state.terminated_by.value, x=res.x)
    if m == ExperimentMethod.DE:
        out = de_baseline(problem.objective, problem.space, plan.budget, plan.de, seed, problem.canonicalize)
    elif m == ExperimentMethod.GA:
        out = ga_baseline(problem.objective, problem.space, plan.budget, plan.ga, seed, problem.canonicalize)
    else:
        out = sa_baseline(problem.objective, problem.space, plan.budget, plan.sa, seed, problem.canonicalize)
    return RunRecord(seed, problem.report(out.fun), out.nfev, [problem.report(v) for v in out.trace],
                     time.perf_counter() - t0, "budget", x=out.x)


def run_experiment(plan: ExperimentPlan, progress: Optional[Callable[[RunRecord], None]] = None
                   ) -> ExperimentResult:
    """Run ``plan.repeats`` independent instances with seeds ``base_seed + i``.

    A failing run is recorded with its error and does not stop the others.
    """
    problem = get_problem(plan.objective)
    runs = []
    for i in range(plan.repeats):
        seed = plan.base_seed + i
        try:
            rec = _run_one(plan, problem, seed)
        except Exception as exc:  # noqa: BLE001 - recorded per seed
            logger.warning("seed %d failed: %s", seed, exc)
            rec = RunRecord(seed, float("nan"), 0, [], 0.0, ok=False,
                            error="".join(traceback.format_exception_only(type(exc), exc)).strip())
        runs.append(rec)
        if progress is not None:
            progress(rec)
    return ExperimentResult(plan, runs)
