"""Bounded differential evolution (maximization) with seeded initial populations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .sampling import DesignSpace, as_generator, constrained_lhs

__all__ = [
    "DeConfig",
    "SeededInitPlan",
    "DeResult",
    "DeEvaluationError",
    "de_optimize",
    "seeded_population",
    "mutants",
]

STRATEGIES = ("best1bin", "best2bin")


class DeEvaluationError(RuntimeError):
    """The objective raised; the message names the generation (and individual)."""


@dataclass
class DeConfig:
    population_size: int = 70
    mutation: tuple = (0.5, 1.2)
    recombination: float = 0.7
    strategy: str = "best1bin"
    tolerance: float = 1e-3
    max_generations: int = 300
    seed: Optional[int] = None

    def __post_init__(self):
        lo, hi = self.mutation
        if not 0.0 <= lo <= hi <= 2.0:
            raise ValueError(f"mutation range must satisfy 0 <= low <= high <= 2, got {self.mutation}")
        self.mutation = (float(lo), float(hi))
        if not 0.0 < self.recombination <= 1.0:
            raise ValueError(f"recombination must be in (0, 1], got {self.recombination}")
        if self.population_size < 5:
            raise ValueError("population_size must be at least 5")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.max_generations < 0:
            raise ValueError("max_generations must be nonnegative")


@dataclass
class SeededInitPlan:
    """How to build the initial population.

    Without an incumbent the whole population comes from constrained LHS.
    With one, ``mutate_fraction`` of it are random mutations of the incumbent:
    every coordinate is redrawn with probability ``mutation_probability``
    within ``mutation_radius`` (fraction of the axis span) of its value.
    """

    random_fraction: float = 0.5
    mutate_fraction: float = 0.5
    incumbent: Optional[np.ndarray] = None
    mutation_probability: float = 0.3
    mutation_radius: float = 0.1
    max_retries: int = 10

    def __post_init__(self):
        if self.incumbent is None:
            self.random_fraction, self.mutate_fraction = 1.0, 0.0
        else:
            self.incumbent = np.asarray(self.incumbent, dtype=float).ravel()
            if self.random_fraction < 0 or self.mutate_fraction < 0:
                raise ValueError("fractions must be nonnegative")
            if abs(self.random_fraction + self.mutate_fraction - 1.0) > 1e-12:
                raise ValueError("random_fraction and mutate_fraction must sum to 1")


@dataclass
class DeResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool
    population: np.ndarray
    energies: np.ndarray
    best_trace: list = field(default_factory=list)


def seeded_population(space: DesignSpace, config: DeConfig, plan: Optional[SeededInitPlan] = None,
                      seed=None) -> np.ndarray:
    plan = plan or SeededInitPlan()
    rng = as_generator(seed)
    size = config.population_size
    n_mut = int(round(size * plan.mutate_fraction)) if plan.incumbent is not None else 0
    n_rand = size - n_mut
    parts = []
    if n_rand > 0:
        parts.append(constrained_lhs(space, n_rand, seed=rng).points)
    if n_mut > 0:
        parts.append(_mutate_incumbent(space, plan, n_mut, rng))
    return np.vstack(parts)


def _mutate_incumbent(space: DesignSpace, plan: SeededInitPlan, count: int,
                      rng: np.random.Generator) -> np.ndarray:
    x0 = plan.incumbent
    radius = plan.mutation_radius * space.span
    rows = np.empty((count, space.dim))
    for i in range(count):
        for _ in range(plan.max_retries):
            flip = rng.random(space.dim) < plan.mutation_probability
            step = rng.uniform(-1.0, 1.0, space.dim) * radius
            cand = space.clip(np.where(flip, x0 + step, x0))
            if space.feasible(cand):
                rows[i] = cand
                break
        else:
            rows[i] = constrained_lhs(space, 1, seed=rng).points[0]
    return rows


def _pick_indices(size: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct indices per individual, never the individual itself."""
    keys = rng.random((size, size))
    np.fill_diagonal(keys, 2.0)
    return np.argsort(keys, axis=1, kind="stable")[:, :k]


def mutants(pop: np.ndarray, best: np.ndarray, F: float, strategy: str, picks: np.ndarray) -> np.ndarray:
    """Mutant vectors: best1bin ``b + F(r1 - r2)``, best2bin ``b + F(r1 + r2 - r3 - r4)``."""
    if strategy == "best1bin":
        return best + F * (pop[picks[:, 0]] - pop[picks[:, 1]])
    return best + F * (pop[picks[:, 0]] + pop[picks[:, 1]] - pop[picks[:, 2]] - pop[picks[:, 3]])


def de_optimize(objective: Callable, space: DesignSpace, config: Optional[DeConfig] = None,
                init: Optional[SeededInitPlan] = None, *, vectorized: bool = False,
                initial_population: Optional[np.ndarray] = None, seed=None) -> DeResult:
    """Maximize ``objective`` over the box of ``space`` by differential evolution.

    Parameters
    ----------
    objective : callable
        ``f(x) -> float`` or, with ``vectorized=True``, ``f(X) -> (m,)`` for a
        whole population. Feasibility is the caller's business: wrap the
        objective with a penalty if the space is constrained.
    space : DesignSpace
    config : DeConfig, optional
    init : SeededInitPlan, optional
        Ignored when ``initial_population`` is given.
    vectorized : bool
    initial_population : ndarray, optional
    seed : int or Generator, optional
        Overrides ``config.seed``.

    Returns
    -------
    DeResult
        Best point seen, its value, number of objective calls, final population.

    Notes
    -----
    Trial vectors are clipped to the bounds. Each generation draws one
    mutation factor uniformly from ``config.mutation``. Selection is greedy
    with a generation barrier (all trials are evaluated before any
    replacement); ties keep the lowest index. The run stops once
    ``std(energies) <= tolerance * (|mean(energies)| + 1e-300)`` or after
    ``max_generations``.
    """
    config = config or DeConfig()
    rng = as_generator(config.seed if seed is None else seed)
    if initial_population is None:
        pop = seeded_population(space, config, init, rng)
    else:
        pop = space.clip(np.array(initial_population, dtype=float))
    size, d = pop.shape
    needed = 2 if config.strategy == "best1bin" else 4
    if size < needed + 1:
        raise ValueError(f"population of {size} too small for {config.strategy}")

    nfev = 0

    def evaluate(P, generation):
        nonlocal nfev
        if vectorized:
            try:
                vals = np.asarray(objective(P), dtype=float).reshape(P.shape[0])
            except Exception as exc:
                raise DeEvaluationError(f"objective failed in generation {generation}: {exc}") from exc
        else:
            vals = np.empty(P.shape[0])
            for i, x in enumerate(P):
                try:
                    vals[i] = float(objective(x))
                except Exception as exc:
                    raise DeEvaluationError(
                        f"objective failed in generation {generation}, individual {i}: {exc}") from exc
        nfev += P.shape[0]
        return np.where(np.isnan(vals), -np.inf, vals)

    energies = evaluate(pop, 0)
    ib = int(np.argmax(energies))
    best_x, best_f = pop[ib].copy(), float(energies[ib])
    trace = [best_f]
    converged = False
    nit = 0

    def spread_ok():
        finite = energies[np.isfinite(energies)]
        if finite.size < energies.size:
            return False
        return np.std(finite) <= config.tolerance * (abs(np.mean(finite)) + 1e-300)

    for gen in range(1, config.max_generations + 1):
        if spread_ok():
            converged = True
            break
        F = rng.uniform(*config.mutation)
        picks = _pick_indices(size, needed, rng)
        mutant = mutants(pop, pop[ib], F, config.strategy, picks)
        cross = rng.random((size, d)) < config.recombination
        cross[np.arange(size), rng.integers(0, d, size)] = True
        trial = space.clip(np.where(cross, mutant, pop))
        trial_e = evaluate(trial, gen)
        better = trial_e >= energies
        pop[better] = trial[better]
        energies[better] = trial_e[better]
        ib = int(np.argmax(energies))
        if energies[ib] > best_f:
            best_x, best_f = pop[ib].copy(), float(energies[ib])
        trace.append(best_f)
        nit = gen
    else:
        converged = spread_ok()

    return DeResult(x=best_x, fun=best_f, nfev=nfev, nit=nit, converged=bool(converged),
                    population=pop, energies=energies, best_trace=trace)
