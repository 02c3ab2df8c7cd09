"""Space-filling designs on boxes and on irregular (constrained) domains."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DesignSpace",
    "SampleBatch",
    "Provenance",
    "SamplingError",
    "InfeasibleDomainError",
    "standard_lhs",
    "expanded_lhs",
    "constrained_lhs",
    "as_generator",
]

MAX_EXPANSION_ROUNDS = 50


class SamplingError(ValueError):
    """Raised for malformed sampling requests (e.g. asking for zero points)."""


class InfeasibleDomainError(RuntimeError):
    """Raised when constrained sampling cannot collect enough feasible points."""


class Provenance(str, enum.Enum):
    INITIAL_LHS = "initial-lhs"
    EXPANDED_LHS = "expanded-lhs"
    INFILL = "infill"


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class DesignSpace:
    """Box bounds plus an optional constraint that carves out an irregular domain.

    Parameters
    ----------
    lower, upper : array_like
        Per-dimension box bounds.
    violation : callable, optional
        Maps an ``(n, d)`` array to an ``(n,)`` array of nonnegative constraint
        violation magnitudes. A point is feasible iff its violation is zero.
        ``None`` means every point of the box is feasible.
    """

    lower: np.ndarray
    upper: np.ndarray
    violation: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]], violation=None) -> "DesignSpace":
        b = np.asarray(bounds, dtype=float)
        return cls(b[:, 0], b[:, 1], violation)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper])

    @property
    def constrained(self) -> bool:
        return self.violation is not None

    def violations(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.violation is None:
            return np.zeros(X.shape[0])
        return np.asarray(self.violation(X), dtype=float).reshape(X.shape[0])

    def feasible_mask(self, X) -> np.ndarray:
        return self.violations(X) <= 0.0

    def feasible(self, x) -> bool:
        return bool(self.feasible_mask(np.asarray(x, dtype=float)[None, :])[0])

    def in_box(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.span

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * self.span


@dataclass
class SampleBatch:
    points: np.ndarray
    provenance: Provenance = Provenance.INITIAL_LHS

    def __len__(self) -> int:
        return self.points.shape[0]


def _unit_lhs(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    # one uniform draw inside each of n strata, independent permutation per axis
    u = rng.random((n, d))
    perms = np.column_stack([rng.permutation(n) for _ in range(d)]) if d else np.empty((n, 0))
    return (perms + u) / n


def standard_lhs(space: DesignSpace, n: int, seed=None) -> SampleBatch:
    """Latin hypercube design of ``n`` points in the box of ``space``.

    Every axis is cut into ``n`` equal-width bins and each bin receives exactly
    one point, placed uniformly at random inside the bin. The constraint of
    ``space`` (if any) is ignored.
    """
    if n < 1:
        raise SamplingError(f"standard_lhs needs n >= 1, got {n}")
    rng = as_generator(seed)
    unit = _unit_lhs(n, space.dim, rng)
    return SampleBatch(space.from_unit(unit), Provenance.INITIAL_LHS)


def expanded_lhs(existing, k: int, space: DesignSpace, seed=None) -> SampleBatch:
    """Add ``k`` points to an existing design while keeping it stratified.

    The box is re-partitioned into ``len(existing) + k`` bins per axis. New
    points are dropped, one each, into bins that are still empty, so at least
    ``k`` empty bins are always available and no new point can coincide with
    an old one.
    """
    pts = existing.points if isinstance(existing, SampleBatch) else np.asarray(existing, dtype=float)
    pts = np.atleast_2d(pts)
    if pts.shape[0] == 0:
        raise SamplingError("expanded_lhs needs a nonempty existing design")
    if k < 1:
        raise SamplingError(f"expanded_lhs needs k >= 1, got {k}")
    rng = as_generator(seed)
    total = pts.shape[0] + k
    unit_old = space.to_unit(pts)
    new = np.empty((k, space.dim))
    for j in range(space.dim):
        occupied = np.clip(np.floor(unit_old[:, j] * total).astype(int), 0, total - 1)
        empty = np.setdiff1d(np.arange(total), occupied)
        chosen = rng.choice(empty, size=k, replace=False)
        new[:, j] = (chosen + rng.random(k)) / total
    return SampleBatch(space.from_unit(new), Provenance.EXPANDED_LHS)


def constrained_lhs(space: DesignSpace, n: int, m: Optional[int] = None, seed=None,
                    max_rounds: int = MAX_EXPANSION_ROUNDS, stats: Optional[dict] = None) -> SampleBatch:
    """Exactly ``n`` feasible, space-filling points of an irregular domain.

    Draws an oversized LHS of ``m`` points over the bounding box, keeps the
    feasible ones, and tops up the shortfall with expanded-LHS rounds until
    ``n`` feasible points exist. Surplus feasible points are dropped from the
    end so the earliest-generated ones survive.

    Parameters
    ----------
    space : DesignSpace
    n : int
        Number of feasible points requested.
    m : int, optional
        Size of the initial oversampled LHS; defaults to ``20 * n``.
    seed : int or Generator, optional
    max_rounds : int
        Expansion rounds allowed before giving up.
    stats : dict, optional
        If given, filled with ``rounds`` and ``generated`` counters.
    """
    if n < 1:
        raise SamplingError(f"constrained_lhs needs n >= 1, got {n}")
    m = 20 * n if m is None else int(m)
    if m < n:
        raise SamplingError(f"oversample size m={m} must be >= n={n}")
    rng = as_generator(seed)

    generated = standard_lhs(space, m, rng).points
    kept = generated[space.feasible_mask(generated)]
    rounds = 0
    while kept.shape[0] < n:
        if rounds >= max_rounds:
            raise InfeasibleDomainError(
                f"only {kept.shape[0]} of {n} feasible points after {rounds} expansion rounds "
                f"({generated.shape[0]} candidates drawn)"
            )
        extra = expanded_lhs(generated, n - kept.shape[0], space, rng).points
        generated = np.vstack([generated, extra])
        kept = np.vstack([kept, extra[space.feasible_mask(extra)]])
        rounds += 1
    if stats is not None:
        stats["rounds"] = rounds
        stats["generated"] = generated.shape[0]
    provenance = Provenance.INITIAL_LHS if rounds == 0 else Provenance.EXPANDED_LHS
    return SampleBatch(kept[:n].copy(), provenance)
