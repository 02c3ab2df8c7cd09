"""Acquisition functions: maximum surrogate prediction (MSP) and max-value
entropy search (MES), plus the MSP-convergence test that triggers the switch.

Everything here maximizes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import log_ndtr

from .de import DeConfig, DeResult, SeededInitPlan, de_optimize
from .kriging import KrigingModel
from .sampling import DesignSpace

__all__ = [
    "Phase",
    "YStarPool",
    "SwitchConfig",
    "mes_gain",
    "msp_value",
    "msp_batch",
    "mes_value",
    "mes_batch",
    "sample_ystars",
    "switch_check",
    "sigma_floor",
]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class Phase(str, enum.Enum):
    MSP = "MSP"
    MES = "MES"


@dataclass
class YStarPool:
    values: np.ndarray
    source: str = "parallel-msp-runs"
    points: Optional[np.ndarray] = None
    runs: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.values.size < 1:
            raise ValueError("y* pool must hold at least one value")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("y* pool values must be finite")

    def __len__(self):
        return self.values.size

    @property
    def best_index(self) -> int:
        return int(np.argmax([r.fun for r in self.runs])) if self.runs else int(np.argmax(self.values))


@dataclass
class SwitchConfig:
    epsilon: float = 0.0
    phase: Phase = Phase.MSP

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("switch epsilon must be nonnegative")
        self.phase = Phase(self.phase)


def mes_gain(gamma) -> np.ndarray:
    """Entropy reduction ``g = gamma*phi/(2*Phi) - ln Phi`` of an upper truncation at ``gamma``.

    ``phi/Phi`` is formed in log space so nothing overflows for ``|gamma|`` up
    to several hundred.
    """
    gamma = np.asarray(gamma, dtype=float)
    log_cdf = log_ndtr(gamma)
    log_pdf = -0.5 * gamma * gamma - _LOG_SQRT_2PI
    ratio = np.exp(log_pdf - log_cdf)
    g = 0.5 * gamma * ratio - log_cdf
    return np.maximum(g, 0.0)


def sigma_floor(model: KrigingModel) -> float:
    """Standard deviation (normalized units) below which a point counts as known.

    The nugget leaves a residual variance of about ``nugget * sigma2`` at the
    training points, so the floor sits just above it.
    """
    return max(1e-12, float(np.sqrt(10.0 * model.nugget * model.sigma2_norm)))


def msp_value(model: KrigingModel, x) -> float:
    return model.predict(x)[0]


def msp_batch(model: KrigingModel, X) -> np.ndarray:
    return model.predict_mean(X)


def _ystar_norm(model: KrigingModel, pool: YStarPool) -> np.ndarray:
    return (pool.values - model.y_mean) / model.y_std


def mes_batch(model: KrigingModel, X, pool: YStarPool, exact: bool = True) -> np.ndarray:
    mean, var = model.predict_normalized(X, exact=exact)
    sd = np.sqrt(var)
    known = sd < sigma_floor(model)
    ys = _ystar_norm(model, pool)
    safe_sd = np.where(known, 1.0, sd)
    gamma = (ys[None, :] - mean[:, None]) / safe_sd[:, None]
    vals = mes_gain(gamma).mean(axis=1)
    return np.where(known, 0.0, vals)


def mes_value(model: KrigingModel, x, pool: YStarPool) -> float:
    return float(mes_batch(model, np.asarray(x, dtype=float).reshape(1, -1), pool)[0])


def _run_seed(seed, index: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (index,))
    return np.random.SeedSequence([0 if seed is None else int(seed), index])


def sample_ystars(model: KrigingModel, space: DesignSpace, de_config: DeConfig, K: int, seed=None,
                  init: Optional[SeededInitPlan] = None,
                  objective: Optional[Callable] = None) -> YStarPool:
    """K independent DE maximizations of the surrogate mean.

    Run ``i`` is seeded from ``(seed, i)`` so the pool does not depend on the
    order in which runs execute. Values below the best observation are lifted
    to ``max(y) + 1e-6 * range(y)``.

    ``objective`` replaces the plain surrogate mean (e.g. with a penalized one)
    and must accept a batch of points.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    objective = objective or (lambda X: msp_batch(model, X))
    runs: list[DeResult] = []
    for i in range(K):
        rng = np.random.default_rng(_run_seed(seed, i))
        runs.append(de_optimize(objective, space, de_config, init, vectorized=True, seed=rng))
    y = model.y
    floor = float(np.max(y)) + 1e-6 * float(np.ptp(y))
    values = np.maximum([r.fun for r in runs], floor)
    points = np.vstack([r.x for r in runs])
    return YStarPool(values=values, points=points, runs=runs)


def switch_check(x_star, training_X, epsilon: float) -> bool:
    """True when some training row lies within L1 distance ``epsilon`` of ``x_star``."""
    X = np.atleast_2d(np.asarray(training_X, dtype=float))
    x = np.asarray(x_star, dtype=float).ravel()
    if X.shape[1] != x.size:
        raise ValueError(f"x_star has {x.size} coordinates, training rows have {X.shape[1]}")
    return bool(np.any(np.abs(X - x).sum(axis=1) <= epsilon))
