"""Ordinary Kriging with a power-exponential correlation.

Inputs are min-max scaled to the unit box of the design space and outputs are
standardized before fitting; ``beta`` and ``sigma2`` on the fitted model are
reported back in objective units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .sampling import DesignSpace, as_generator

logger = logging.getLogger(__name__)

__all__ = [
    "Dataset",
    "KrigingConfig",
    "KrigingModel",
    "KrigingError",
    "DuplicateSampleError",
    "FitError",
    "fit",
    "correlation",
    "concentrated_log_likelihood",
]


class KrigingError(ValueError):
    pass


class DuplicateSampleError(KrigingError):
    pass


class FitError(RuntimeError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise KrigingError(f"X has {self.X.shape[0]} rows but y has {self.y.size} entries")

    def __len__(self):
        return self.y.size

    def append(self, x, value) -> None:
        self.X = np.vstack([self.X, np.asarray(x, dtype=float).reshape(1, -1)])
        self.y = np.append(self.y, float(value))


@dataclass
class KrigingConfig:
    """Training options.

    ``theta_bounds`` apply to inputs scaled to ``[0, 1]``; the search runs over
    ``log10(theta)``.
    """

    p: float = 2.0
    optimize_p: bool = False
    theta_bounds: tuple = (1e-3, 1e2)
    n_starts: int = 5
    maxiter: int = 100
    nugget_start: float = 1e-10
    nugget_max: float = 1e-4
    duplicate_tol: float = 1e-12


def _weighted_power_distance(A: np.ndarray, B: np.ndarray, theta: np.ndarray, p: float) -> np.ndarray:
    """sum_k theta_k |a_k - b_k|^p for all pairs; every entry computed independently."""
    if p == 2.0:
        s = np.sqrt(theta)
        return cdist(A * s, B * s, "sqeuclidean")
    out = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        out += theta[k] * np.abs(A[:, k, None] - B[None, :, k]) ** p
    return out


def correlation(A, B, theta, p: float = 2.0) -> np.ndarray:
    """Power-exponential correlation ``exp(-sum_k theta_k |a_k - b_k|^p)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return np.exp(-_weighted_power_distance(A, B, np.asarray(theta, dtype=float), float(p)))


def _nugget_ladder(config: KrigingConfig):
    nug = config.nugget_start
    while nug <= config.nugget_max * (1 + 1e-9):
        yield nug
        nug *= 10.0


def _factorize(R: np.ndarray, config: KrigingConfig):
    """Cholesky of ``R + nugget*I`` with the smallest nugget that works."""
    n = R.shape[0]
    for nug in _nugget_ladder(config):
        try:
            L = linalg.cholesky(R + nug * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            return L, nug
    return None, None


def _gls(L: np.ndarray, y: np.ndarray):
    n = y.size
    ones = np.ones(n)
    Rinv_1 = linalg.cho_solve((L, True), ones, check_finite=False)
    Rinv_y = linalg.cho_solve((L, True), y, check_finite=False)
    denom = ones @ Rinv_1
    beta = (ones @ Rinv_y) / denom
    gamma = Rinv_y - beta * Rinv_1
    resid = y - beta
    sigma2 = max(float(resid @ gamma) / n, 1e-300)
    return beta, sigma2, gamma, Rinv_1, denom


def _cholesky_inverse(L: np.ndarray) -> np.ndarray:
    inv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        return linalg.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
    return np.tril(inv) + np.tril(inv, -1).T


def concentrated_log_likelihood(U: np.ndarray, y: np.ndarray, theta, p: float,
                                config: Optional[KrigingConfig] = None, gradient: bool = False):
    """Concentrated log-likelihood ``-n/2 ln sigma2 - 1/2 ln|R|`` (constants dropped).

    ``U`` are unit-scaled inputs and ``y`` standardized outputs. Returns
    ``-inf`` when ``R`` cannot be factorized at any nugget. With
    ``gradient=True`` also returns d/d(ln theta) and, if ``config.optimize_p``,
    d/dp as the last entry.
    """
    config = config or KrigingConfig()
    theta = np.asarray(theta, dtype=float)
    n, d = U.shape
    R = correlation(U, U, theta, p)
    L, nug = _factorize(R, config)
    if L is None:
        if gradient:
            return -np.inf, np.zeros(d + int(config.optimize_p))
        return -np.inf
    beta, sigma2, gamma, _, _ = _gls(L, y)
    loglik = -0.5 * n * np.log(sigma2) - np.sum(np.log(np.diag(L)))
    if not gradient:
        return loglik

    # dlnL/dtheta_k = -1/2 sum((a a^T / s2 - R^-1) o R o |dU_k|^p)
    Rinv = _cholesky_inverse(L)
    W = (np.outer(gamma, gamma) / sigma2 - Rinv) * R
    grad = np.empty(d + int(config.optimize_p))
    if p == 2.0 and not config.optimize_p:
        # sum_ij W_ij (u_ik - u_jk)^2 = 2 sum_i u_ik^2 rowsum_i - 2 u_k^T W u_k
        rows = W.sum(axis=1)
        quad = np.einsum("ik,ik->k", U, W @ U)
        grad[:] = -theta * ((U * U).T @ rows - quad)
        return loglik, grad
    dp = 0.0
    for k in range(d):
        diff = np.abs(U[:, k, None] - U[None, :, k])
        Dk = diff ** p
        grad[k] = -0.5 * theta[k] * np.sum(W * Dk)
        if config.optimize_p:
            with np.errstate(divide="ignore", invalid="ignore"):
                logdiff = np.where(diff > 0, np.log(np.where(diff > 0, diff, 1.0)), 0.0)
            dp += theta[k] * np.sum(W * Dk * logdiff)
    if config.optimize_p:
        grad[d] = -0.5 * dp
    return loglik, grad


@dataclass(frozen=True)
class KrigingModel:
    """A fitted, immutable ordinary-Kriging surrogate."""

    beta: float
    sigma2: float
    theta: np.ndarray
    p: float
    nugget: float
    lower: np.ndarray
    upper: np.ndarray
    y_mean: float
    y_std: float
    X: np.ndarray
    y: np.ndarray
    U: np.ndarray
    y_norm: np.ndarray
    log_likelihood: float
    beta_norm: float = field(repr=False)
    sigma2_norm: float = field(repr=False)
    _L: np.ndarray = field(repr=False)
    _gamma: np.ndarray = field(repr=False)
    _Rinv_1: np.ndarray = field(repr=False)
    _ones_Rinv_1: float = field(repr=False)
    _LinvT: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def _unit(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.ndim != 2 or P.shape[1] != self.dim:
            raise KrigingError(f"expected points with {self.dim} coordinates, got shape {np.shape(points)}")
        return (P - self.lower) / (self.upper - self.lower)

    def predict_normalized(self, points, exact: bool = True, return_var: bool = True):
        """Mean and variance in standardized output units."""
        r = correlation(self._unit(points), self.U, self.theta, self.p)
        mean = self.beta_norm + (r * self._gamma).sum(axis=1)
        if not return_var:
            return mean, None
        if exact:
            # batched 1xn products keep each row bitwise independent of the batch size
            v = np.matmul(r[:, None, :], self._LinvT)[:, 0, :]
        else:
            v = r @ self._LinvT
        q = (v * v).sum(axis=1)
        u = 1.0 - (r * self._Rinv_1).sum(axis=1)
        var = self.sigma2_norm * (1.0 - q + u * u / self._ones_Rinv_1)
        return mean, np.maximum(var, 0.0)

    def predict_batch(self, points, exact: bool = True):
        """Means and variances (objective units) at each row of ``points``.

        With ``exact=True`` every row is bitwise identical to a single
        :meth:`predict` call; ``exact=False`` uses one matrix product for the
        variance and agrees only to round-off.
        """
        mean, var = self.predict_normalized(points, exact=exact)
        return self.y_mean + self.y_std * mean, var * self.y_std ** 2

    def predict(self, x):
        mean, var = self.predict_batch(np.asarray(x, dtype=float).reshape(1, -1))
        return float(mean[0]), float(var[0])

    def predict_mean(self, points) -> np.ndarray:
        mean, _ = self.predict_normalized(points, return_var=False)
        return self.y_mean + self.y_std * mean

    def dump(self) -> str:
        """Key-value text with every number at full precision."""
        def fmt(a):
            return " ".join(repr(float(v)) for v in np.ravel(a))

        lines = [
            f"beta {float(self.beta)!r}",
            f"sigma2 {float(self.sigma2)!r}",
            f"theta {fmt(self.theta)}",
            f"p {float(self.p)!r}",
            f"nugget {float(self.nugget)!r}",
            f"lower {fmt(self.lower)}",
            f"upper {fmt(self.upper)}",
            f"y_mean {float(self.y_mean)!r}",
            f"y_std {float(self.y_std)!r}",
            f"log_likelihood {float(self.log_likelihood)!r}",
            f"n {self.n}",
        ]
        X, y = self.X, self.y
        for i in range(self.n):
            lines.append(f"sample {fmt(X[i])} {float(y[i])!r}")
        return "\n".join(lines) + "\n"


def _check_duplicates(U: np.ndarray, tol: float) -> None:
    order = np.lexsort(U.T[::-1])
    S = U[order]
    same = np.all(np.abs(np.diff(S, axis=0)) <= tol, axis=1)
    if np.any(same):
        i = int(np.argmax(same))
        raise DuplicateSampleError(f"rows {order[i]} and {order[i + 1]} are duplicate samples")
    if U.shape[0] <= 2000:
        # lexicographic neighbours miss duplicates when an earlier coordinate differs by < tol
        D = cdist(U, U, "chebyshev")
        np.fill_diagonal(D, np.inf)
        if np.min(D) <= tol:
            i, j = np.unravel_index(np.argmin(D), D.shape)
            raise DuplicateSampleError(f"rows {min(i, j)} and {max(i, j)} are duplicate samples")


def fit(data: Dataset, space, config: Optional[KrigingConfig] = None, seed=None,
        theta0: Optional[Sequence[float]] = None, optimize: bool = True) -> KrigingModel:
    """Fit ordinary Kriging by maximizing the concentrated likelihood.

    Parameters
    ----------
    data : Dataset
    space : DesignSpace or (d, 2) array of bounds
        Input scaling is taken from these bounds.
    config : KrigingConfig, optional
    seed : int or Generator, optional
        Drives the Latin hypercube of multi-start points over ``log10(theta)``.
    theta0 : sequence, optional
        Warm start, tried in addition to the multi-starts.
    optimize : bool
        If False, ``theta0`` is used as-is and only beta/sigma2 are re-estimated.
    """
    config = config or KrigingConfig()
    if not isinstance(space, DesignSpace):
        space = DesignSpace.from_bounds(space)
    X, y = data.X, data.y
    n, d = X.shape
    if d != space.dim:
        raise KrigingError(f"data has {d} columns, design space has {space.dim}")
    if n < 2:
        raise KrigingError("Kriging needs at least two samples")

    U = space.to_unit(X)
    _check_duplicates(U, config.duplicate_tol)
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not np.isfinite(y_std) or y_std <= 0.0:
        y_std = 1.0
    yn = (y - y_mean) / y_std

    lo, hi = np.log10(config.theta_bounds[0]), np.log10(config.theta_bounds[1])
    p_bounds = (1.0, 2.0)

    def unpack(z):
        theta = 10.0 ** z[:d]
        p = float(z[d]) if config.optimize_p else float(config.p)
        return theta, p

    def negloglik(z):
        theta, p = unpack(z)
        val, grad = concentrated_log_likelihood(U, yn, theta, p, config, gradient=True)
        if not np.isfinite(val):
            return 1e10, np.zeros_like(z)
        # chain rule: d/dlog10(theta) = ln(10) * d/dln(theta)
        g = grad.copy()
        g[:d] *= np.log(10.0)
        return -val, -g

    starts = []
    if theta0 is not None:
        z0 = np.log10(np.clip(np.asarray(theta0, dtype=float), *config.theta_bounds))
        starts.append(np.append(z0, config.p) if config.optimize_p else z0)
    if optimize and config.n_starts > 0:
        rng = as_generator(seed)
        ns = config.n_starts
        unit = (np.column_stack([rng.permutation(ns) for _ in range(d)]) + rng.random((ns, d))) / ns
        for row in unit:
            z = lo + row * (hi - lo)
            starts.append(np.append(z, rng.uniform(*p_bounds)) if config.optimize_p else z)
    if not starts:
        raise KrigingError("no hyperparameters: pass theta0 or enable optimization")

    bounds = [(lo, hi)] * d + ([p_bounds] if config.optimize_p else [])
    best_z, best_val = None, np.inf
    for z in starts:
        if optimize:
            val, _ = negloglik(z)
        else:
            theta, p = unpack(z)
            val = -concentrated_log_likelihood(U, yn, theta, p, config)
            val = val if np.isfinite(val) else 1e10
        if val < best_val:
            best_z, best_val = z.copy(), val
        if not optimize:
            continue
        res = minimize(negloglik, z, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": config.maxiter})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_z, best_val = np.asarray(res.x, dtype=float), float(res.fun)

    theta, p = unpack(best_z)
    R = correlation(U, U, theta, p)
    L, nug = _factorize(R, config)
    if L is None:
        cond = np.linalg.cond(R)
        raise FitError(f"correlation matrix singular at every nugget up to {config.nugget_max:g} "
                       f"(condition estimate {cond:.3e}, n={n}, d={d})")
    beta, sigma2, gamma, Rinv_1, denom = _gls(L, yn)
    loglik = -0.5 * n * np.log(sigma2) - np.sum(np.log(np.diag(L)))
    Linv = linalg.solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    logger.debug("kriging fit n=%d d=%d loglik=%.6g nugget=%g", n, d, loglik, nug)
    return KrigingModel(
        beta=y_mean + y_std * beta,
        sigma2=sigma2 * y_std ** 2,
        theta=theta,
        p=p,
        nugget=nug,
        lower=space.lower.copy(),
        upper=space.upper.copy(),
        y_mean=y_mean,
        y_std=y_std,
        X=X.copy(),
        y=y.copy(),
        U=U,
        y_norm=yn,
        log_likelihood=float(loglik),
        beta_norm=float(beta),
        sigma2_norm=float(sigma2),
        _L=L,
        _gamma=gamma,
        _Rinv_1=Rinv_1,
        _ones_Rinv_1=float(denom),
        _LinvT=np.ascontiguousarray(Linv.T),
    )
