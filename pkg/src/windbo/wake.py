"""Gaussian wake model and annual energy production of a wind farm.

Coordinates are meters with +x east and +y north. Wind directions are
meteorological: the direction the wind comes *from*, in degrees clockwise
from north. For a direction ``theta`` the downwind unit vector is
``(-sin theta, -cos theta)``, so a turbine's downwind coordinate is
``-(x sin theta + y cos theta)`` and its crosswind coordinate is
``x cos theta - y sin theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "HOURS_PER_YEAR",
    "TurbineSpec",
    "WakeParams",
    "WindRose",
    "CurveError",
    "RoseError",
    "sigma0_over_d",
    "wake_deficit",
    "combine_deficits",
    "turbine_power",
    "farm_power",
    "aep",
    "load_turbine_curve",
    "nrel_5mw",
    "load_rose",
]

# (365*3 + 366) / 4 days per year, 24 hours per day
HOURS_PER_YEAR = (365 * 3 + 366) / 4 * 24

# turbines closer than this along the wind are treated as abreast
_DOWNSTREAM_TOL = 1e-6


class CurveError(ValueError):
    pass


class RoseError(ValueError):
    pass


@dataclass(frozen=True)
class TurbineSpec:
    rotor_diameter: float
    hub_height: float
    speeds: np.ndarray
    ct: np.ndarray
    cp: np.ndarray
    cut_in: float
    cut_out: float
    rated_power: float

    def __post_init__(self):
        s = np.asarray(self.speeds, dtype=float)
        ct = np.asarray(self.ct, dtype=float)
        cp = np.asarray(self.cp, dtype=float)
        object.__setattr__(self, "speeds", s)
        object.__setattr__(self, "ct", ct)
        object.__setattr__(self, "cp", cp)
        if not (s.shape == ct.shape == cp.shape) or s.size < 2:
            raise CurveError("speed, ct and cp columns must have equal length >= 2")
        if np.any(np.diff(s) <= 0):
            raise CurveError("curve speeds must be strictly increasing")
        if self.cut_in >= self.cut_out:
            raise CurveError("cut_in must be below cut_out")
        if s[0] > self.cut_in or s[-1] < self.cut_out:
            raise CurveError(f"curve covers [{s[0]}, {s[-1]}] m/s but must cover "
                             f"cut-in..cut-out [{self.cut_in}, {self.cut_out}]")
        inside = (s >= self.cut_in) & (s <= self.cut_out)
        if np.any(ct[inside] <= 0) or np.any(ct[inside] >= 1):
            raise CurveError("thrust coefficient must lie in (0, 1) between cut-in and cut-out")
        if np.any(cp > 16.0 / 27.0) or np.any(cp < 0):
            raise CurveError("power coefficient must lie in [0, 16/27]")
        if self.rotor_diameter <= 0 or self.rated_power <= 0:
            raise CurveError("rotor diameter and rated power must be positive")

    @property
    def area(self) -> float:
        return np.pi * self.rotor_diameter ** 2 / 4.0

    def operating(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return (U >= self.cut_in) & (U <= self.cut_out)

    def thrust_coefficient(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return np.where(self.operating(U), np.interp(U, self.speeds, self.ct), 0.0)

    def power_coefficient(self, U) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return np.where(self.operating(U), np.interp(U, self.speeds, self.cp), 0.0)


@dataclass(frozen=True)
class WakeParams:
    """Wake expansion rates, initial-width formula and air density.

    ``sigma0_mode="beta"`` gives ``sigma0/D = 0.2*sqrt(beta)`` with
    ``beta = (1 + sqrt(1 - Ct)) / (2 sqrt(1 - Ct))``. ``"momentum"`` evaluates
    ``sigma0/D = 0.5*sqrt(u_R / (U + u_0))`` with rotor velocity
    ``u_R = U(1 - a)``, ``a = (1 - sqrt(1 - Ct))/2`` and far-wake velocity
    ``u_0 = U sqrt(1 - Ct)``, which is ``sqrt(2)/4`` for any thrust.
    """

    k_y: float = 0.03
    k_z: float = 0.03
    sigma0_mode: str = "beta"
    air_density: float = 1.225

    def __post_init__(self):
        if self.k_y <= 0 or self.k_z <= 0:
            raise ValueError("wake expansion rates must be positive")
        if self.air_density <= 0:
            raise ValueError("air density must be positive")
        if self.sigma0_mode not in ("beta", "momentum"):
            raise ValueError(f"unknown sigma0_mode {self.sigma0_mode!r}")


def sigma0_over_d(ct, mode: str = "beta") -> np.ndarray:
    ct = np.clip(np.asarray(ct, dtype=float), 0.0, 0.9999)
    root = np.sqrt(1.0 - ct)
    if mode == "beta":
        beta = (1.0 + root) / (2.0 * root)
        return 0.2 * np.sqrt(beta)
    a = 0.5 * (1.0 - root)
    u_rotor = 1.0 - a
    u_far = root
    return 0.5 * np.sqrt(u_rotor / (1.0 + u_far))


def wake_deficit(dx, dy, ct, diameter: float, params: WakeParams, dz=0.0, sigma0=None) -> np.ndarray:
    """Fractional velocity deficit at offset ``(dx, dy, dz)`` behind a turbine.

    ``dx`` is the downwind distance from the source, ``dy`` the crosswind and
    ``dz`` the vertical offset from hub height. Points not strictly downwind
    get zero. Distances under one diameter are evaluated at one diameter, and
    a negative radicand in the centerline deficit is clipped so ``C <= 1``.
    """
    dx = np.asarray(dx, dtype=float)
    ct = np.asarray(ct, dtype=float)
    if sigma0 is None:
        sigma0 = sigma0_over_d(ct, params.sigma0_mode) * diameter
    downstream = dx > _DOWNSTREAM_TOL
    x = np.maximum(dx, diameter)
    sig_y = params.k_y * x + sigma0
    sig_z = params.k_z * x + sigma0
    radicand = np.maximum(1.0 - sigma0 * sigma0 * ct / (sig_y * sig_z), 0.0)
    centre = 1.0 - np.sqrt(radicand)
    shape = np.exp(-np.square(dy) / (2.0 * sig_y ** 2)) * np.exp(-np.square(dz) / (2.0 * sig_z ** 2))
    return np.where(downstream, centre * shape, 0.0)


def combine_deficits(deficits, axis: int = -1) -> np.ndarray:
    """Root-sum-square superposition, capped at a full deficit of 1."""
    d = np.asarray(deficits, dtype=float)
    return np.minimum(np.sqrt(np.sum(d * d, axis=axis)), 1.0)


def turbine_power(U, spec: TurbineSpec, air_density: float = 1.225) -> np.ndarray:
    """Mechanical power (W): ``0.5 rho A U^3 Cp(U)`` capped at rated, zero outside cut-in..cut-out."""
    U = np.asarray(U, dtype=float)
    raw = 0.5 * air_density * spec.area * U ** 3 * spec.power_coefficient(U)
    return np.where(spec.operating(U), np.minimum(raw, spec.rated_power), 0.0)


def _downwind_frame(xy: np.ndarray, directions_deg: np.ndarray):
    th = np.deg2rad(directions_deg)
    s, c = np.sin(th), np.cos(th)
    x = xy[..., 0][..., None, :]
    y = xy[..., 1][..., None, :]
    down = -(x * s[:, None] + y * c[:, None])
    cross = x * c[:, None] - y * s[:, None]
    return down, cross


def farm_power(xy, directions, speeds, spec: TurbineSpec, params: WakeParams = WakeParams()):
    """Per-turbine power for one or more wind states.

    Parameters
    ----------
    xy : (N, 2) or (L, N, 2) array
        Turbine positions (m); a leading axis evaluates several layouts at once.
    directions, speeds : scalar or (S,) arrays
        Wind states.

    Returns
    -------
    powers : (..., S, N) array of per-turbine power (W)
    totals : (..., S) array of farm power (W)

    Turbines are visited in downwind order; each sees the free stream reduced
    by the combined deficit of all turbines strictly upwind of it, and its own
    wake uses the thrust coefficient at that reduced speed.
    """
    xy = np.asarray(xy, dtype=float)
    single = xy.ndim == 2
    if single:
        xy = xy[None]
    dirs = np.atleast_1d(np.asarray(directions, dtype=float))
    U_inf = np.broadcast_to(np.atleast_1d(np.asarray(speeds, dtype=float)), dirs.shape)
    L, N, _ = xy.shape
    S = dirs.size
    D = spec.rotor_diameter

    down, cross = _downwind_frame(xy, dirs)            # (L, S, N)
    order = np.argsort(down, axis=-1, kind="stable")
    U = np.broadcast_to(U_inf[None, :, None], (L, S, N)).copy()
    ct = np.zeros((L, S, N))
    sig0 = np.zeros((L, S, N))
    done = np.zeros((L, S, N), dtype=bool)
    li = np.arange(L)[:, None]
    si = np.arange(S)[None, :]
    for r in range(N):
        j = order[..., r]                              # (L, S)
        dx = down[li, si, j][..., None] - down         # distance of j behind every source
        dy = cross[li, si, j][..., None] - cross
        defs = wake_deficit(dx, dy, ct, D, params, sigma0=sig0)
        defs = np.where(done, defs, 0.0)
        uj = U_inf[None, :] * (1.0 - combine_deficits(defs))
        U[li, si, j] = uj
        ctj = spec.thrust_coefficient(uj)
        ct[li, si, j] = ctj
        sig0[li, si, j] = sigma0_over_d(ctj, params.sigma0_mode) * D
        done[li, si, j] = True

    powers = turbine_power(U, spec, params.air_density)
    totals = powers.sum(axis=-1)
    if single:
        return powers[0], totals[0]
    return powers, totals


@dataclass(frozen=True)
class WindRose:
    directions: np.ndarray
    speeds: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.directions, dtype=float))
        s = np.atleast_1d(np.asarray(self.speeds, dtype=float))
        f = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        if not (d.shape == s.shape == f.shape):
            raise RoseError("direction, speed and frequency columns differ in length")
        if np.any(f < 0):
            raise RoseError("frequencies must be nonnegative")
        if abs(f.sum() - 1.0) > 1e-9:
            raise RoseError(f"frequencies sum to {f.sum():.12g}, expected 1")
        if np.any(s < 0):
            raise RoseError("wind speeds must be nonnegative")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "speeds", s)
        object.__setattr__(self, "frequencies", f)

    def __len__(self):
        return self.directions.size


def aep(xy, rose: WindRose, spec: TurbineSpec, params: WakeParams = WakeParams()):
    """Annual energy production (Wh): ``8766 * sum_j f_j * P_farm(state j)``.

    Accepts a single ``(N, 2)`` layout or a stack ``(L, N, 2)``.
    """
    _, totals = farm_power(xy, rose.directions, rose.speeds, spec, params)
    return HOURS_PER_YEAR * np.sum(totals * rose.frequencies, axis=-1)


def _read_rows(path: Union[str, Path], ncols: int, what: str):
    path = Path(path)
    rows = []
    header_seen = False
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                if not header_seen and not rows:
                    header_seen = True
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric {what} row: {line.rstrip()!r}")
            if len(vals) != ncols:
                raise ValueError(f"{path}:{lineno}: expected {ncols} columns in {what} row, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no {what} rows")
    return np.array(rows)


def load_turbine_curve(path, rotor_diameter: float, hub_height: float, cut_in: float,
                       cut_out: float, rated_power: float) -> TurbineSpec:
    """Read a ``speed ct cp`` table (one header line, whitespace separated)."""
    rows = _read_rows(path, 3, "turbine curve")
    try:
        return TurbineSpec(rotor_diameter, hub_height, rows[:, 0], rows[:, 1], rows[:, 2],
                           cut_in, cut_out, rated_power)
    except CurveError as exc:
        raise CurveError(f"{path}: {exc}") from None


def nrel_5mw_curve_path() -> Path:
    return Path(str(resources.files("windbo") / "data" / "nrel_5mw.txt"))


def nrel_5mw() -> TurbineSpec:
    """NREL 5 MW reference turbine: D = 126 m, hub 90 m, cut-in 3 m/s, cut-out 25 m/s."""
    return load_turbine_curve(nrel_5mw_curve_path(), 126.0, 90.0, 3.0, 25.0, 5.0e6)


def load_rose(path) -> WindRose:
    """Read ``direction_deg speed_ms frequency`` rows."""
    rows = _read_rows(path, 3, "wind rose")
    try:
        return WindRose(rows[:, 0], rows[:, 1], rows[:, 2])
    except RoseError as exc:
        raise RoseError(f"{path}: {exc}") from None
