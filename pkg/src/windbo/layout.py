"""Wind-farm layouts on a grid of candidate cells, and the layout-design problem.

A design vector for ``N`` turbines is ``[x_1 .. x_N, y_1 .. y_N]`` in meters.
Evaluated layouts always sit on the centers of distinct feasible cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import shapely

from .sampling import DesignSpace
from .wake import WakeParams, WindRose, TurbineSpec, aep

__all__ = [
    "Boundary",
    "Grid",
    "FarmLayout",
    "LayoutError",
    "CapacityError",
    "WindFarmCase",
    "snap_to_grid",
    "snap_many",
    "load_boundary",
    "square_boundary",
    "circle_boundary",
]


class LayoutError(ValueError):
    pass


class CapacityError(LayoutError):
    pass


@dataclass(frozen=True)
class Boundary:
    """Farm boundary polygon (even-odd fill, winding irrelevant)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise LayoutError("boundary needs at least three (x, y) vertices")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_polygon", shapely.Polygon(v))

    @property
    def polygon(self):
        return self._polygon

    @property
    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return lo, hi

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return shapely.intersects_xy(self.polygon, xy[:, 0], xy[:, 1])

    def distance_outside(self, xy) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return shapely.distance(self.polygon, shapely.points(xy))


def square_boundary(side: float, origin=(0.0, 0.0)) -> Boundary:
    x0, y0 = origin
    return Boundary(np.array([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]))


def circle_boundary(diameter: float, center=None, segments: int = 360) -> Boundary:
    r = diameter / 2.0
    cx, cy = (r, r) if center is None else center
    t = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    return Boundary(np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]))


@dataclass(frozen=True)
class Grid:
    """Square cells of side ``cell``; ``mask[iy, ix]`` marks candidate cells."""

    x0: float
    y0: float
    cell: float
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise LayoutError("cell mask must be two-dimensional")
        object.__setattr__(self, "mask", m)
        iy, ix = np.nonzero(m)
        object.__setattr__(self, "_cells", np.column_stack([ix, iy]))

    @classmethod
    def from_boundary(cls, boundary: Boundary, cell: float) -> "Grid":
        lo, hi = boundary.bbox
        nx = int(np.ceil((hi[0] - lo[0]) / cell - 1e-9))
        ny = int(np.ceil((hi[1] - lo[1]) / cell - 1e-9))
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
        cx = lo[0] + (ix + 0.5) * cell
        cy = lo[1] + (iy + 0.5) * cell
        inside = boundary.contains(np.column_stack([cx.ravel(), cy.ravel()])).reshape(ny, nx)
        return cls(float(lo[0]), float(lo[1]), float(cell), inside)

    @property
    def nx(self) -> int:
        return self.mask.shape[1]

    @property
    def ny(self) -> int:
        return self.mask.shape[0]

    @property
    def cells(self) -> np.ndarray:
        """Feasible cells as ``(ix, iy)`` rows, in row-major order."""
        return self._cells

    @property
    def capacity(self) -> int:
        return self._cells.shape[0]

    def centers(self, cells=None) -> np.ndarray:
        c = self._cells if cells is None else np.atleast_2d(cells)
        return np.column_stack([self.x0 + (c[:, 0] + 0.5) * self.cell, self.y0 + (c[:, 1] + 0.5) * self.cell])

    def extent(self):
        return (self.x0, self.x0 + self.nx * self.cell), (self.y0, self.y0 + self.ny * self.cell)

    def cell_of(self, xy) -> np.ndarray:
        xy = np.atleast_2d(xy)
        ix = np.floor((xy[:, 0] - self.x0) / self.cell).astype(int)
        iy = np.floor((xy[:, 1] - self.y0) / self.cell).astype(int)
        return np.column_stack([ix, iy])


@dataclass
class FarmLayout:
    xy: np.ndarray
    cells: np.ndarray
    grid: Grid = field(repr=False)

    @property
    def n_turbines(self) -> int:
        return self.xy.shape[0]

    def vector(self) -> np.ndarray:
        return np.concatenate([self.xy[:, 0], self.xy[:, 1]])

    def validate(self, boundary: Optional[Boundary] = None) -> None:
        c = self.cells
        ok = (c[:, 0] >= 0) & (c[:, 0] < self.grid.nx) & (c[:, 1] >= 0) & (c[:, 1] < self.grid.ny)
        if not np.all(ok):
            raise LayoutError(f"turbines {np.flatnonzero(~ok).tolist()} lie outside the grid")
        if not np.all(self.grid.mask[c[:, 1], c[:, 0]]):
            bad = np.flatnonzero(~self.grid.mask[c[:, 1], c[:, 0]]).tolist()
            raise LayoutError(f"turbines {bad} occupy cells outside the boundary")
        _, counts = np.unique(c, axis=0, return_counts=True)
        if np.any(counts > 1):
            raise LayoutError("two or more turbines share a cell")
        if boundary is not None and not np.all(boundary.contains(self.xy)):
            raise LayoutError("turbine outside the farm boundary")

    @classmethod
    def from_positions(cls, xy, grid: Grid) -> "FarmLayout":
        xy = np.asarray(xy, dtype=float)
        return cls(xy, grid.cell_of(xy), grid)


def split_vector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=float).ravel()
    if v.size % 2:
        raise LayoutError(f"layout vector length {v.size} is odd; expected 2N")
    n = v.size // 2
    return np.column_stack([v[:n], v[n:]])


def _nearest_cells(xy: np.ndarray, grid: Grid) -> np.ndarray:
    """Index (into ``grid.cells``) of the nearest feasible center for each row of ``xy``.

    A point inside a feasible cell is nearest to that cell's own center; only
    points elsewhere need a search over all feasible centers.
    """
    lookup = np.full(grid.mask.shape, -1, dtype=np.int64)
    lookup[grid.cells[:, 1], grid.cells[:, 0]] = np.arange(grid.capacity)
    ix = np.floor((xy[:, 0] - grid.x0) / grid.cell).astype(np.int64)
    iy = np.floor((xy[:, 1] - grid.y0) / grid.cell).astype(np.int64)
    inside = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny)
    out = np.full(xy.shape[0], -1, dtype=np.int64)
    out[inside] = lookup[iy[inside], ix[inside]]
    miss = np.flatnonzero(out < 0)
    if miss.size:
        centers = grid.centers()
        d2 = ((xy[miss, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        out[miss] = np.argmin(d2, axis=1)
    return out


def _repair(nearest: np.ndarray, cells: np.ndarray) -> np.ndarray:
    taken = np.zeros(cells.shape[0], dtype=bool)
    chosen = np.empty(nearest.size, dtype=np.int64)
    for i, k in enumerate(nearest):
        if taken[k]:
            free = np.flatnonzero(~taken)
            diff = cells[free] - cells[k]
            ring = np.max(np.abs(diff), axis=1)
            angle = np.mod(np.arctan2(diff[:, 1], diff[:, 0]), 2.0 * np.pi)
            k = free[np.lexsort((angle, ring))[0]]
        taken[k] = True
        chosen[i] = k
    return chosen


def snap_to_grid(vec, grid: Grid) -> FarmLayout:
    """Move each turbine to the nearest feasible cell center.

    Collisions are resolved in turbine order: a turbine whose cell is taken
    goes to the nearest free feasible cell, scanning outward ring by ring
    (Chebyshev distance in cells) and, within a ring, by counter-clockwise
    angle from east.
    """
    xy = split_vector(vec)
    n = xy.shape[0]
    if n > grid.capacity:
        raise CapacityError(f"{n} turbines but only {grid.capacity} feasible cells")
    chosen = _repair(_nearest_cells(xy, grid), grid.cells)
    return FarmLayout(grid.centers()[chosen], grid.cells[chosen].copy(), grid)


def snap_many(vecs, grid: Grid) -> np.ndarray:
    """:func:`snap_to_grid` applied to each row of ``vecs``; returns snapped vectors."""
    V = np.atleast_2d(np.asarray(vecs, dtype=float))
    L, two_n = V.shape
    n = two_n // 2
    if n > grid.capacity:
        raise CapacityError(f"{n} turbines but only {grid.capacity} feasible cells")
    xy = np.stack([V[:, :n], V[:, n:]], axis=-1).reshape(-1, 2)
    idx = _nearest_cells(xy, grid).reshape(L, n)
    srt = np.sort(idx, axis=1)
    clash = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
    for r in clash:
        idx[r] = _repair(idx[r], grid.cells)
    c = grid.centers()[idx]
    return np.concatenate([c[..., 0], c[..., 1]], axis=1)


def load_boundary(path) -> Boundary:
    """Read boundary vertices, one ``x y`` pair (meters) per line.

    A file whose first line is ``mask <cell> <x0> <y0>`` instead holds a cell
    mask: following lines are strings of ``0``/``1``, the first line being the
    southernmost row. The mask is converted to its outline polygon.
    """
    path = Path(path)
    lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise LayoutError(f"{path}: empty boundary file")
    if lines[0].split()[0].lower() == "mask":
        _, cell, x0, y0 = lines[0].split()
        rows = [[c == "1" for c in ln.replace(" ", "")] for ln in lines[1:]]
        if len({len(r) for r in rows}) != 1:
            raise LayoutError(f"{path}: mask rows differ in length")
        mask = np.array(rows, dtype=bool)
        return mask_boundary(mask, float(cell), float(x0), float(y0))
    verts = []
    for lineno, ln in enumerate(lines, 1):
        parts = ln.split()
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            if lineno == 1:
                continue
            raise LayoutError(f"{path}: line {lineno} is not a vertex: {ln!r}")
        if len(vals) != 2:
            raise LayoutError(f"{path}: line {lineno} needs two coordinates")
        verts.append(vals)
    return Boundary(np.array(verts))


def mask_boundary(mask, cell: float, x0: float = 0.0, y0: float = 0.0) -> Boundary:
    boxes = [shapely.box(x0 + ix * cell, y0 + iy * cell, x0 + (ix + 1) * cell, y0 + (iy + 1) * cell)
             for iy, ix in zip(*np.nonzero(mask))]
    union = shapely.union_all(boxes)
    if union.geom_type != "Polygon":
        raise LayoutError("cell mask must form a single connected region")
    return Boundary(np.asarray(union.exterior.coords)[:-1])


@dataclass
class WindFarmCase:
    """Everything needed to score a layout: turbines, wakes, wind, and where turbines may go."""

    n_turbines: int
    turbine: TurbineSpec
    rose: WindRose
    boundary: Boundary
    grid: Grid
    wake: WakeParams = field(default_factory=WakeParams)
    rectangular: bool = False
    name: str = ""

    @classmethod
    def build(cls, n_turbines, turbine, rose, boundary, wake=None, cell=None, name=""):
        cell = turbine.rotor_diameter if cell is None else cell
        grid = Grid.from_boundary(boundary, cell)
        poly = boundary.polygon
        rect = bool(abs(poly.area - poly.envelope.area) <= 1e-9 * poly.envelope.area)
        if n_turbines > grid.capacity:
            raise CapacityError(f"{n_turbines} turbines but only {grid.capacity} feasible cells")
        return cls(n_turbines, turbine, rose, boundary, grid, wake or WakeParams(), rect, name)

    @property
    def dim(self) -> int:
        return 2 * self.n_turbines

    def design_space(self) -> DesignSpace:
        (xl, xh), (yl, yh) = self.grid.extent()
        n = self.n_turbines
        lower = np.r_[np.full(n, xl), np.full(n, yl)]
        upper = np.r_[np.full(n, xh), np.full(n, yh)]
        if self.rectangular:
            return DesignSpace(lower, upper)
        boundary = self.boundary

        def violation(X):
            X = np.atleast_2d(X)
            pts = np.stack([X[:, :n], X[:, n:]], axis=-1).reshape(-1, 2)
            return boundary.distance_outside(pts).reshape(X.shape[0], n).sum(axis=1)

        return DesignSpace(lower, upper, violation)

    def feasible_fraction(self) -> float:
        """Probability that a uniformly random design vector has every turbine inside the boundary."""
        (xl, xh), (yl, yh) = self.grid.extent()
        return (self.boundary.polygon.area / ((xh - xl) * (yh - yl))) ** self.n_turbines

    def snap(self, vec) -> FarmLayout:
        return snap_to_grid(vec, self.grid)

    def canonicalize(self, vec) -> np.ndarray:
        return self.snap(vec).vector()

    def canonicalize_many(self, vecs) -> np.ndarray:
        return snap_many(vecs, self.grid)

    def aep_wh(self, layout) -> float:
        xy = layout.xy if isinstance(layout, FarmLayout) else split_vector(layout)
        return float(aep(xy, self.rose, self.turbine, self.wake))

    def aep_gwh(self, vec) -> float:
        """Objective for optimizers: AEP (GWh) of the snapped layout."""
        return self.aep_wh(self.snap(vec)) / 1e9

    def aep_gwh_batch(self, vecs) -> np.ndarray:
        """AEP (GWh) of many already-valid layouts at once (no snapping)."""
        V = np.atleast_2d(vecs)
        n = self.n_turbines
        xy = np.stack([V[:, :n], V[:, n:]], axis=-1)
        return np.asarray(aep(xy, self.rose, self.turbine, self.wake)) / 1e9

    def random_layouts(self, count: int, seed=None) -> np.ndarray:
        """Uniformly random valid layouts: distinct feasible cells drawn without replacement."""
        rng = np.random.default_rng(seed)
        centers = self.grid.centers()
        out = np.empty((count, self.dim))
        for i in range(count):
            pick = rng.choice(self.grid.capacity, size=self.n_turbines, replace=False)
            xy = centers[pick]
            out[i] = np.concatenate([xy[:, 0], xy[:, 1]])
        return out
