"""Uniform grids on a rectangle in the complex plane: sampled functions,
quadrature, and global / cube-localized norms.

The discretization model is deliberately simple.  A function is one complex
sample per cell, constant on the cell and identically zero outside the grid
rectangle.  Integrals are midpoint sums (value at the cell center times the
cell area), and cubes that cut through cells pick up area-proportional
weights, so cube averages are exact for this piecewise-constant model and
vary continuously with the cube position.

All operations here are pure functions of immutable inputs and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyIntersectionError, IncompatibleGridsError, InvalidExponentError

__all__ = [
    "ComplexGrid",
    "GridFunction",
    "Cube",
    "KolmogorovReport",
    "axis_overlap",
    "cube_overlap",
    "cube_integral",
    "cube_average",
    "normalized_lp_on_cube",
    "lp_norm",
    "weak_lq_quasinorm",
    "kolmogorov_check",
    "indicator_cube",
    "indicator_disk",
    "read_grid_function",
    "write_grid_function",
]


@dataclass(frozen=True)
class ComplexGrid:
    """An nx-by-ny array of square cells of side ``h``; lower-left corner (x0, y0).

    Cell (i, j) covers [x0 + i*h, x0 + (i+1)*h) x [y0 + j*h, y0 + (j+1)*h) and
    carries the sample point x0 + (i+1/2)*h + 1j*(y0 + (j+1/2)*h).
    """

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"cell side must be positive, got {self.h}")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"need at least one cell per axis, got {self.nx}x{self.ny}")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def x1(self) -> float:
        return self.x0 + self.nx * self.h

    @property
    def y1(self) -> float:
        return self.y0 + self.ny * self.h

    def x_centers(self) -> np.ndarray:
        return self.x0 + (np.arange(self.nx) + 0.5) * self.h

    def y_centers(self) -> np.ndarray:
        return self.y0 + (np.arange(self.ny) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Flat complex array of cell centers, x-index fastest."""
        zx = self.x_centers()
        zy = self.y_centers()
        return (zx[None, :] + 1j * zy[:, None]).ravel()

    def bounding_cube(self) -> "Cube":
        """Smallest axis-aligned square with the grid's lower-left corner
        covering the whole rectangle."""
        return Cube(self.x0, self.y0, max(self.nx, self.ny) * self.h)

    def scaled(self, delta: float) -> "ComplexGrid":
        """Grid with the same cell counts covering the dilated rectangle."""
        return ComplexGrid(self.x0 * delta, self.y0 * delta, self.h * delta, self.nx, self.ny)

    def refined(self) -> "ComplexGrid":
        """Same rectangle with every cell split in four."""
        return ComplexGrid(self.x0, self.y0, self.h / 2, 2 * self.nx, 2 * self.ny)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on a :class:`ComplexGrid`, one value per cell.

    ``values`` is flat, row-major with the x-index fastest, i.e. the sample of
    cell (i, j) sits at ``values[j * nx + i]``.  Instances are immutable.
    """

    grid: ComplexGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128).reshape(-1).copy()
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v.real)) or not np.all(np.isfinite(v.imag)):
            raise ValueError("grid-function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: ComplexGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.centers()), dtype=np.complex128))

    @classmethod
    def zeros(cls, grid: ComplexGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.size, dtype=np.complex128))

    @property
    def values2d(self) -> np.ndarray:
        """(ny, nx) view of the samples."""
        return self.values.reshape(self.grid.ny, self.grid.nx)

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values.imag) <= tol))

    def is_nonnegative(self) -> bool:
        return self.is_real() and bool(np.all(self.values.real >= 0))

    def __abs__(self) -> "GridFunction":
        return GridFunction(self.grid, np.abs(self.values))

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, other) -> "GridFunction":
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return GridFunction(self.grid, self.values * other.values)
        return GridFunction(self.grid, self.values * complex(other))

    __rmul__ = __mul__

    def integral(self) -> complex:
        """Plain midpoint integral over the whole rectangle."""
        return complex(self.values.sum() * self.grid.cell_area)


def _check_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise IncompatibleGridsError(f"grids differ: {f.grid} vs {g.grid}")


@dataclass(frozen=True)
class Cube:
    """Axis-aligned half-open square [x, x+side) x [y, y+side)."""

    x: float
    y: float
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError(f"cube side must be positive, got {self.side}")

    @property
    def area(self) -> float:
        return self.side * self.side

    @property
    def center(self) -> complex:
        return complex(self.x + self.side / 2, self.y + self.side / 2)

    def contains_point(self, z: complex) -> bool:
        return (self.x <= z.real < self.x + self.side) and (self.y <= z.imag < self.y + self.side)


# ----------------------------------------------------------------------------
# cube/cell overlap machinery


def axis_overlap(a0: float, h: float, n: int, lo: float, hi: float):
    """Overlap lengths of [lo, hi) against the cells [a0 + i*h, a0 + (i+1)*h).

    Returns (i0, i1, w) where cells i0..i1-1 intersect the interval and w[k]
    is the overlap length of cell i0+k (w can contain zeros at the fringes
    after float clipping).
    """
    if hi <= a0 or lo >= a0 + n * h:
        return 0, 0, np.zeros(0)
    i0 = max(0, int(math.floor((lo - a0) / h)))
    i1 = min(n, int(math.ceil((hi - a0) / h)))
    if i0 >= i1:
        return i0, i0, np.zeros(0)
    left = a0 + np.arange(i0, i1) * h
    w = np.minimum(hi, left + h) - np.maximum(lo, left)
    return i0, i1, np.clip(w, 0.0, h)


def cube_overlap(grid: ComplexGrid, cube: Cube):
    """Per-axis overlap of ``cube`` with the grid cells.

    Returns (i0, i1, j0, j1, wx, wy); the overlap area of cell (i, j) is
    wx[i-i0] * wy[j-j0].  Raises if the cube misses the rectangle entirely.
    """
    i0, i1, wx = axis_overlap(grid.x0, grid.h, grid.nx, cube.x, cube.x + cube.side)
    j0, j1, wy = axis_overlap(grid.y0, grid.h, grid.ny, cube.y, cube.y + cube.side)
    if wx.size == 0 or wy.size == 0 or wx.sum() * wy.sum() == 0.0:
        raise EmptyIntersectionError(f"cube {cube} does not meet the grid rectangle")
    return i0, i1, j0, j1, wx, wy


def cube_integral(f: GridFunction, cube: Cube) -> complex:
    """Integral of f over the cube (f is zero outside the grid rectangle)."""
    i0, i1, j0, j1, wx, wy = cube_overlap(f.grid, cube)
    block = f.values2d[j0:j1, i0:i1]
    return complex(wy @ block @ wx)


def cube_average(f: GridFunction, cube: Cube) -> complex:
    """Average (1/|Q|) * integral of f over Q.

    Cells partially covered by Q contribute in proportion to the covered
    area; the divisor is always the full cube area.
    """
    return cube_integral(f, cube) / cube.area


def normalized_lp_on_cube(f: GridFunction, cube: Cube, p: float) -> float:
    """Normalized norm ((1/|Q|) * integral over Q of |f|^p)^(1/p)."""
    if p < 1:
        raise InvalidExponentError(f"normalized cube norm needs p >= 1, got {p}")
    i0, i1, j0, j1, wx, wy = cube_overlap(f.grid, cube)
    block = np.abs(f.values2d[j0:j1, i0:i1]) ** p
    return float(wy @ block @ wx / cube.area) ** (1.0 / p)


# ----------------------------------------------------------------------------
# global norms


def lp_norm(f: GridFunction, p: float) -> float:
    """Strong norm (sum over cells of |f|^p * h^2)^(1/p)."""
    if p < 1:
        raise InvalidExponentError(f"lp_norm needs p >= 1, got {p}")
    return float(np.sum(np.abs(f.values) ** p) * f.grid.cell_area) ** (1.0 / p)


def _weak_quasinorm_weighted(mags: np.ndarray, weights: np.ndarray, q: float) -> float:
    """sup over lambda of lambda * mu(|f| > lambda)^(1/q) for a weighted sample set.

    On a finite sample set the supremum is attained in the limit lambda -> v
    from below for a sampled magnitude v, where it equals v * mu(|f| >= v)^(1/q);
    scanning the distinct sampled values is therefore exact.
    """
    order = np.argsort(mags, kind="stable")
    m = mags[order]
    w = weights[order]
    suffix = np.cumsum(w[::-1])[::-1]
    first = np.ones(m.size, dtype=bool)
    first[1:] = m[1:] > m[:-1]
    m, suffix = m[first], suffix[first]
    keep = m > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(m[keep] * suffix[keep] ** (1.0 / q)))


def weak_lq_quasinorm(f: GridFunction, q: float) -> float:
    """Weak quasinorm sup_lambda lambda * |{|f| > lambda}|^(1/q) on the grid."""
    if q < 1:
        raise InvalidExponentError(f"weak quasinorm needs q >= 1, got {q}")
    mags = np.abs(f.values)
    weights = np.full(mags.size, f.grid.cell_area)
    return _weak_quasinorm_weighted(mags, weights, q)


@dataclass(frozen=True)
class KolmogorovReport:
    lhs: float
    rhs: float
    holds: bool
    weak_norm: float
    measure: float


def kolmogorov_check(f: GridFunction, X: Cube, p: float, q: float) -> KolmogorovReport:
    """Compare the strong p-integral of f on X against the weak-q bound
    (q/(q-p)) * mu(X)^(1-p/q) * ||f||_{q,weak}^p, with mu the area measure
    restricted to X.
    """
    if not (0 < p < q):
        raise InvalidExponentError(f"need 0 < p < q, got p={p}, q={q}")
    i0, i1, j0, j1, wx, wy = cube_overlap(f.grid, X)
    mags = np.abs(f.values2d[j0:j1, i0:i1]).ravel()
    weights = np.outer(wy, wx).ravel()
    lhs = float(np.sum(mags**p * weights))
    mu = float(weights.sum())
    weak = _weak_quasinorm_weighted(mags, weights, q)
    rhs = q / (q - p) * mu ** (1.0 - p / q) * weak**p
    return KolmogorovReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs * (1 + 1e-9), weak_norm=weak, measure=mu)


# ----------------------------------------------------------------------------
# ready-made samples


def indicator_cube(grid: ComplexGrid, cube: Cube) -> GridFunction:
    """Indicator of the cube, sampled at cell centers."""
    inx = (grid.x_centers() >= cube.x) & (grid.x_centers() < cube.x + cube.side)
    iny = (grid.y_centers() >= cube.y) & (grid.y_centers() < cube.y + cube.side)
    return GridFunction(grid, (inx[None, :] & iny[:, None]).astype(np.complex128).ravel())


def indicator_disk(grid: ComplexGrid, center: complex = 0j, radius: float = 1.0) -> GridFunction:
    return GridFunction.from_callable(grid, lambda z: (np.abs(z - center) < radius).astype(np.complex128))


# ----------------------------------------------------------------------------
# file format: "CGRID x0 y0 h nx ny" header, then nx*ny "re im" lines, x fastest


def write_grid_function(f: GridFunction, path: str) -> None:
    g = f.grid
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"CGRID {g.x0:.17g} {g.y0:.17g} {g.h:.17g} {g.nx} {g.ny}\n")
        for v in f.values:
            fh.write(f"{v.real:.17g} {v.imag:.17g}\n")


def read_grid_function(path: str) -> GridFunction:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "CGRID":
            raise ValueError(f"{path}: malformed CGRID header")
        x0, y0, h = (float(t) for t in header[1:4])
        nx, ny = int(header[4]), int(header[5])
        grid = ComplexGrid(x0, y0, h, nx, ny)
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (grid.size, 2):
        raise ValueError(f"{path}: expected {grid.size} value lines, got {data.shape[0]}")
    return GridFunction(grid, data[:, 0] + 1j * data[:, 1])
