"""Grids, trapezoidal quadrature and the curve containers shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two curves or a curve and a kernel live on different grids."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform evaluation grid over a continuum (ages, or [0, 1] in simulations).

    Parameters
    ----------
    points : array-like of shape (J,)
        Strictly increasing, equally spaced grid points.
    """

    points: np.ndarray
    spacing: float = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        steps = np.diff(pts)
        spacing = (pts[-1] - pts[0]) / (pts.size - 1)
        if spacing <= 0 or np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.max(np.abs(steps - spacing)) > 1e-12 * max(1.0, abs(spacing)):
            raise ValueError("grid points must be uniformly spaced")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "spacing", float(spacing))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.allclose(self.points, other.points, rtol=0, atol=1e-12)
        )

    def __hash__(self) -> int:
        return hash((self.points.size, round(self.points[0], 10), round(self.spacing, 12)))

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (length J)."""
        w = np.full(self.points.size, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


def make_uniform_grid(n_points: int, a: float, b: float) -> Grid:
    """Return ``n_points`` equally spaced points from ``a`` to ``b`` inclusive."""
    if int(n_points) != n_points or n_points < 2:
        raise ValueError(f"n_points must be an integer >= 2, got {n_points!r}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    n = int(n_points)
    return Grid(a + np.arange(n) * ((b - a) / (n - 1)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function sampled on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"values has shape {vals.shape}, expected ({len(self.grid)},)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _check(self, other: "GridFunction") -> None:
        if not isinstance(other, GridFunction):
            raise TypeError(f"expected GridFunction, got {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError("curves are sampled on different grids")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.points), dtype=float))


def _pair(f: GridFunction, g: GridFunction) -> Grid:
    if not isinstance(f, GridFunction) or not isinstance(g, GridFunction):
        raise TypeError("inner_product expects two GridFunction objects")
    if f.grid != g.grid:
        raise GridMismatchError("curves are sampled on different grids")
    return f.grid


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Trapezoidal approximation of the L2 inner product of two curves."""
    grid = _pair(f, g)
    return float(np.dot(grid.weights, f.values * g.values))


def l2_distance(f: GridFunction, g: GridFunction) -> float:
    """L2 distance between two curves on a shared grid."""
    grid = _pair(f, g)
    diff = f.values - g.values
    return float(np.sqrt(max(np.dot(grid.weights, diff * diff), 0.0)))


def l2_norms(values: np.ndarray, grid: Grid) -> np.ndarray:
    """L2 norms of curves stored along the last axis of ``values``."""
    return np.sqrt(np.maximum((values * values) @ grid.weights, 0.0))


@dataclass(eq=False)
class FTSPanel:
    """A panel of ``I`` functional time series with ``T`` curves each.

    Parameters
    ----------
    grid : Grid
        Grid shared by every curve.
    values : ndarray of shape (I, T, J)
        ``values[i, t]`` is the curve of object ``i`` at time ``t``.
    labels : sequence of str, optional
        Object identifiers; defaults to ``"0", "1", ...``.
    times : sequence of int, optional
        Time stamps (e.g. calendar years); defaults to ``0 .. T-1``.
    """

    grid: Grid
    values: np.ndarray
    labels: Optional[Sequence[str]] = None
    times: Optional[Sequence[int]] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError(
                f"panel values must be 3-D (objects, times, grid), got ndim={vals.ndim}"
            )
        if vals.shape[2] != len(self.grid):
            raise GridMismatchError(
                f"panel curves have {vals.shape[2]} points, grid has {len(self.grid)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("panel contains non-finite values")
        self.values = vals
        n_obj, n_time = vals.shape[:2]
        self.labels = [str(i) for i in range(n_obj)] if self.labels is None else [str(s) for s in self.labels]
        self.times = list(range(n_time)) if self.times is None else [int(t) for t in self.times]
        if len(self.labels) != n_obj:
            raise ValueError("number of labels does not match number of objects")
        if len(self.times) != n_time:
            raise ValueError("number of time stamps does not match number of curves")

    @classmethod
    def from_series(cls, series, labels=None, times=None) -> "FTSPanel":
        """Build a panel from nested lists of GridFunctions; rejects ragged input."""
        series = [list(s) for s in series]
        if not series or not series[0]:
            raise ValueError("empty panel")
        lengths = {len(s) for s in series}
        if len(lengths) != 1:
            raise ValueError(f"ragged panel: series lengths {sorted(lengths)}")
        grid = series[0][0].grid
        for s in series:
            for f in s:
                if f.grid != grid:
                    raise GridMismatchError("all curves in a panel must share one grid")
        values = np.array([[f.values for f in s] for s in series])
        return cls(grid, values, labels=labels, times=times)

    @property
    def n_objects(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def curve(self, i: int, t: int) -> GridFunction:
        return GridFunction(self.grid, self.values[i, t])

    def series(self, i: int) -> list[GridFunction]:
        return [GridFunction(self.grid, v) for v in self.values[i]]

    def subset(self, objects=None, times=None) -> "FTSPanel":
        """Panel restricted to the given object indices and/or time indices."""
        obj = np.arange(self.n_objects) if objects is None else np.asarray(objects, dtype=int)
        tim = np.arange(self.n_times) if times is None else np.asarray(times, dtype=int)
        return FTSPanel(
            self.grid,
            self.values[np.ix_(obj, tim)],
            labels=[self.labels[k] for k in obj],
            times=[self.times[k] for k in tim],
        )


def as_curve_array(series, grid: Optional[Grid] = None) -> tuple[np.ndarray, Grid]:
    """Coerce a sequence of GridFunctions (or an array plus grid) to ``(T, J)`` values."""
    if isinstance(series, np.ndarray):
        if grid is None:
            raise ValueError("a grid is required when passing raw arrays")
        arr = np.asarray(series, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(grid):
            raise GridMismatchError(f"expected shape (T, {len(grid)}), got {arr.shape}")
        return arr, grid
    series = list(series)
    if not series:
        raise ValueError("empty series")
    g = series[0].grid
    if grid is not None and g != grid:
        raise GridMismatchError("series grid differs from the requested grid")
    for f in series:
        if f.grid != g:
            raise GridMismatchError("all curves in a series must share one grid")
    return np.array([f.values for f in series]), g
