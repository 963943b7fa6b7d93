"""Covariance and long-run covariance surfaces, eigen-analysis and component counts."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Grid, GridFunction, GridMismatchError, as_curve_array

logger = logging.getLogger(__name__)


class DegenerateInputWarning(UserWarning):
    """Input carries no usable variation; a documented fallback was returned."""


@dataclass(eq=False)
class KernelMatrix:
    """A bivariate surface ``c(u_j, v_k)`` on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        J = len(self.grid)
        if vals.shape != (J, J):
            raise ValueError(f"kernel must be ({J}, {J}), got {vals.shape}")
        self.values = vals

    def symmetrize(self) -> "KernelMatrix":
        return KernelMatrix(self.grid, 0.5 * (self.values + self.values.T))

    def trace(self) -> float:
        """Integral of the diagonal, i.e. the total variance of the operator."""
        return float(np.dot(self.grid.weights, np.diag(self.values)))

    def hs_norm(self) -> float:
        """Hilbert-Schmidt norm under trapezoidal quadrature."""
        return _hs_norm(self.values, self.grid.weights)


@dataclass(eq=False)
class EigenSystem:
    """Descending eigenvalues and grid-orthonormal eigenfunctions.

    ``vectors[m]`` holds the values of the m-th eigenfunction on ``grid``.
    """

    grid: Grid
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def __len__(self) -> int:
        return self.eigenvalues.size

    @property
    def eigenfunctions(self) -> list[GridFunction]:
        return [GridFunction(self.grid, v) for v in self.vectors]

    def truncate(self, n: int) -> "EigenSystem":
        if not 1 <= n <= len(self):
            raise ValueError(f"cannot keep {n} of {len(self)} components")
        return EigenSystem(self.grid, self.eigenvalues[:n].copy(), self.vectors[:n].copy())


@dataclass
class LongRunConfig:
    """Bandwidth ``h`` (None selects it from the data), flat-top threshold and lag cap."""

    bandwidth: Optional[float] = None
    flat_top_k: float = 0.5
    max_lag: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.flat_top_k < 1.0:
            raise ValueError(f"flat_top_k must lie in (0, 1), got {self.flat_top_k}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.max_lag is not None and self.max_lag < 1:
            raise ValueError(f"max_lag must be a positive integer, got {self.max_lag}")


def _hs_norm(values: np.ndarray, w: np.ndarray) -> float:
    return float(np.sqrt(np.einsum("j,jk,k->", w, values * values, w)))


def _as_stack(series, grid: Optional[Grid] = None) -> tuple[np.ndarray, Grid]:
    """Return ``(n_series, T, J)`` values; a single series gets a leading axis of 1."""
    if isinstance(series, np.ndarray) and series.ndim == 3:
        if grid is None:
            raise ValueError("a grid is required when passing raw arrays")
        if series.shape[2] != len(grid):
            raise GridMismatchError("array does not match grid length")
        return np.asarray(series, dtype=float), grid
    arr, g = as_curve_array(series, grid)
    return arr[None], g


def _centered(stack: np.ndarray) -> np.ndarray:
    return stack - stack.mean(axis=1, keepdims=True)


def _lag_product(centered: np.ndarray, q: int) -> np.ndarray:
    """Series-averaged lag-``q`` autocovariance (q >= 0) of pre-centred data."""
    n, T, J = centered.shape
    a = centered[:, : T - q].reshape(-1, J)
    b = centered[:, q:].reshape(-1, J)
    return (a.T @ b) / (n * (T - q))


def autocovariance(series, q: int, grid: Optional[Grid] = None) -> KernelMatrix:
    """Centred sample autocovariance surface at lag ``q``.

    For ``q < 0`` the surface is the transpose of the lag ``|q|`` surface and both
    branches are normalised by ``T - |q|``.
    """
    stack, g = _as_stack(series, grid)
    T = stack.shape[1]
    q = int(q)
    if abs(q) >= T:
        raise ValueError(f"|q| must be smaller than T={T}, got q={q}")
    gamma = _lag_product(_centered(stack), abs(q))
    return KernelMatrix(g, gamma if q >= 0 else gamma.T)


def flat_top_weight(x, k: float = 0.5):
    """Flat-top lag window: 1 below ``k``, linear down to 0 at 1, 0 beyond."""
    if not 0.0 < k < 1.0:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax < k, 1.0, np.where(ax < 1.0, (ax - 1.0) / (k - 1.0), 0.0))
    return float(out) if out.ndim == 0 else out


def _flat_top_l2(k: float) -> float:
    # integral of K(x)^2 over [-1, 1]
    return 2.0 * (k + (1.0 - k) / 3.0)


class LagSurfaces:
    """Lazily computed, series-averaged lag surfaces ``gamma_q`` (q >= 0)."""

    def __init__(self, centered: np.ndarray):
        self.centered = centered
        self.T = centered.shape[1]
        self.J = centered.shape[2]
        self._cache: dict = {}

    def __call__(self, q: int) -> np.ndarray:
        if q not in self._cache:
            self._cache[q] = _lag_product(self.centered, q)
        return self._cache[q]


def weighted_lag_sum(gamma, J: int, h: float, k: float, max_lag: int,
                     moment: int = 0) -> np.ndarray:
    """``sum_q K(q/h) |q|^moment gamma_q`` over ``|q| <= max_lag``, symmetrised.

    ``gamma`` maps a nonnegative lag to its ``(J, J)`` surface; negative lags use
    the transpose.
    """
    total = np.zeros((J, J))
    last = min(max_lag, int(np.ceil(h)))
    for q in range(0, last + 1):
        wq = flat_top_weight(q / h, k) * (q**moment if moment else 1.0)
        if wq == 0.0:
            continue
        gq = gamma(q)
        total += wq * (gq if q == 0 else gq + gq.T)
    return 0.5 * (total + total.T)


def plug_in_bandwidth(gamma, T: int, grid: Grid, k: float) -> tuple[float, bool]:
    """Plug-in bandwidth from lag surfaces; returns ``(h, degenerate)``."""
    J = len(grid)
    w = grid.weights
    h0 = T ** 0.2
    pilot = weighted_lag_sum(gamma, J, h0, k, T - 1)
    first_moment = weighted_lag_sum(gamma, J, h0, k, T - 1, moment=1)
    scale = _hs_norm(pilot, w) ** 2 + float(np.dot(w, np.diag(pilot))) ** 2
    if not np.isfinite(scale) or scale <= 1e-300:
        return 1.0, True
    ratio = 2.0 * _hs_norm(first_moment, w) ** 2 * T / (scale * _flat_top_l2(k))
    h = ratio ** (1.0 / 3.0)
    return float(min(max(h, 1.0), max(T - 1, 1))), False


def long_run_from_lags(gamma, T: int, grid: Grid,
                       config: Optional[LongRunConfig] = None) -> tuple[KernelMatrix, float]:
    """Long-run covariance surface and bandwidth from a lag-surface callable."""
    config = config or LongRunConfig()
    if config.bandwidth is not None:
        h = float(config.bandwidth)
    elif T >= 8:
        h, degenerate = plug_in_bandwidth(gamma, T, grid, config.flat_top_k)
        if degenerate:
            logger.debug("degenerate series in bandwidth selection; h = 1")
    else:
        h = 1.0
    max_lag = T - 2 if config.max_lag is None else config.max_lag
    max_lag = max(0, min(max_lag, T - 1))
    values = weighted_lag_sum(gamma, len(grid), h, config.flat_top_k, max_lag)
    return KernelMatrix(grid, values), h


def select_bandwidth(series, k: float = 0.5, grid: Optional[Grid] = None) -> float:
    """Plug-in bandwidth for the flat-top long-run covariance estimator.

    A pilot estimate with bandwidth ``T**(1/5)`` supplies the long-run covariance
    ``C`` and its first-moment counterpart ``C1 = sum K(q/h0) |q| gamma_q``; the
    bandwidth is then ``(2 ||C1||^2 T / ((||C||^2 + tr(C)^2) int K^2))**(1/3)``,
    clipped to ``[1, T - 1]``. Degenerate (constant) input returns 1 and emits a
    :class:`DegenerateInputWarning`.
    """
    if not 0.0 < k < 1.0:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    stack, g = _as_stack(series, grid)
    if stack.shape[1] < 8:
        raise ValueError(f"bandwidth selection needs T >= 8, got {stack.shape[1]}")
    h, degenerate = plug_in_bandwidth(LagSurfaces(_centered(stack)), stack.shape[1], g, k)
    if degenerate:
        warnings.warn("series has no variation; bandwidth set to 1", DegenerateInputWarning,
                      stacklevel=2)
    return h


def long_run_covariance_stack(stack: np.ndarray, grid: Grid,
                              config: Optional[LongRunConfig] = None) -> tuple[KernelMatrix, float]:
    """Long-run covariance pooled over a ``(n_series, T, J)`` stack.

    Each series is centred on its own temporal mean and the lag surfaces are
    averaged over series before kernel weighting, so every series shares one
    bandwidth. Returns the symmetrised surface and the bandwidth used.
    """
    T = stack.shape[1]
    if T < 2:
        raise ValueError("long-run covariance needs at least two time points")
    return long_run_from_lags(LagSurfaces(_centered(stack)), T, grid, config)


def long_run_covariance(series, config: Optional[LongRunConfig] = None,
                        grid: Optional[Grid] = None) -> KernelMatrix:
    """Flat-top kernel estimate of the long-run covariance surface of one series."""
    config = config or LongRunConfig()
    stack, g = _as_stack(series, grid)
    if stack.shape[1] < 4:
        raise ValueError(f"long-run covariance needs T >= 4, got {stack.shape[1]}")
    kernel, _ = long_run_covariance_stack(stack, g, config)
    return kernel


def sample_covariance(curves: np.ndarray, grid: Grid, ddof: int = 1) -> KernelMatrix:
    """Static covariance surface of ``(n, J)`` curves (divisor ``n - ddof``)."""
    curves = np.asarray(curves, dtype=float)
    n = curves.shape[0]
    if n - ddof <= 0:
        return KernelMatrix(grid, np.zeros((len(grid), len(grid))))
    centered = curves - curves.mean(axis=0)
    return KernelMatrix(grid, centered.T @ centered / (n - ddof))


def eigen_decompose(kernel: KernelMatrix) -> EigenSystem:
    """Eigen-analysis of the integral operator with kernel ``kernel``.

    The operator is discretised with trapezoidal weights ``w`` and the symmetric
    form ``W^{1/2} C W^{1/2}`` is diagonalised, so the returned eigenfunctions are
    exactly orthonormal under :func:`~mftsc.core.inner_product`. Negative
    eigenvalues are clipped to zero and each eigenfunction is signed so that its
    largest-magnitude entry is positive.
    """
    values = np.asarray(kernel.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("kernel contains non-finite entries")
    values = 0.5 * (values + values.T)
    s = np.sqrt(kernel.grid.weights)
    lam, vec = np.linalg.eigh(s[:, None] * values * s[None, :])
    order = np.argsort(lam, kind="stable")[::-1]
    lam = np.clip(lam[order], 0.0, None)
    funcs = (vec[:, order] / s[:, None]).T
    pivot = np.argmax(np.abs(funcs), axis=1)
    signs = np.sign(funcs[np.arange(funcs.shape[0]), pivot])
    signs[signs == 0] = 1.0
    funcs = funcs * signs[:, None]
    return EigenSystem(kernel.grid, lam, np.ascontiguousarray(funcs))


def select_n_components(eigenvalues, P: float = 0.9, n_sample: int = 2,
                        floor: float = 0.0) -> int:
    """Number of components from the variance-share and eigenvalue-ratio rules.

    Returns the larger of (a) the smallest count whose share of the positive
    eigenvalue mass reaches ``P`` and (b) the largest count ``N`` with
    ``lambda_1 / lambda_N <= sqrt(n) / log10(n)``. Eigenvalues at or below
    ``floor`` count as zero, which lets callers discard rounding noise.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if not 0.0 < P <= 1.0:
        raise ValueError(f"P must lie in (0, 1], got {P}")
    if lam.size == 0:
        raise ValueError("no eigenvalues supplied")
    positive = lam[lam > max(floor, 0.0)]
    if positive.size == 0:
        warnings.warn("all eigenvalues are zero; keeping one component", DegenerateInputWarning,
                      stacklevel=2)
        return 1
    share = np.cumsum(positive) / positive.sum()
    by_share = int(np.searchsorted(share, P - 1e-12) + 1)
    by_share = min(by_share, positive.size)
    n = float(n_sample)
    bound = np.inf if n <= 1 else np.sqrt(n) / np.log10(n)
    ok = np.nonzero(lam[0] / positive <= bound)[0]
    by_ratio = int(ok[-1] + 1) if ok.size else 1
    return max(1, by_share, by_ratio)


def project_scores(curve, basis: EigenSystem, n: Optional[int] = None) -> np.ndarray:
    """Scores ``<curve, phi_m>`` for the first ``n`` eigenfunctions.

    ``curve`` may be a GridFunction or an array whose last axis is the grid.
    """
    n = len(basis) if n is None else int(n)
    if n > len(basis):
        raise ValueError(f"requested {n} scores from a basis of {len(basis)}")
    if isinstance(curve, GridFunction):
        if curve.grid != basis.grid:
            raise GridMismatchError("curve and basis live on different grids")
        vals = curve.values
    else:
        vals = np.asarray(curve, dtype=float)
        if vals.shape[-1] != len(basis.grid):
            raise GridMismatchError("curve values do not match basis grid")
    return (vals * basis.grid.weights) @ basis.vectors[:n].T
