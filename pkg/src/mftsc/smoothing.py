"""Weighted L1 smoothing of log mortality curves with partial monotonicity.

Each curve solves

    min_a  sum_j w_j |f_j - a_j| + tau0 * sum_j |a'_{j+1} - a'_j|

with ``a'`` the forward difference divided by the grid spacing, subject to
``a`` being nondecreasing from a given age onwards. The problem is a linear
program and is handed to HiGHS through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import Grid, GridFunction, make_uniform_grid

TAU_GRID = tuple(10.0 ** np.arange(-3, 2.5, 0.5))


class SmoothingError(RuntimeError):
    """The linear program did not solve."""


@dataclass
class SmoothingConfig:
    """Roughness penalty and the age from which the fit must be nondecreasing.

    ``tau0=None`` asks for cross-validation over :data:`TAU_GRID`.
    """

    tau0: Optional[float] = None
    monotone_from: Optional[float] = 65.0

    def __post_init__(self):
        if self.tau0 is not None and self.tau0 < 0:
            raise ValueError(f"tau0 must be non-negative, got {self.tau0}")


@dataclass(eq=False)
class RawMortalitySurface:
    """Observed central death rates and exposures, shape ``(T, J)``, on an age grid."""

    rates: np.ndarray
    exposures: np.ndarray
    ages: Grid
    years: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rates = np.atleast_2d(np.asarray(self.rates, dtype=float))
        self.exposures = np.atleast_2d(np.asarray(self.exposures, dtype=float))
        if self.rates.shape != self.exposures.shape:
            raise ValueError("rates and exposures differ in shape")
        if self.rates.shape[1] != len(self.ages):
            raise ValueError("rate columns do not match the age grid")
        if np.any(self.exposures < 0):
            raise ValueError("exposures must be non-negative")
        bad = (self.exposures > 0) & ~(self.rates > 0)
        if np.any(bad):
            t, j = np.argwhere(bad)[0]
            raise ValueError(f"non-positive rate with positive exposure at age {self.ages.points[j]:g}"
                             f" (row {t})")
        if self.years is None:
            self.years = np.arange(self.rates.shape[0])
        self.years = np.asarray(self.years)

    @property
    def log_rates(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.rates)

    def smooth(self, config: Optional[SmoothingConfig] = None) -> np.ndarray:
        """Smoothed log rates, shape ``(T, J)``.

        Without a configured ``tau0`` one value is cross-validated on the middle
        year and used for every year.
        """
        config = config or SmoothingConfig()
        logs = self.log_rates
        weights = [inverse_variance_weights(self.rates[t], self.exposures[t], self.ages)
                   for t in range(self.rates.shape[0])]
        tau = config.tau0
        if tau is None:
            mid = self.rates.shape[0] // 2
            tau = select_tau0(logs[mid], weights[mid], self.ages, config.monotone_from)
        cfg = SmoothingConfig(tau, config.monotone_from)
        return np.array([smooth_curve(logs[t], weights[t], cfg, self.ages).values
                         for t in range(logs.shape[0])])


def inverse_variance_weights(rates, exposures, ages: Optional[Sequence[float]] = None) -> np.ndarray:
    """Weights ``m * pop``, the reciprocal of the approximate log-rate variance."""
    m = np.asarray(rates, dtype=float)
    pop = np.asarray(exposures, dtype=float)
    if m.shape != pop.shape:
        raise ValueError("rates and exposures differ in length")
    bad = ~((m > 0) & (pop > 0))
    if np.any(bad):
        j = int(np.argmax(bad))
        label = ages.points[j] if isinstance(ages, Grid) else (ages[j] if ages is not None else j)
        raise ValueError(f"rate and exposure must be positive; failed at age {label:g}")
    return m * pop


def _lp_matrices(J: int, dx: float, monotone_idx: np.ndarray):
    """Constraint blocks over variables ``[a (J), e (J), d (J-2)]``."""
    eye = sparse.identity(J, format="csr")
    n_d = max(J - 2, 0)
    rows = []
    rhs_parts = []
    # |f - a| <= e  ->  a - e <= f  and  -a - e <= -f
    rows.append(sparse.hstack([eye, -eye, sparse.csr_matrix((J, n_d))]))
    rows.append(sparse.hstack([-eye, -eye, sparse.csr_matrix((J, n_d))]))
    if n_d:
        second = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n_d, J)) / dx
        ident_d = sparse.identity(n_d)
        rows.append(sparse.hstack([second, sparse.csr_matrix((n_d, J)), -ident_d]))
        rows.append(sparse.hstack([-second, sparse.csr_matrix((n_d, J)), -ident_d]))
    if monotone_idx.size:
        # a_j - a_{j+1} <= 0
        m = monotone_idx.size
        diff = sparse.csr_matrix((np.r_[np.ones(m), -np.ones(m)],
                                  (np.r_[np.arange(m), np.arange(m)], np.r_[monotone_idx, monotone_idx + 1])),
                                 shape=(m, J))
        rows.append(sparse.hstack([diff, sparse.csr_matrix((m, J + n_d))]))
    return sparse.vstack(rows, format="csr"), n_d


def smoothing_objective(values, log_rates, weights, tau0: float, dx: float) -> float:
    """Objective of the smoothing problem at ``values`` (weights scaled to mean one)."""
    a = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / (w.mean() if w.mean() > 0 else 1.0)
    fit = np.sum(w * np.abs(np.asarray(log_rates) - a))
    slope = np.diff(a) / dx
    return float(fit + tau0 * np.sum(np.abs(np.diff(slope))))


def smooth_curve(log_rates, weights, config: Optional[SmoothingConfig] = None,
                 grid: Optional[Grid] = None) -> GridFunction:
    """Solve the smoothing LP for one curve; returns the fitted log rates.

    ``grid`` defaults to unit-spaced ages starting at 0. Zero weights are
    allowed (the fit there is driven by the penalty alone). The penalty is
    applied relative to the mean weight, so ``tau0`` does not depend on the
    scale of the exposures.
    """
    f = np.asarray(log_rates, dtype=float)
    w = np.asarray(weights, dtype=float)
    J = f.size
    grid = grid or make_uniform_grid(J, 0.0, float(J - 1))
    if len(grid) != J or w.size != J:
        raise ValueError("log rates, weights and grid must have the same length")
    if not np.all(np.isfinite(f)):
        raise ValueError("log rates must be finite")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    config = config or SmoothingConfig(tau0=1.0)
    tau = 1.0 if config.tau0 is None else float(config.tau0)
    dx = grid.spacing
    if config.monotone_from is None:
        mono = np.array([], dtype=int)
    else:
        mono = np.nonzero(grid.points[:-1] >= config.monotone_from - 1e-9)[0]
    A, n_d = _lp_matrices(J, dx, mono)
    b = np.concatenate([f, -f, np.zeros(2 * n_d), np.zeros(mono.size)])
    scale = w.mean() if w.mean() > 0 else 1.0
    c = np.concatenate([np.zeros(J), w / scale, np.full(n_d, tau)])
    bounds = [(None, None)] * J + [(0, None)] * (J + n_d)
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise SmoothingError(f"smoothing LP failed (status {res.status}, "
                             f"iterations {getattr(res, 'nit', '?')}): {res.message}")
    return GridFunction(grid, res.x[:J].copy())


def select_tau0(log_rates, weights, grid: Optional[Grid] = None,
                monotone_from: Optional[float] = 65.0, candidates=TAU_GRID,
                n_folds: int = 5) -> float:
    """Penalty with the smallest weighted L1 cross-validation error.

    Folds hold out every ``n_folds``-th age (never the two end points); held-out
    ages get zero weight in the fit and are scored against the fit. Ties keep
    the smaller penalty.
    """
    f = np.asarray(log_rates, dtype=float)
    w = np.asarray(weights, dtype=float)
    J = f.size
    grid = grid or make_uniform_grid(J, 0.0, float(J - 1))
    inner = np.arange(1, J - 1)
    if inner.size < n_folds:
        raise ValueError(f"too few ages ({J}) for {n_folds}-fold cross-validation")
    best, best_err = None, np.inf
    for tau in candidates:
        err = 0.0
        for k in range(n_folds):
            held = inner[k::n_folds]
            wk = w.copy()
            wk[held] = 0.0
            fit = smooth_curve(f, wk, SmoothingConfig(tau, monotone_from), grid).values
            err += float(np.sum(w[held] * np.abs(f[held] - fit[held])))
        if best is None or err < best_err - 1e-12 * max(1.0, abs(best_err)):
            best, best_err = float(tau), err
    return best
