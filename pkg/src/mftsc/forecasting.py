"""Score-based forecasting of functional time series panels.

Scores are forecast with least-squares VAR models, curves are rebuilt from the
forecast scores, and accuracy is assessed with an expanding window (RMSFE and
interval scores of bootstrap pointwise prediction intervals).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import FTSPanel, Grid
from .fpca import LagSurfaces, LongRunConfig, eigen_decompose, long_run_from_lags, project_scores, select_n_components
from .panel import PanelModelFit, SubsetFitter

logger = logging.getLogger(__name__)

METHODS = ("MFTSC", "UTS")


class StationarityWarning(UserWarning):
    """A fitted VAR has a companion spectral radius of at least one."""


class IllConditionedWarning(UserWarning):
    """The VAR design matrix was rank deficient and a ridge solve was used."""


@dataclass(eq=False)
class VARModel:
    """VAR(p) with intercept: ``x_t = c + sum_j A_j x_{t-j} + e_t``.

    ``coefs[j-1]`` holds ``A_j``; ``residuals`` has ``T_fit - p`` rows.
    """

    order: int
    intercept: np.ndarray
    coefs: np.ndarray
    residuals: np.ndarray
    aic: float = float("nan")
    ridge: bool = False

    def __post_init__(self):
        self.intercept = np.atleast_1d(np.asarray(self.intercept, dtype=float))
        self.coefs = np.asarray(self.coefs, dtype=float)
        d = self.intercept.size
        if self.coefs.shape != (self.order, d, d):
            raise ValueError(f"coefficient array must have shape ({self.order}, {d}, {d})")

    @property
    def dimension(self) -> int:
        return self.intercept.size

    def companion(self) -> np.ndarray:
        p, d = self.order, self.dimension
        top = np.concatenate(list(self.coefs), axis=1)
        if p == 1:
            return top
        lower = np.eye(d * (p - 1), d * p)
        return np.vstack([top, lower])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    @property
    def is_stationary(self) -> bool:
        return self.spectral_radius() < 1.0


def _lagged_design(x: np.ndarray, p: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``t = start..T-1``: targets ``x_t`` and regressors ``[1, x_{t-1}, ..., x_{t-p}]``."""
    T = x.shape[0]
    rows = np.arange(start, T)
    Z = [np.ones((rows.size, 1))] + [x[rows - j] for j in range(1, p + 1)]
    return x[rows], np.hstack(Z)


def _solve(Z: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, bool]:
    gram = Z.T @ Z
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        lam = 1e-8 * max(np.trace(gram) / gram.shape[0], 1e-300)
        return np.linalg.solve(gram + lam * np.eye(gram.shape[0]), Z.T @ Y), True
    B, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    return B, False


def _log_det(resid: np.ndarray) -> float:
    n = resid.shape[0]
    sigma = resid.T @ resid / n
    sign, logdet = np.linalg.slogdet(sigma)
    return logdet if sign > 0 else -np.inf


def max_feasible_order(T: int, d: int, p_max: int = 5) -> int:
    """Largest order with ``T >= d*p + p + 2``, at least 1 and at most ``p_max``."""
    return max(1, min(p_max, (T - 2) // (d + 1)))


def fit_var(scores, p_max: int = 5) -> VARModel:
    """Least-squares VAR with intercept, order chosen by AIC over ``1..p_max``.

    ``p_max`` is reduced to what the sample supports. Orders are compared on the
    common sample after dropping the first ``p_max`` observations; ties go to
    the smaller order. The chosen order is then refitted on all observations.
    A rank-deficient design triggers a ridge solve with a warning.
    """
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("scores must be a (T, d) matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("scores contain non-finite values")
    T, d = x.shape
    if T < 3:
        raise ValueError(f"VAR needs at least 3 observations, got {T}")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    top = max_feasible_order(T, d, p_max)
    best_p, best_aic = 1, np.inf
    if top > 1:
        for p in range(1, top + 1):
            Y, Z = _lagged_design(x, p, top)
            B, _ = _solve(Z, Y)
            aic = _log_det(Y - Z @ B) + 2.0 * (p * d * d + d) / Y.shape[0]
            if aic < best_aic - 1e-12:
                best_p, best_aic = p, aic
    Y, Z = _lagged_design(x, best_p, best_p)
    B, ridge = _solve(Z, Y)
    if ridge:
        warnings.warn("rank-deficient VAR design; using a ridge-regularised solve",
                      IllConditionedWarning, stacklevel=2)
    resid = Y - Z @ B
    coefs = np.stack([B[1 + j * d: 1 + (j + 1) * d].T for j in range(best_p)])
    aic = _log_det(resid) + 2.0 * (best_p * d * d + d) / max(Y.shape[0], 1)
    return VARModel(best_p, B[0], coefs, resid, float(aic), ridge)


def forecast_scores(model: VARModel, last_obs, h: int) -> np.ndarray:
    """Iterated ``h``-step forecasts from the last ``p`` observations (oldest first)."""
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    hist = np.asarray(last_obs, dtype=float).reshape(-1, model.dimension)
    if hist.shape[0] < model.order:
        raise ValueError(f"need {model.order} past observations, got {hist.shape[0]}")
    if not model.is_stationary:
        warnings.warn(f"VAR spectral radius {model.spectral_radius():.3f} >= 1; "
                      "forecasts are not mean reverting", StationarityWarning, stacklevel=2)
    state = list(hist[-model.order:])
    out = np.empty((h, model.dimension))
    for step in range(h):
        nxt = model.intercept.copy()
        for j in range(model.order):
            nxt += model.coefs[j] @ state[-1 - j]
        out[step] = nxt
        state.append(nxt)
    return out


def _var_forecast(series: np.ndarray, h: int, p_max: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StationarityWarning)
        model = fit_var(series, p_max)
        return forecast_scores(model, series[-model.order:], h)


@dataclass(eq=False)
class ScoreModel:
    """A curve series written as ``level + sum_b scores_b @ vectors_b``.

    Each block ``(scores (T, d), vectors (d, J))`` is forecast by its own VAR.
    """

    level: np.ndarray
    blocks: list

    @property
    def n_times(self) -> int:
        return self.blocks[0][0].shape[0]

    def forecast(self, h: int, p_max: int = 5, upto: Optional[int] = None) -> np.ndarray:
        """``(h, J)`` forecasts from the first ``upto`` score rows (default all)."""
        upto = self.n_times if upto is None else int(upto)
        out = np.broadcast_to(self.level, (h, self.level.size)).copy()
        for scores, vectors in self.blocks:
            out += _var_forecast(scores[:upto], h, p_max) @ vectors
        return out

    def in_sample_errors(self, actual: np.ndarray, h: int, p_max: int = 5,
                         min_train: Optional[int] = None) -> np.ndarray:
        """Errors ``y_{k+h} - yhat_{k+h|k}`` for expanding origins inside the span.

        Only the VAR is refitted per origin; bases and scores stay at their
        full-span estimates. Returns an ``(n_origins, J)`` array.
        """
        return self.in_sample_error_table(actual, h, p_max, min_train)[h - 1]

    def in_sample_error_table(self, actual: np.ndarray, max_h: int, p_max: int = 5,
                              min_train: Optional[int] = None) -> list[np.ndarray]:
        """In-sample errors for every horizon ``1..max_h`` from one pass over origins.

        Origins start at ``min_train`` (default ``max(d + 3, T // 2)``, lowered to
        ``d + 3`` when that leaves fewer than 8 errors at ``max_h``).
        """
        T = self.n_times
        floor = max(max(b[0].shape[1] for b in self.blocks) + 3, 3)
        k0 = min_train if min_train is not None else max(floor, T // 2)
        if T - max_h - k0 + 1 < 8:
            k0 = floor
        if k0 > T - 1:
            raise ValueError(f"no in-sample origins with T={T}")
        table: list = [[] for _ in range(max_h)]
        for k in range(k0, T):
            steps = min(max_h, T - k)
            fc = self.forecast(steps, p_max, upto=k)
            for h in range(1, steps + 1):
                table[h - 1].append(actual[k + h - 1] - fc[h - 1])
        if not table[max_h - 1]:
            raise ValueError(f"no in-sample origins for h={max_h} with T={T}")
        return [np.array(rows) for rows in table]


def object_score_model(fit: PanelModelFit, i: int) -> ScoreModel:
    """Score model of object ``i`` under a panel fit, with the full object effect."""
    dec = fit.decomposition
    level = dec.mu + dec.eta[i]
    return ScoreModel(level, [(fit.xi, fit.r_basis.vectors), (fit.zeta[i], fit.u_basis.vectors)])


def forecast_curves(fit: PanelModelFit, i: int, kappa: int, h: int, p_max: int = 5) -> np.ndarray:
    """``h``-step curve forecasts for object ``i`` from a fit on the first ``kappa`` times.

    Common-trend scores are forecast once per cluster and object-trend scores per
    object; the object effect is kept un-truncated. Returns ``(h, J)``.
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    T = fit.xi.shape[0]
    if kappa != T:
        raise ValueError(f"fit covers {T} time points but kappa = {kappa}")
    if not 0 <= i < fit.zeta.shape[0]:
        raise IndexError(f"object {i} outside fit with {fit.zeta.shape[0]} objects")
    return object_score_model(fit, i).forecast(h, p_max)


def univariate_score_model(series: np.ndarray, grid: Grid, P: float = 0.9,
                           lr_config: Optional[LongRunConfig] = None) -> ScoreModel:
    """Baseline for one object: static mean plus dynamic FPCA of that object alone."""
    series = np.asarray(series, dtype=float)
    T = series.shape[0]
    if T < 4:
        raise ValueError(f"baseline needs T >= 4, got {T}")
    mean = series.mean(axis=0)
    centered = series - mean
    kernel, _ = long_run_from_lags(LagSurfaces(centered[None]), T, grid, lr_config)
    eig = eigen_decompose(kernel)
    n = select_n_components(eig.eigenvalues, P, T)
    basis = eig.truncate(n)
    return ScoreModel(mean, [(project_scores(centered, basis), basis.vectors)])


def rmsfe(actuals, forecasts) -> float:
    """Root mean squared error over all windows and grid points."""
    a, f = np.asarray(actuals, dtype=float), np.asarray(forecasts, dtype=float)
    if a.shape != f.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {f.shape}")
    if a.size == 0:
        raise ValueError("no forecasts to evaluate")
    return float(np.sqrt(np.mean((a - f) ** 2)))


@dataclass(eq=False)
class PredictionInterval:
    """Pointwise band ``forecast + theta * (gamma_lb, gamma_ub)``."""

    lower: np.ndarray
    upper: np.ndarray
    theta: float
    alpha: float

    def __post_init__(self):
        if np.any(self.lower > self.upper + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        if not self.theta > 0:
            raise ValueError("theta must be positive")


def _coverage(errors: np.ndarray, lb: np.ndarray, ub: np.ndarray, theta: float) -> float:
    return float(np.mean((errors >= theta * lb) & (errors <= theta * ub)))


def tune_theta(errors: np.ndarray, lb: np.ndarray, ub: np.ndarray, alpha: float,
               resolution: float = 1e-3) -> float:
    """Smallest ``theta`` (to ``resolution``) whose in-sample coverage reaches ``1 - alpha``."""
    target = 1.0 - alpha - 1e-12
    hi = 1.0
    while _coverage(errors, lb, ub, hi) < target:
        hi *= 2.0
        if hi > 2.0**20:
            warnings.warn("target coverage unreachable by scaling; theta capped", stacklevel=2)
            return hi
    lo = 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _coverage(errors, lb, ub, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def bootstrap_prediction_interval(in_sample_errors, point_forecast, alpha: float = 0.2,
                                  B: int = 1000, seed=None) -> PredictionInterval:
    """Pointwise interval from resampled in-sample forecast errors.

    Whole error curves are drawn with replacement ``B`` times; the pointwise
    ``alpha/2`` and ``1 - alpha/2`` quantiles of the draws give ``gamma_lb`` and
    ``gamma_ub``, and ``theta`` rescales them to in-sample coverage ``1 - alpha``.
    """
    errors = np.asarray(in_sample_errors, dtype=float)
    if errors.ndim == 1:
        errors = errors[:, None]
    forecast = np.asarray(point_forecast, dtype=float).reshape(-1)
    if errors.shape[1] != forecast.size:
        raise ValueError("error curves and forecast have different lengths")
    if errors.shape[0] < 8:
        raise ValueError(f"need at least 8 error samples per point, got {errors.shape[0]}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if np.all(errors == 0):
        warnings.warn("all in-sample errors are zero; returning a zero-width interval",
                      stacklevel=2)
        return PredictionInterval(forecast.copy(), forecast.copy(), 1.0, alpha)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = errors[rng.integers(0, errors.shape[0], size=B)]
    lb, ub = np.quantile(draws, [alpha / 2, 1 - alpha / 2], axis=0)
    theta = tune_theta(errors, lb, ub, alpha)
    lower, upper = forecast + theta * lb, forecast + theta * ub
    return PredictionInterval(np.minimum(lower, upper), np.maximum(lower, upper), theta, alpha)


def interval_score(lower, upper, actual, alpha: float) -> float:
    """Interval score averaged over grid points (and any leading axes)."""
    lower, upper, actual = (np.asarray(v, dtype=float) for v in (lower, upper, actual))
    if np.any(lower > upper):
        raise ValueError("crossed bounds: lower exceeds upper")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    score = (upper - lower
             + (2.0 / alpha) * (lower - actual) * (actual < lower)
             + (2.0 / alpha) * (actual - upper) * (actual > upper))
    return float(np.mean(score))


def mean_interval_score(intervals: Sequence[PredictionInterval], actuals) -> float:
    """Mean interval score over a set of windows."""
    if len(intervals) == 0:
        raise ValueError("no intervals to score")
    return float(np.mean([interval_score(iv.lower, iv.upper, a, iv.alpha)
                          for iv, a in zip(intervals, actuals)]))


@dataclass
class ForecastReport:
    """Per-horizon accuracy averaged over objects.

    ``rmsfe[h-1]`` is the mean over objects of each object's RMSFE at horizon
    ``h``; ``counts[h-1]`` is the number of windows evaluated.
    """

    method: str
    horizons: list
    rmsfe: list
    counts: list
    interval_score: Optional[list] = None
    per_object_rmsfe: Optional[list] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = list(self.rmsfe) + list(self.interval_score or [])
        if any(v < 0 for v in vals):
            raise ValueError("accuracy values must be non-negative")

    def to_dict(self) -> dict:
        return {
            "schema": "mftsc.forecast_report/v1",
            "method": self.method,
            "horizons": [int(h) for h in self.horizons],
            "counts": [int(c) for c in self.counts],
            "rmsfe": [float(v) for v in self.rmsfe],
            "interval_score": None if self.interval_score is None else [float(v) for v in self.interval_score],
            "per_object_rmsfe": self.per_object_rmsfe,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_rows(self) -> list[dict]:
        """One row per horizon: method, h, windows, rmsfe, interval_score."""
        rows = []
        for idx, h in enumerate(self.horizons):
            rows.append({
                "method": self.method,
                "h": int(h),
                "windows": int(self.counts[idx]),
                "rmsfe": float(self.rmsfe[idx]),
                "interval_score": (None if self.interval_score is None
                                   else float(self.interval_score[idx])),
            })
        return rows


def _task_rng(seed: int, kappa: int, i: int, h: int) -> np.random.Generator:
    """Generator keyed by (origin, object, horizon), independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(kappa), int(i), int(h))))


def _score_models(values: np.ndarray, grid: Grid, method: str, labels, P, lr_config) -> list[ScoreModel]:
    I = values.shape[0]
    if method == "UTS":
        return [univariate_score_model(values[i], grid, P[1], lr_config) for i in range(I)]
    if method != "MFTSC":
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    labels = np.ones(I, dtype=int) if labels is None else np.asarray(labels, dtype=int)
    if labels.shape != (I,):
        raise ValueError("labels must have one entry per object")
    fitter = SubsetFitter(values, grid, *P, lr_config=lr_config)
    models: list = [None] * I
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        if members.size < 2:
            # a lone object has no cluster to borrow from
            models[members[0]] = univariate_score_model(values[members[0]], grid, P[1], lr_config)
            continue
        fit = fitter.fit(members)
        for pos, i in enumerate(members):
            models[i] = object_score_model(fit, pos)
    return models


def expanding_window_evaluation(panel, n: int, method: str = "MFTSC", labels=None,
                                max_horizon: Optional[int] = None, P=(0.9, 0.9, 0.9),
                                lr_config: Optional[LongRunConfig] = None, p_max: int = 5,
                                intervals: bool = False, alpha: float = 0.2, B: int = 1000,
                                seed: int = 0) -> ForecastReport:
    """Expanding-window evaluation over origins ``kappa = n, ..., N - 1``.

    At every origin the models are refitted on the first ``kappa`` time points
    and forecasts made for ``h = 1..min(max_horizon, N - kappa)``, giving
    ``N - n - h + 1`` windows at horizon ``h``. ``labels`` (1-based clusters)
    apply to ``MFTSC``; ``UTS`` fits every object alone. With ``intervals`` the
    bootstrap bands are scored too, each (origin, object, horizon) task drawing
    from its own seed substream.
    """
    if isinstance(panel, FTSPanel):
        values, grid = panel.values, panel.grid
    else:
        values, grid = panel
        values = np.asarray(values, dtype=float)
    I, N, J = values.shape
    if N - n < 1:
        raise ValueError(f"need at least one held-out time point (N={N}, n={n})")
    if n < 4:
        raise ValueError(f"initial training span must be >= 4, got {n}")
    H = N - n if max_horizon is None else min(int(max_horizon), N - n)
    if H < 1:
        raise ValueError("max_horizon must be >= 1")
    sq = np.zeros((H, I))
    counts = np.zeros(H, dtype=int)
    scores = np.zeros((H, I))
    for kappa in range(n, N):
        models = _score_models(values[:, :kappa], grid, method, labels, P, lr_config)
        steps = min(H, N - kappa)
        for i, model in enumerate(models):
            fc = model.forecast(steps, p_max)
            actual = values[i, kappa:kappa + steps]
            sq[:steps, i] += np.mean((actual - fc) ** 2, axis=1)
            if intervals:
                table = model.in_sample_error_table(values[i, :kappa], steps, p_max)
                for h in range(1, steps + 1):
                    iv = bootstrap_prediction_interval(table[h - 1], fc[h - 1], alpha, B,
                                                       _task_rng(seed, kappa, i, h))
                    scores[h - 1, i] += interval_score(iv.lower, iv.upper, actual[h - 1], alpha)
        counts[:steps] += 1
    per_object = np.sqrt(sq / counts[:, None])
    report = ForecastReport(
        method=method,
        horizons=list(range(1, H + 1)),
        rmsfe=per_object.mean(axis=1).tolist(),
        counts=counts.tolist(),
        interval_score=(scores / counts[:, None]).mean(axis=1).tolist() if intervals else None,
        per_object_rmsfe=per_object.T.tolist(),
        config={"n": n, "N": N, "P": list(P), "p_max": p_max, "alpha": alpha, "B": B,
                "seed": seed, "intervals": intervals},
    )
    return report
