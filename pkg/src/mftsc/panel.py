"""Fixed-effects functional panel model: two-way decomposition, KL bases and scores."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import FTSPanel, Grid, GridFunction, GridMismatchError
from .fpca import (
    EigenSystem,
    LongRunConfig,
    eigen_decompose,
    long_run_covariance_stack,
    long_run_from_lags,
    project_scores,
    sample_covariance,
    select_n_components,
)


@dataclass(eq=False)
class PanelDecomposition:
    """Grand mean ``mu`` (J,), object effects ``eta`` (I, J), common trend ``r`` (T, J)
    and object-specific trend ``u`` (I, T, J)."""

    grid: Grid
    mu: np.ndarray
    eta: np.ndarray
    r: np.ndarray
    u: np.ndarray

    @property
    def object_means(self) -> np.ndarray:
        return self.mu + self.eta

    def reassemble(self) -> np.ndarray:
        return self.mu + self.eta[:, None, :] + self.r[None, :, :] + self.u


def _panel_values(panel) -> tuple[np.ndarray, Grid]:
    if isinstance(panel, FTSPanel):
        return panel.values, panel.grid
    values, grid = panel
    return np.asarray(values, dtype=float), grid


def decompose_arrays(values: np.ndarray, grid: Grid) -> PanelDecomposition:
    values = np.asarray(values, dtype=float)
    if values.ndim != 3:
        raise ValueError("panel values must have shape (I, T, J)")
    I, T, _ = values.shape
    if I < 2 or T < 2:
        raise ValueError(f"decomposition needs I >= 2 and T >= 2, got I={I}, T={T}")
    obj_mean = values.mean(axis=1)
    time_mean = values.mean(axis=0)
    mu = obj_mean.mean(axis=0)
    eta = obj_mean - mu
    r = time_mean - mu
    u = values - obj_mean[:, None, :] - time_mean[None, :, :] + mu
    return PanelDecomposition(grid, mu, eta, r, u)


def decompose_panel(panel: FTSPanel) -> PanelDecomposition:
    """Two-way ANOVA split of every curve into mean, object, time and residual parts."""
    values, grid = _panel_values(panel)
    return decompose_arrays(values, grid)


@dataclass(eq=False)
class CrossBasisMatrix:
    """Inner products ``q[k, l] = <rho_k, psi_l>`` between the two dynamic bases."""

    q: np.ndarray

    @classmethod
    def from_bases(cls, r_basis: EigenSystem, u_basis: EigenSystem) -> "CrossBasisMatrix":
        if r_basis.grid != u_basis.grid:
            raise GridMismatchError("bases live on different grids")
        w = r_basis.grid.weights
        return cls((r_basis.vectors * w) @ u_basis.vectors.T)


def _joint_solver(r_basis: EigenSystem, u_basis: EigenSystem,
                  q: Optional[CrossBasisMatrix] = None) -> np.ndarray:
    q = CrossBasisMatrix.from_bases(r_basis, u_basis).q if q is None else np.asarray(q.q)
    n1, n2 = len(r_basis), len(u_basis)
    gram = np.block([[np.eye(n1), q], [q.T, np.eye(n2)]])
    return np.linalg.pinv(gram, hermitian=True)


def joint_scores(demeaned: np.ndarray, r_basis: EigenSystem, u_basis: EigenSystem,
                 q: Optional[CrossBasisMatrix] = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`joint_score_projection` over curves on the last axis."""
    w = r_basis.grid.weights
    wd = np.asarray(demeaned, dtype=float) * w
    rhs = np.concatenate([wd @ r_basis.vectors.T, wd @ u_basis.vectors.T], axis=-1)
    beta = rhs @ _joint_solver(r_basis, u_basis, q).T
    n1 = len(r_basis)
    return beta[..., :n1], beta[..., n1:]


def joint_score_projection(demeaned: GridFunction, r_basis: EigenSystem,
                           u_basis: EigenSystem,
                           q: Optional[CrossBasisMatrix] = None) -> tuple[np.ndarray, np.ndarray]:
    """Common-trend and object-trend scores of one demeaned curve.

    Projections onto ``rho`` and ``psi`` are stacked and the joint system with
    Gram matrix ``[[I, Q], [Q^T, I]]`` is solved through its pseudoinverse, which
    gives the minimum-norm split when the two bases overlap.
    """
    if isinstance(demeaned, GridFunction):
        if demeaned.grid != r_basis.grid:
            raise GridMismatchError("curve and bases live on different grids")
        vals = demeaned.values
    else:
        vals = np.asarray(demeaned, dtype=float)
        if vals.shape != (len(r_basis.grid),):
            raise GridMismatchError("curve values do not match basis grid")
    if u_basis.grid != r_basis.grid:
        raise GridMismatchError("bases live on different grids")
    return joint_scores(vals, r_basis, u_basis, q)


@dataclass(eq=False)
class PanelModelFit:
    """Estimated components, truncated bases and scores of the panel model.

    ``gamma`` is (I, M), ``xi`` is (T, N1) and ``zeta`` is (I, T, N2). ``xi`` is
    the per-time average of the per-curve common-trend scores, which equals the
    joint projection of the estimated common trend. ``zeta`` projects each
    object-centred curve minus the shared common trend ``xi @ rho`` onto the
    object-trend basis; when the two bases are nearly collinear this keeps the
    object-specific part that a per-curve split would leave in ``xi``.
    """

    decomposition: PanelDecomposition
    eta_basis: EigenSystem
    r_basis: EigenSystem
    u_basis: EigenSystem
    gamma: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.decomposition.grid

    @property
    def n_components(self) -> tuple[int, int, int]:
        return len(self.eta_basis), len(self.r_basis), len(self.u_basis)

    @property
    def cross_basis(self) -> CrossBasisMatrix:
        return CrossBasisMatrix.from_bases(self.r_basis, self.u_basis)

    def reconstruct(self) -> np.ndarray:
        """All fitted curves, shape (I, T, J)."""
        d = self.decomposition
        level = d.mu + self.gamma @ self.eta_basis.vectors
        common = self.xi @ self.r_basis.vectors
        own = self.zeta @ self.u_basis.vectors
        return level[:, None, :] + common[None, :, :] + own

    def to_dict(self) -> dict:
        d = self.decomposition
        return {
            "schema": "mftsc.panel_fit/v1",
            "grid": d.grid.points.tolist(),
            "mu": d.mu.tolist(),
            "eta": d.eta.tolist(),
            "r": d.r.tolist(),
            "u": d.u.tolist(),
            "bases": {
                name: {"eigenvalues": b.eigenvalues.tolist(), "vectors": b.vectors.tolist()}
                for name, b in (("eta", self.eta_basis), ("r", self.r_basis), ("u", self.u_basis))
            },
            "gamma": self.gamma.tolist(),
            "xi": self.xi.tolist(),
            "zeta": self.zeta.tolist(),
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "PanelModelFit":
        grid = Grid(np.array(doc["grid"]))
        dec = PanelDecomposition(grid, np.array(doc["mu"]), np.array(doc["eta"]),
                                 np.array(doc["r"]), np.array(doc["u"]))

        def basis(name):
            b = doc["bases"][name]
            return EigenSystem(grid, np.array(b["eigenvalues"], dtype=float),
                               np.array(b["vectors"], dtype=float).reshape(-1, len(grid)))

        return cls(dec, basis("eta"), basis("r"), basis("u"),
                   np.array(doc["gamma"], dtype=float).reshape(dec.eta.shape[0], -1),
                   np.array(doc["xi"], dtype=float).reshape(dec.r.shape[0], -1),
                   np.array(doc["zeta"], dtype=float).reshape(dec.u.shape[0], dec.u.shape[1], -1),
                   dict(doc.get("config", {})))

    @classmethod
    def from_json(cls, text: str) -> "PanelModelFit":
        return cls.from_dict(json.loads(text))


class SubsetFitter:
    """Fits the panel model on subsets of a fixed set of objects.

    Object means and per-object lag products ``sum_t Y_it Y_i,t+q^T`` of the
    object-centred curves are computed once and shared by every subset fit. For a
    member set ``S`` of size ``n`` the pooled object-trend lag surface is
    ``(sum_{i in S} S_iq - n sum_t R_t R_{t+q}^T) / (n (T - q))`` with ``R_t`` the
    member average of the centred curves, which equals the surface computed from
    the residuals of the two-way decomposition of ``S`` alone.
    """

    def __init__(self, values: np.ndarray, grid: Grid, P1: float = 0.9, P2: float = 0.9,
                 P3: float = 0.9, lr_config: Optional[LongRunConfig] = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3:
            raise ValueError("panel values must have shape (I, T, J)")
        self.values = values
        self.grid = grid
        self.P = (P1, P2, P3)
        self.lr_config = lr_config or LongRunConfig()
        self.object_means = values.mean(axis=1)
        self.centered = values - self.object_means[:, None, :]
        self._lags: dict = {}

    def _object_lags(self, q: int) -> np.ndarray:
        if q not in self._lags:
            T = self.centered.shape[1]
            a = self.centered[:, : T - q]
            b = self.centered[:, q:]
            self._lags[q] = np.matmul(a.transpose(0, 2, 1), b)
        return self._lags[q]

    def fit(self, members=None, n_components: Optional[tuple] = None) -> PanelModelFit:
        members = np.arange(self.values.shape[0]) if members is None else np.asarray(members, dtype=int)
        n = members.size
        T = self.values.shape[1]
        if n < 2 or T < 4:
            raise ValueError(f"panel model needs I >= 2 and T >= 4, got I={n}, T={T}")
        grid, cfg = self.grid, self.lr_config
        P1, P2, P3 = self.P
        obj_means = self.object_means[members]
        Y = self.centered[members]
        mu = obj_means.mean(axis=0)
        eta = obj_means - mu
        r = Y.mean(axis=0)
        u = Y - r
        dec = PanelDecomposition(grid, mu, eta, r, u)

        def u_lag(q: int) -> np.ndarray:
            total = self._object_lags(q)[members].sum(axis=0)
            total -= n * (r[: T - q].T @ r[q:])
            return total / (n * (T - q))

        eta_full = eigen_decompose(sample_covariance(eta, grid, ddof=1))
        r_kernel, h_r = long_run_covariance_stack(r[None], grid, cfg)
        r_full = eigen_decompose(r_kernel)
        u_kernel, h_u = long_run_from_lags(u_lag, T, grid, cfg)
        u_full = eigen_decompose(u_kernel)

        fixed = tuple(n_components) if n_components is not None else (None, None, None)

        # eigenvalues this far below the panel's own variance are rounding noise
        floor = 1e-12 * float(np.sum(self.values[members].var(axis=(0, 1)) * grid.weights))

        def count(fixed_n, full, P, n_sample):
            if fixed_n is not None:
                return min(int(fixed_n), len(full))
            return select_n_components(full.eigenvalues, P, n_sample, floor)

        eta_basis = eta_full.truncate(count(fixed[0], eta_full, P1, n))
        r_basis = r_full.truncate(count(fixed[1], r_full, P2, T))
        u_basis = u_full.truncate(count(fixed[2], u_full, P3, n * T))

        gamma = project_scores(eta, eta_basis)
        xi_it, _ = joint_scores(Y, r_basis, u_basis)
        xi = xi_it.mean(axis=0)
        zeta = project_scores(Y - (xi @ r_basis.vectors)[None], u_basis)
        config = {
            "P1": P1, "P2": P2, "P3": P3,
            "flat_top_k": cfg.flat_top_k,
            "bandwidth_r": h_r, "bandwidth_u": h_u,
            "max_lag": cfg.max_lag,
            "eta_cov_divisor": "I-1",
            "autocov_divisor": "T-|q|",
            "n_components": [len(eta_basis), len(r_basis), len(u_basis)],
        }
        return PanelModelFit(dec, eta_basis, r_basis, u_basis, gamma, xi, zeta, config)


def fit_arrays(values: np.ndarray, grid: Grid, P1: float = 0.9, P2: float = 0.9,
               P3: float = 0.9, lr_config: Optional[LongRunConfig] = None,
               n_components: Optional[tuple] = None) -> PanelModelFit:
    """:func:`fit_panel_model` on a raw ``(I, T, J)`` array.

    ``n_components`` overrides the data-driven ``(M, N1, N2)`` counts; entries
    left as None are still selected from the data.
    """
    return SubsetFitter(values, grid, P1, P2, P3, lr_config).fit(n_components=n_components)


def fit_panel_model(panel: FTSPanel, P1: float = 0.9, P2: float = 0.9, P3: float = 0.9,
                    lr_config: Optional[LongRunConfig] = None,
                    n_components: Optional[tuple] = None) -> PanelModelFit:
    """Fit the fixed-effects functional panel model.

    The object-effect basis comes from the static covariance of the estimated
    object effects; the common-trend and object-trend bases come from long-run
    covariances (the latter pooled over objects). Component counts use
    ``(P1, I)``, ``(P2, T)`` and ``(P3, I*T)`` in :func:`select_n_components`.
    """
    values, grid = _panel_values(panel)
    return fit_arrays(values, grid, P1, P2, P3, lr_config, n_components)


def reconstruct_curve(fit: PanelModelFit, i: int, t: int) -> GridFunction:
    """Truncated KL reconstruction of object ``i`` at time ``t``."""
    I, T = fit.zeta.shape[:2]
    if not (0 <= i < I and 0 <= t < T):
        raise IndexError(f"(i, t) = ({i}, {t}) outside panel of shape ({I}, {T})")
    vals = (fit.decomposition.mu
            + fit.gamma[i] @ fit.eta_basis.vectors
            + fit.xi[t] @ fit.r_basis.vectors
            + fit.zeta[i, t] @ fit.u_basis.vectors)
    return GridFunction(fit.grid, vals)
