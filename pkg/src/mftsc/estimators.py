"""scikit-learn style wrappers around the panel model, clustering and forecasting."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_panel
from .clustering import InitialClusteringConfig, cluster_mftsc, object_distances, predict_object
from .core import Grid
from .fpca import LongRunConfig, project_scores
from .forecasting import _score_models
from .panel import SubsetFitter, joint_scores


class FunctionalPanelModel(TransformerMixin, BaseEstimator):
    """Fixed-effects functional panel model.

    Parameters
    ----------
    P1, P2, P3 : float
        Variance shares for the object-effect, common-trend and object-trend
        component counts.
    flat_top_k : float
        Flat part of the lag kernel.
    bandwidth : float, optional
        Fixed lag bandwidth; the plug-in rule is used when None.
    n_components : tuple of int, optional
        Fixed ``(M, N1, N2)``.
    grid : Grid, optional
        Grid of array inputs (default: equally spaced on [0, 1]).

    Attributes
    ----------
    fit_ : PanelModelFit
    n_components_ : tuple of int
    """

    def __init__(self, P1=0.9, P2=0.9, P3=0.9, flat_top_k=0.5, bandwidth=None,
                 n_components=None, grid: Optional[Grid] = None):
        self.P1 = P1
        self.P2 = P2
        self.P3 = P3
        self.flat_top_k = flat_top_k
        self.bandwidth = bandwidth
        self.n_components = n_components
        self.grid = grid

    def fit(self, X, y=None):
        values, grid = check_panel(X, self.grid, min_objects=2, min_times=4)
        lr = LongRunConfig(bandwidth=self.bandwidth, flat_top_k=self.flat_top_k)
        self.fit_ = SubsetFitter(values, grid, self.P1, self.P2, self.P3, lr).fit(
            n_components=self.n_components)
        self.grid_ = grid
        self.n_components_ = self.fit_.n_components
        return self

    def transform(self, X):
        """Common- and object-trend scores ``(I, T, N1 + N2)`` under the fitted structure."""
        check_is_fitted(self, "fit_")
        values, _ = check_panel(X, self.grid_)
        f = self.fit_
        mu = f.decomposition.mu
        gamma = project_scores(values.mean(axis=1) - mu, f.eta_basis)
        level = mu + gamma @ f.eta_basis.vectors
        xi, zeta = joint_scores(values - level[:, None, :], f.r_basis, f.u_basis)
        return np.concatenate([xi, zeta], axis=-1)

    def reconstruct(self):
        """Fitted curves of the training panel, ``(I, T, J)``."""
        check_is_fitted(self, "fit_")
        return self.fit_.reconstruct()


class MFTSC(ClusterMixin, BaseEstimator):
    """Clustering of multiple functional time series.

    Parameters
    ----------
    K_max, Q_max, variance_share, kmeans_restarts
        Settings of the k-means initial step.
    P1, P2, P3 : float
        Variance shares of the per-cluster panel models.
    max_iterations : int
    sequential : bool
        Apply moves immediately rather than once per pass.
    random_state : int
    grid : Grid, optional

    Attributes
    ----------
    labels_ : ndarray of int, 1-based
    n_clusters_, n_iter_, converged_, history_
    """

    def __init__(self, K_max=10, Q_max=6, variance_share=0.9, kmeans_restarts=25,
                 P1=0.9, P2=0.9, P3=0.9, max_iterations=50, sequential=False,
                 random_state=0, grid: Optional[Grid] = None):
        self.K_max = K_max
        self.Q_max = Q_max
        self.variance_share = variance_share
        self.kmeans_restarts = kmeans_restarts
        self.P1 = P1
        self.P2 = P2
        self.P3 = P3
        self.max_iterations = max_iterations
        self.sequential = sequential
        self.random_state = random_state
        self.grid = grid

    def fit(self, X, y=None):
        values, grid = check_panel(X, self.grid, min_objects=3, min_times=4)
        cfg = InitialClusteringConfig(min(self.K_max, values.shape[0] - 1), self.Q_max,
                                      self.variance_share, self.kmeans_restarts,
                                      int(self.random_state))
        P = (self.P1, self.P2, self.P3)
        res = cluster_mftsc((values, grid), cfg, P, max_iterations=self.max_iterations,
                            sequential=self.sequential)
        self.assignment_ = res
        self.labels_ = res.labels
        self.n_clusters_ = res.K
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.history_ = res.history
        self.grid_ = grid
        self._values = values
        return self

    def predict(self, X):
        """Cluster of each new object: smallest prediction error under the full cluster fits."""
        check_is_fitted(self, "labels_")
        values, _ = check_panel(X, self.grid_, min_times=2)
        from .clustering import LeaveOneOut

        loo = LeaveOneOut(self._values, self.grid_, (self.P1, self.P2, self.P3))
        fits = [loo.fit_or_mean(np.nonzero(self.labels_ == c)[0]) for c in range(1, self.n_clusters_ + 1)]
        out = np.empty(values.shape[0], dtype=int)
        for i, y in enumerate(values):
            errs = [np.mean(np.sqrt(((y - predict_object(f, y, self.grid_)) ** 2) @ self.grid_.weights))
                    for f in fits]
            out[i] = int(np.argmin(errs)) + 1
        return out


class PanelForecaster(BaseEstimator):
    """h-step curve forecasts from VAR models of the panel scores.

    Parameters
    ----------
    method : {"MFTSC", "UTS"}
        Cluster panel models (labels passed to ``fit``) or one model per object.
    P1, P2, P3 : float
    p_max : int
        Largest VAR order considered.
    grid : Grid, optional
    """

    def __init__(self, method="MFTSC", P1=0.9, P2=0.9, P3=0.9, p_max=5, grid: Optional[Grid] = None):
        self.method = method
        self.P1 = P1
        self.P2 = P2
        self.P3 = P3
        self.p_max = p_max
        self.grid = grid

    def fit(self, X, y=None):
        """``y`` holds optional 1-based cluster labels (all one cluster when None)."""
        values, grid = check_panel(X, self.grid, min_times=4)
        if self.method == "MFTSC" and y is None and values.shape[0] < 2:
            raise ValueError("MFTSC forecasting needs at least two objects")
        self.models_ = _score_models(values, grid, self.method, y, (self.P1, self.P2, self.P3), None)
        self.grid_ = grid
        return self

    def predict(self, h: int = 1):
        """Forecasts for horizons ``1..h``, shape ``(I, h, J)``."""
        check_is_fitted(self, "models_")
        if h < 1:
            raise ValueError(f"horizon must be >= 1, got {h}")
        return np.array([m.forecast(h, self.p_max) for m in self.models_])
