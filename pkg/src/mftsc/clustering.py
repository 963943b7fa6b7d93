"""Model-based clustering of multiple functional time series.

An initial k-means partition of pooled FPCA scores is refined by repeatedly
moving every object to the cluster whose leave-one-out panel-model fit predicts
its curves best.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import AgglomerativeClustering, KMeans

from .core import FTSPanel, Grid, as_curve_array
from .fpca import DegenerateInputWarning, LongRunConfig, eigen_decompose, project_scores, sample_covariance
from .panel import PanelModelFit, SubsetFitter, joint_scores

logger = logging.getLogger(__name__)

SD_FLOOR = 1e-8


class SingletonClusterError(ValueError):
    """A cluster has fewer than two members left once the held-out object is removed."""


@dataclass
class ClusterAssignment:
    """Cluster labels in ``1..K`` with the history of every pass.

    ``history[0]`` is the initial partition; ``iterations`` counts the
    reclassification passes performed after it.
    """

    labels: np.ndarray
    K: int
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.K):
            raise ValueError(f"labels must lie in 1..{self.K}")
        if not self.history:
            self.history = [self.labels.copy()]

    def to_dict(self, object_labels=None) -> dict:
        doc = {
            "K": int(self.K),
            "labels": [int(v) for v in self.labels],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "history": [[int(v) for v in h] for h in self.history],
        }
        if object_labels is not None:
            doc["objects"] = list(object_labels)
        if self.info:
            doc["info"] = self.info
        return doc


@dataclass
class InitialClusteringConfig:
    """Settings of the k-means initial step."""

    K_max: int = 10
    Q_max: int = 6
    variance_share: float = 0.9
    kmeans_restarts: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.K_max < 2:
            raise ValueError("K_max must be >= 2")
        if self.Q_max < 1:
            raise ValueError("Q_max must be >= 1")
        if not 0 < self.variance_share <= 1:
            raise ValueError("variance_share must lie in (0, 1]")


def _values(panel) -> tuple[np.ndarray, Grid]:
    if isinstance(panel, FTSPanel):
        return panel.values, panel.grid
    values, grid = panel
    return np.asarray(values, dtype=float), grid


def canonical_labels(labels) -> np.ndarray:
    """Relabel to ``1..K`` in order of first appearance."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(labels.size, dtype=int)
    for idx, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out[idx] = mapping[lab]
    return out


def standardize_series(series, grid: Optional[Grid] = None) -> np.ndarray:
    """Centre each grid coordinate on its temporal mean and scale by its temporal sd.

    Accepts ``T`` GridFunctions or a ``(T, J)`` array (with ``grid``) and returns
    a ``(T, J)`` array. The sd uses divisor ``T - 1`` and is floored at 1e-8.
    """
    arr, _ = as_curve_array(series, grid) if not isinstance(series, np.ndarray) else (np.asarray(series, float), grid)
    if arr.shape[0] < 2:
        raise ValueError("standardisation needs at least two curves")
    centered = arr - arr.mean(axis=0)
    sd = np.maximum(arr.std(axis=0, ddof=1), SD_FLOOR)
    return centered / sd


def combined_fpca_scores(panel, config: Optional[InitialClusteringConfig] = None) -> tuple[np.ndarray, int]:
    """Per-object ``(T, Q)`` score matrices from FPCA of all standardised curves pooled.

    Returns the ``(I, T, Q)`` score array and ``Q``.
    """
    config = config or InitialClusteringConfig()
    values, grid = _values(panel)
    I, T, J = values.shape
    std = np.array([standardize_series(values[i], grid) for i in range(I)])
    pooled = std.reshape(I * T, J)
    eig = eigen_decompose(sample_covariance(pooled, grid, ddof=1))
    lam = eig.eigenvalues
    if lam.sum() <= 1e-12 * max(1.0, len(grid)):
        warnings.warn("standardised curves are all identical; using one component",
                      DegenerateInputWarning, stacklevel=2)
        q = 1
    else:
        share = np.cumsum(lam) / lam.sum()
        q = int(np.searchsorted(share, config.variance_share - 1e-12) + 1)
    q = max(1, min(q, config.Q_max, I * T))
    centered = pooled - pooled.mean(axis=0)
    scores = project_scores(centered, eig, q).reshape(I, T, q)
    return scores, q


def optimal_cluster_count(distortions, I: int) -> int:
    """Cluster count with the largest jump in ``d_k ** (-I/2)``.

    ``distortions[k-1]`` is ``d_k`` for ``k = 1..K_max``; ties go to the smaller
    ``k``. Computed in log space so large ``I`` does not overflow.
    """
    d = np.asarray(distortions, dtype=float)
    if d.size < 2:
        raise ValueError("need distortions for k = 1 and at least k = 2")
    if np.any(~(d > 0)):
        raise ValueError("distortions must be positive")
    logs = -(I / 2.0) * np.log(d)
    top = logs.max()
    powered = np.exp(logs - top)
    jumps = powered[1:] - powered[:-1]
    best = jumps.max()
    tol = 1e-12 * max(abs(best), np.finfo(float).tiny)
    return int(np.nonzero(jumps >= best - tol)[0][0] + 2)


def _kmeans(points: np.ndarray, k: int, restarts: int, seed: int):
    km = KMeans(n_clusters=k, n_init=restarts, random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        km.fit(points)
    return km.labels_, float(km.inertia_)


def initial_clustering(panel, config: Optional[InitialClusteringConfig] = None) -> ClusterAssignment:
    """Initial partition: k-means on flattened score matrices, K by the distortion jump."""
    config = config or InitialClusteringConfig()
    values, grid = _values(panel)
    I = values.shape[0]
    if I < 3:
        raise ValueError(f"clustering needs at least 3 objects, got {I}")
    scores, q = combined_fpca_scores((values, grid), config)
    points = scores.reshape(I, -1)
    k_max = min(config.K_max, I - 1)
    total_ss = float(((points - points.mean(axis=0)) ** 2).sum())
    scale = max(1.0, float((points**2).sum()))
    if total_ss <= 1e-12 * scale:
        warnings.warn("all objects coincide; returning a two-cluster split",
                      DegenerateInputWarning, stacklevel=2)
        labels = np.arange(I) % 2 + 1
        return ClusterAssignment(labels, 2, info={"Q": q, "distortions": None, "K_opt": 2})
    distortions = [total_ss]
    fits = {}
    for k in range(2, k_max + 1):
        lab, inertia = _kmeans(points, k, config.kmeans_restarts, config.seed)
        fits[k] = lab
        distortions.append(max(inertia, 1e-300) / k)
    k_opt = optimal_cluster_count(distortions, I)
    labels = canonical_labels(fits[k_opt])
    K = int(labels.max())
    return ClusterAssignment(labels, K, info={"Q": q, "distortions": distortions, "K_opt": k_opt})


def baseline_clustering(panel, n_clusters: int, method: str = "kmeans", seed: int = 0,
                        config: Optional[InitialClusteringConfig] = None) -> np.ndarray:
    """k-means or Ward hierarchical clustering of the pooled-FPCA score matrices."""
    config = config or InitialClusteringConfig(seed=seed)
    values, grid = _values(panel)
    scores, _ = combined_fpca_scores((values, grid), config)
    points = scores.reshape(values.shape[0], -1)
    if method == "kmeans":
        labels, _ = _kmeans(points, n_clusters, config.kmeans_restarts, seed)
    elif method == "hclust":
        labels = AgglomerativeClustering(n_clusters=n_clusters, linkage="ward").fit(points).labels_
    else:
        raise ValueError(f"unknown baseline method {method!r}")
    return canonical_labels(labels)


@dataclass(eq=False)
class MeanOnlyFit:
    """Stand-in for a cluster that cannot be fitted: predicts one mean curve."""

    grid: Grid
    mean: np.ndarray


class LeaveOneOut:
    """Leave-one-out cluster fits over a fixed panel, sharing precomputed statistics."""

    def __init__(self, values: np.ndarray, grid: Grid, P=(0.9, 0.9, 0.9),
                 lr_config: Optional[LongRunConfig] = None):
        self.values = np.asarray(values, dtype=float)
        self.grid = grid
        self.fitter = SubsetFitter(self.values, grid, *P, lr_config=lr_config)
        self._cache: dict = {}

    def fit(self, members, exclude: Optional[int] = None) -> PanelModelFit:
        """Fit on ``members`` minus ``exclude``; raises :class:`SingletonClusterError`
        when fewer than two objects remain."""
        members = [int(m) for m in members]
        if exclude is not None:
            members = [m for m in members if m != exclude]
        if len(members) < 2:
            raise SingletonClusterError(
                f"{len(members)} member(s) left after exclusion; the model needs two")
        key = tuple(sorted(members))
        if key not in self._cache:
            self._cache[key] = self.fitter.fit(np.array(key))
        return self._cache[key]

    def fit_or_mean(self, members, exclude: Optional[int] = None):
        try:
            return self.fit(members, exclude)
        except SingletonClusterError:
            rest = [int(m) for m in members if m != exclude]
            # a cluster made of the held-out object alone is represented by that object
            only = rest[0] if rest else int(exclude)
            return MeanOnlyFit(self.grid, self.values[only].mean(axis=0))


def leave_one_out_fit(cluster_panel, exclude: Optional[int] = None, P=(0.9, 0.9, 0.9),
                      lr_config: Optional[LongRunConfig] = None) -> PanelModelFit:
    """Panel-model fit of a cluster with object ``exclude`` (an index into it) removed."""
    values, grid = _values(cluster_panel)
    return LeaveOneOut(values, grid, P, lr_config).fit(range(values.shape[0]), exclude)


def predict_object(fit, object_series, grid: Optional[Grid] = None) -> np.ndarray:
    """Predict every curve of one object from a cluster's structure.

    The object-effect scores project the object's mean curve minus the cluster
    mean onto the cluster's object-effect basis. Common- and object-trend scores
    come from the joint projection of each curve minus the modelled object mean
    ``mu + sum_m gamma_m phi_m``.
    Returns a ``(T, J)`` array.
    """
    if isinstance(object_series, np.ndarray):
        y = np.asarray(object_series, dtype=float)
        grid = grid or fit.grid
        if y.shape[-1] != len(grid):
            raise ValueError("object curves do not match the fit's grid")
    else:
        y, grid = as_curve_array(object_series, fit.grid)
    obj_mean = y.mean(axis=0)
    if isinstance(fit, MeanOnlyFit):
        return np.broadcast_to(fit.mean, y.shape).copy()
    mu = fit.decomposition.mu
    gamma = project_scores(obj_mean - mu, fit.eta_basis)
    level = mu + gamma @ fit.eta_basis.vectors
    xi, zeta = joint_scores(y - level, fit.r_basis, fit.u_basis)
    return level + xi @ fit.r_basis.vectors + zeta @ fit.u_basis.vectors


def _mean_l2(y: np.ndarray, yhat: np.ndarray, grid: Grid) -> float:
    diff = y - yhat
    return float(np.mean(np.sqrt(np.maximum((diff * diff) @ grid.weights, 0.0))))


def _compact(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Drop empty clusters, keeping the relative order of the surviving labels."""
    present = np.unique(labels)
    remap = {int(old): new for new, old in enumerate(present, start=1)}
    return np.array([remap[int(v)] for v in labels]), len(present)


def object_distances(loo: LeaveOneOut, labels: np.ndarray, i: int, K: int) -> np.ndarray:
    """Mean L2 prediction error of object ``i`` under each cluster ``1..K``."""
    y = loo.values[i]
    out = np.full(K, np.inf)
    for c in range(1, K + 1):
        members = np.nonzero(labels == c)[0]
        if members.size == 0:
            continue
        fit = loo.fit_or_mean(members, exclude=i)
        out[c - 1] = _mean_l2(y, predict_object(fit, y, loo.grid), loo.grid)
    return out


def _choose(dist: np.ndarray, incumbent: int) -> int:
    best = float(dist.min())
    if dist[incumbent - 1] <= best + 1e-12 * max(1.0, abs(best)):
        return incumbent
    return int(np.argmin(dist) + 1)


def reclassify_once(panel, assignment: ClusterAssignment, P=(0.9, 0.9, 0.9),
                    lr_config: Optional[LongRunConfig] = None, sequential: bool = False,
                    _loo: Optional[LeaveOneOut] = None) -> ClusterAssignment:
    """One membership-update pass.

    Every object goes to the cluster with the smallest mean L2 leave-one-out
    prediction error (ties keep the incumbent). By default all objects are scored
    against the same snapshot of the partition; ``sequential=True`` applies each
    move immediately. Clusters left empty are dropped and the rest renumbered in
    order.
    """
    values, grid = _values(panel)
    loo = _loo or LeaveOneOut(values, grid, P, lr_config)
    labels = np.asarray(assignment.labels, dtype=int).copy()
    K = assignment.K
    distances = np.zeros((labels.size, K))
    if K <= 1:
        new_labels = labels.copy()
    else:
        snapshot = labels.copy()
        new_labels = labels.copy()
        for i in range(labels.size):
            current = new_labels if sequential else snapshot
            dist = object_distances(loo, current, i, K)
            distances[i] = dist
            new_labels[i] = _choose(dist, int(current[i]))
    new_labels, new_K = _compact(new_labels)
    history = [h.copy() for h in assignment.history] + [new_labels.copy()]
    return ClusterAssignment(new_labels, new_K, assignment.iterations + 1,
                             bool(np.array_equal(new_labels, labels)), history,
                             {**assignment.info, "last_distances": distances.tolist()})


def cluster_mftsc(panel, config: Optional[InitialClusteringConfig] = None, P=(0.9, 0.9, 0.9),
                  lr_config: Optional[LongRunConfig] = None, max_iterations: int = 50,
                  sequential: bool = False, initial: Optional[ClusterAssignment] = None) -> ClusterAssignment:
    """Initial k-means partition followed by reclassification passes to a fixed point.

    Stops when a pass leaves the partition unchanged (``converged=True``), when a
    previously visited partition reappears (a cycle; ``converged=False``), or
    after ``max_iterations`` passes.
    """
    values, grid = _values(panel)
    I, T, _ = values.shape
    if I < 3 or T < 4:
        raise ValueError(f"clustering needs I >= 3 and T >= 4, got I={I}, T={T}")
    state = initial if initial is not None else initial_clustering((values, grid), config)
    info = {k: v for k, v in state.info.items() if k != "last_distances"}
    state = ClusterAssignment(state.labels, state.K, 0, False, [state.labels.copy()], info)
    loo = LeaveOneOut(values, grid, P, lr_config)
    seen = {tuple(state.labels.tolist())}
    while state.iterations < max_iterations:
        new = reclassify_once((values, grid), state, P, lr_config, sequential, _loo=loo)
        if new.converged:
            new.info.pop("last_distances", None)
            return new
        key = tuple(new.labels.tolist())
        if key in seen:
            logger.info("partition revisited after %d passes; stopping", new.iterations)
            new.info.pop("last_distances", None)
            new.info["cycle"] = True
            new.converged = False
            return new
        seen.add(key)
        state = new
    state.info.pop("last_distances", None)
    state.converged = False
    return state


def correct_classification_rate(pred, truth) -> float:
    """Best fraction of matching labels over one-to-one relabelings of ``pred``."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("empty labelling")
    p_vals, p_idx = np.unique(pred, return_inverse=True)
    t_vals, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((p_vals.size, t_vals.size), dtype=int)
    np.add.at(table, (p_idx, t_idx), 1)
    if max(table.shape) > 6:
        rows, cols = linear_sum_assignment(-table)
        matched = int(table[rows, cols].sum())
    else:
        small, large = (table, False) if table.shape[0] <= table.shape[1] else (table.T, True)
        matched = 0
        for perm in itertools.permutations(range(small.shape[1]), small.shape[0]):
            matched = max(matched, int(small[np.arange(small.shape[0]), list(perm)].sum()))
    return matched / pred.size


def adjusted_rand_index(pred, truth) -> float:
    """Adjusted Rand index from the contingency table of two partitions."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    n = pred.size
    _, p_idx = np.unique(pred, return_inverse=True)
    _, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((p_idx.max() + 1, t_idx.max() + 1))
    np.add.at(table, (p_idx, t_idx), 1)

    def pairs(x):
        return x * (x - 1) / 2.0

    index = pairs(table).sum()
    a = pairs(table.sum(axis=1)).sum()
    b = pairs(table.sum(axis=0)).sum()
    total = pairs(float(n))
    expected = a * b / total if total > 0 else 0.0
    maximum = 0.5 * (a + b)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))
