"""Two-cluster functional time series generator, scenario catalogue and replication harness."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import FTSPanel, Grid, make_uniform_grid

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]

INNOVATION_SD = 1.0

AR_XI = {1: (0.7, 0.6), 2: (0.6, 0.5)}
AR_ZETA = {1: (0.5, 0.4), 2: (0.3, 0.2)}


def mean_1(x):
    return -2.0 * (x - 0.25) ** 2 + 1.5


def mean_2(x):
    return 4.0 * (x - 0.6) ** 2 + 1.0


def _sin(k: int) -> Callable:
    def f(x):
        return np.sqrt(2.0) * np.sin(k * np.pi * x)

    f.__name__ = f"sqrt2_sin_{k}pi"
    return f


def _cos(k: int) -> Callable:
    def f(x):
        return np.sqrt(2.0) * np.cos(k * np.pi * x)

    f.__name__ = f"sqrt2_cos_{k}pi"
    return f


def eigenspace(k: int) -> list[Callable]:
    """Basis ``(sqrt2 sin(k pi x), sqrt2 cos(k pi x))`` of the k-th candidate space."""
    return [_sin(k), _cos(k)]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_ar1(T: int, phi: float, sigma_innov: float = INNOVATION_SD,
                 seed: SeedLike = None) -> np.ndarray:
    """Stationary AR(1) path of length ``T`` started from its stationary law."""
    if not abs(phi) < 1:
        raise ValueError(f"|phi| must be < 1 for a stationary AR(1), got {phi}")
    if T < 1:
        raise ValueError("T must be positive")
    rng = _rng(seed)
    eps = rng.standard_normal(T) * sigma_innov
    x = np.empty(T)
    x[0] = eps[0] / np.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + eps[t]
    return x


@dataclass
class ScenarioConfig:
    """Per-cluster generating components of a simulation design.

    Each list is indexed by cluster; ``r_bases[c]`` pairs with ``ar_xi[c]`` and
    ``u_bases[c]`` with ``ar_zeta[c]``.
    """

    name: str
    means: list
    r_bases: list
    u_bases: list
    ar_xi: list
    ar_zeta: list
    noise_sigma: float = 0.2
    n_objects_per_cluster: int = 25
    n_timepoints: int = 61
    n_grid: int = 201
    innovation_sd: float = INNOVATION_SD

    def __post_init__(self):
        n = len(self.means)
        for name in ("r_bases", "u_bases", "ar_xi", "ar_zeta"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per cluster")
        for c in range(n):
            if len(self.r_bases[c]) != len(self.ar_xi[c]):
                raise ValueError("common-trend basis and AR parameters differ in length")
            if len(self.u_bases[c]) != len(self.ar_zeta[c]):
                raise ValueError("object-trend basis and AR parameters differ in length")
            for phi in (*self.ar_xi[c], *self.ar_zeta[c]):
                if not abs(phi) < 1:
                    raise ValueError(f"AR parameter {phi} is not stationary")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def n_clusters(self) -> int:
        return len(self.means)

    @property
    def grid(self) -> Grid:
        return make_uniform_grid(self.n_grid, 0.0, 1.0)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "means": [m.__name__ for m in self.means],
            "r_bases": [[f.__name__ for f in b] for b in self.r_bases],
            "u_bases": [[f.__name__ for f in b] for b in self.u_bases],
            "ar_xi": [list(a) for a in self.ar_xi],
            "ar_zeta": [list(a) for a in self.ar_zeta],
            "noise_sigma": self.noise_sigma,
            "n_objects_per_cluster": self.n_objects_per_cluster,
            "n_timepoints": self.n_timepoints,
            "n_grid": self.n_grid,
            "innovation_sd": self.innovation_sd,
        }


SCENARIO_IDS = tuple(f"C{d}{s}" for d in range(5) for s in "abcd") + ("COMPLICATED",)

# design letter -> (cluster-2 common-trend AR set, cluster-2 object-trend AR set)
_LETTER = {"a": (1, 1), "b": (1, 2), "c": (2, 1), "d": (2, 2)}


def scenario_config(scenario_id: str, **overrides) -> ScenarioConfig:
    """Configuration of a named design (``C0a`` .. ``C4d`` or ``COMPLICATED``)."""
    sid = scenario_id.strip()
    if sid.upper() == "COMPLICATED":
        cfg = ScenarioConfig(
            name="COMPLICATED",
            means=[mean_1, mean_2],
            r_bases=[[_sin(k) for k in range(1, 7)], [_sin(k) for k in range(5, 11)]],
            u_bases=[[_sin(k) for k in (1, 2, 3)], [_sin(k) for k in (4, 5, 6)]],
            ar_xi=[(0.9, 0.8, 0.7, 0.6, 0.5, 0.4), (0.8, 0.7, 0.6, 0.5, 0.4, 0.3)],
            ar_zeta=[(0.5, 0.4, 0.3), (0.4, 0.3, 0.2)],
        )
    else:
        if len(sid) != 3 or sid[0] != "C" or sid[1] not in "01234" or sid[2] not in _LETTER:
            raise ValueError(f"unknown scenario id {scenario_id!r}; expected one of {SCENARIO_IDS}")
        design, letter = int(sid[1]), sid[2]
        xi2, zeta2 = _LETTER[letter]
        r_space2 = 2 if design in (3, 4) else 1
        u_space2 = 4 if design in (2, 4) else 3
        cfg = ScenarioConfig(
            name=sid,
            means=[mean_1, mean_2 if design == 0 else mean_1],
            r_bases=[eigenspace(1), eigenspace(r_space2)],
            u_bases=[eigenspace(3), eigenspace(u_space2)],
            ar_xi=[AR_XI[1], AR_XI[xi2]],
            ar_zeta=[AR_ZETA[1], AR_ZETA[zeta2]],
        )
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise TypeError(f"unknown scenario override {key!r}")
        setattr(cfg, key, value)
    cfg.__post_init__()
    return cfg


@dataclass(eq=False)
class SimulatedPanel:
    """A generated panel with its ground truth.

    ``truth`` holds 1-based cluster labels; ``xi[c]`` is the (T, n_r) common-trend
    score path of cluster ``c`` and ``zeta`` the (I, T, n_u) object-trend scores.
    """

    panel: FTSPanel
    truth: np.ndarray
    config: ScenarioConfig
    xi: list
    zeta: list
    seed: Optional[int] = None

    @property
    def clean(self) -> np.ndarray:
        """Noise-free curves (I, T, J) implied by the stored ground truth."""
        cfg, grid = self.config, self.panel.grid
        x = grid.points
        I, T = self.panel.n_objects, self.panel.n_times
        out = np.empty((I, T, x.size))
        for i in range(I):
            c = int(self.truth[i]) - 1
            rho = np.array([f(x) for f in cfg.r_bases[c]])
            psi = np.array([f(x) for f in cfg.u_bases[c]])
            out[i] = cfg.means[c](x) + self.xi[c] @ rho + self.zeta[i] @ psi
        return out


def generate(config: ScenarioConfig, seed: SeedLike = None) -> SimulatedPanel:
    """Draw one panel from a :class:`ScenarioConfig`."""
    rng = _rng(seed)
    grid = config.grid
    x = grid.points
    T, n_per = config.n_timepoints, config.n_objects_per_cluster
    values, truth, xis, zetas = [], [], [], []
    for c in range(config.n_clusters):
        rho = np.array([f(x) for f in config.r_bases[c]])
        psi = np.array([f(x) for f in config.u_bases[c]])
        xi = np.column_stack([simulate_ar1(T, phi, config.innovation_sd, rng)
                              for phi in config.ar_xi[c]])
        xis.append(xi)
        base = config.means[c](x) + xi @ rho
        for _ in range(n_per):
            zeta = np.column_stack([simulate_ar1(T, tau, config.innovation_sd, rng)
                                    for tau in config.ar_zeta[c]])
            noise = rng.standard_normal((T, x.size)) * config.noise_sigma
            values.append(base + zeta @ psi + noise)
            zetas.append(zeta)
            truth.append(c + 1)
    labels = [f"obj{k:03d}" for k in range(len(values))]
    panel = FTSPanel(grid, np.array(values), labels=labels)
    return SimulatedPanel(panel, np.array(truth), config, xis, zetas,
                          seed if isinstance(seed, int) else None)


def generate_scenario(scenario_id: str, seed: SeedLike = None, **overrides) -> SimulatedPanel:
    """Generate the named design; keyword overrides (e.g. ``noise_sigma=0``) patch its config."""
    return generate(scenario_config(scenario_id, **overrides), seed)


METHODS = ("MFTSC", "kmeans", "hclust")


@dataclass
class ScenarioResult:
    """Per-replication quality metrics for each method, with summary means."""

    scenario: str
    replications: int
    seed: int
    methods: list
    crate: dict = field(default_factory=dict)
    arand: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for m in self.methods:
            row = {"cRate": float(np.mean(self.crate[m])), "aRand": float(np.mean(self.arand[m]))}
            its = [v for v in self.iterations.get(m, []) if v is not None]
            row["iterations"] = float(np.mean(its)) if its else None
            out[m] = row
        return out

    def to_dict(self) -> dict:
        return {
            "schema": "mftsc.scenario_result/v1",
            "scenario": self.scenario,
            "replications": self.replications,
            "seed": self.seed,
            "methods": list(self.methods),
            "cRate": {m: [float(v) for v in self.crate[m]] for m in self.methods},
            "aRand": {m: [float(v) for v in self.arand[m]] for m in self.methods},
            "iterations": {m: self.iterations.get(m, []) for m in self.methods},
            "summary": self.summary(),
            "metadata": self.metadata,
        }

    def to_table(self, delimiter: str = "\t") -> str:
        """Rows of scenario, measure (cRate, aRand, Iter. No.), then one column per method."""
        summ = self.summary()
        lines = [delimiter.join(["scenario", "measure", *self.methods])]
        for measure, key in (("cRate", "cRate"), ("aRand", "aRand"), ("Iter. No.", "iterations")):
            cells = []
            for m in self.methods:
                v = summ[m][key]
                cells.append("-" if v is None else f"{v:.3f}")
            lines.append(delimiter.join([self.scenario, measure, *cells]))
        return "\n".join(lines) + "\n"


def _replication(scenario_id: str, seed_seq: np.random.SeedSequence, methods: Sequence[str],
                 overrides: dict, cluster_kwargs: dict):
    from .clustering import (
        InitialClusteringConfig,
        adjusted_rand_index,
        baseline_clustering,
        cluster_mftsc,
        correct_classification_rate,
    )

    data_seed, method_seed = seed_seq.spawn(2)
    sim = generate_scenario(scenario_id, np.random.default_rng(data_seed), **overrides)
    n_true = sim.config.n_clusters
    km_seed = int(method_seed.generate_state(1)[0])
    out = {}
    for m in methods:
        if m == "MFTSC":
            cfg = InitialClusteringConfig(seed=km_seed, **cluster_kwargs.get("initial", {}))
            res = cluster_mftsc(sim.panel, cfg, **cluster_kwargs.get("mftsc", {}))
            labels, iters = res.labels, res.iterations
        elif m in ("kmeans", "hclust"):
            labels = baseline_clustering(sim.panel, n_true, method=m, seed=km_seed)
            iters = None
        else:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        out[m] = (correct_classification_rate(labels, sim.truth),
                  adjusted_rand_index(labels, sim.truth), iters)
    return out


def run_scenario(scenario_id: str, replications: int = 100, methods: Sequence[str] = ("MFTSC",),
                 seed: int = 0, n_jobs: int = 1, overrides: Optional[dict] = None,
                 cluster_kwargs: Optional[dict] = None) -> ScenarioResult:
    """Replicate a design: fresh data per replication, every method clustered and scored.

    Replication ``r`` draws from the ``r``-th child of ``SeedSequence(seed)``, so
    results do not depend on execution order or ``n_jobs``.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    overrides = dict(overrides or {})
    cluster_kwargs = dict(cluster_kwargs or {})
    children = np.random.SeedSequence(seed).spawn(replications)
    start = time.perf_counter()
    if n_jobs == 1:
        outs = [_replication(scenario_id, s, methods, overrides, cluster_kwargs) for s in children]
    else:
        from joblib import Parallel, delayed

        outs = Parallel(n_jobs=n_jobs)(
            delayed(_replication)(scenario_id, s, methods, overrides, cluster_kwargs)
            for s in children
        )
    result = ScenarioResult(scenario_id, replications, seed, methods)
    for m in methods:
        result.crate[m] = [o[m][0] for o in outs]
        result.arand[m] = [o[m][1] for o in outs]
        result.iterations[m] = [o[m][2] for o in outs]
    cfg = scenario_config(scenario_id, **overrides)
    result.metadata = {"config": cfg.describe(), "innovation_sd": cfg.innovation_sd}
    logger.info("scenario %s: %d replications in %.1fs", scenario_id, replications,
                time.perf_counter() - start)
    return result
