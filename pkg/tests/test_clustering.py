import itertools
import warnings

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from mftsc.clustering import (
    ClusterAssignment,
    InitialClusteringConfig,
    LeaveOneOut,
    SingletonClusterError,
    adjusted_rand_index,
    baseline_clustering,
    cluster_mftsc,
    combined_fpca_scores,
    correct_classification_rate,
    initial_clustering,
    leave_one_out_fit,
    optimal_cluster_count,
    predict_object,
    reclassify_once,
    standardize_series,
)
from mftsc.core import FTSPanel, make_uniform_grid
from mftsc.panel import fit_arrays
from mftsc.simulation import generate_scenario


def _two_groups(seed, n_per=5, T=8, J=21, spread=0.1):
    """Each group shares one score path on its own sine; objects differ by small noise."""
    rng = np.random.default_rng(seed)
    g = make_uniform_grid(J, 0, 1)
    vals = []
    for k in (1, 2):
        path = rng.normal(size=T)
        base = np.outer(path, np.sqrt(2) * np.sin(k * np.pi * g.points))
        vals += [base + spread * rng.normal(size=(T, J)) for _ in range(n_per)]
    return FTSPanel(g, np.array(vals)), np.repeat([1, 2], n_per)


def test_standardize_idempotent_floor_and_affine(rng):
    y = rng.normal(size=(12, 9))
    z = standardize_series(y)
    np.testing.assert_allclose(standardize_series(z), z, atol=1e-10)
    y[:, 4] = 2.0
    assert np.all(standardize_series(y)[:, 4] == 0)
    np.testing.assert_allclose(standardize_series(3 * y + 7), standardize_series(y), atol=1e-10)


def test_combined_scores_cap_and_separation():
    panel, truth = _two_groups(0)
    scores, q = combined_fpca_scores(panel, InitialClusteringConfig(Q_max=1))
    assert q == 1 and scores.shape == (10, 8, 1)
    scores, q = combined_fpca_scores(panel)
    flat = scores.reshape(10, -1)
    c1, c2 = flat[truth == 1], flat[truth == 2]
    within = max(np.max(np.linalg.norm(c - c.mean(axis=0), axis=1)) for c in (c1, c2))
    between = np.linalg.norm(c1.mean(axis=0) - c2.mean(axis=0))
    assert between >= 3 * within


def test_combined_scores_degenerate_warns():
    g = make_uniform_grid(11, 0, 1)
    vals = np.tile(np.sin(np.pi * g.points), (3, 5, 1))
    with pytest.warns(UserWarning):
        scores, q = combined_fpca_scores(FTSPanel(g, vals))
    assert q == 1 and np.allclose(scores, 0, atol=1e-8)


def test_optimal_cluster_count_examples():
    assert optimal_cluster_count([10, 2, 1.9, 1.85], 4) == 2
    d = [2.0 ** -k for k in range(1, 8)]
    assert optimal_cluster_count(d, 2) == 7
    # jumps 1, 1 for k = 2, 3: tie goes to the smaller k
    assert optimal_cluster_count([1.0, 0.5, 1 / 3], 2) == 2
    with pytest.raises(ValueError):
        optimal_cluster_count([1.0, 0.0], 2)


def test_initial_clustering_well_separated_monte_carlo():
    perfect = 0
    for s in range(100):
        panel, truth = _two_groups(s, spread=0.05)
        res = initial_clustering(panel, InitialClusteringConfig(K_max=2, kmeans_restarts=5, seed=s))
        perfect += res.K == 2 and correct_classification_rate(res.labels, truth) == 1.0
    assert perfect >= 95


def test_jump_rule_never_prefers_two_beyond_three_objects():
    # d_k = WSS_k / k gives d_2 / d_3 >= 3/2, so the k = 3 jump beats k = 2 once I >= 4
    for s in range(10):
        panel, _ = _two_groups(s, spread=0.05)
        res = initial_clustering(panel, InitialClusteringConfig(K_max=5, kmeans_restarts=5, seed=s))
        d = res.info["distortions"]
        assert d[1] / d[2] >= 1.5 - 1e-12
        assert res.K > 2


def test_initial_clustering_identical_objects_and_determinism():
    g = make_uniform_grid(11, 0, 1)
    vals = np.tile(np.random.default_rng(0).normal(size=(6, 11)), (3, 1, 1))
    with pytest.warns(UserWarning):
        res = initial_clustering(FTSPanel(g, vals))
    assert res.K == 2
    panel, _ = _two_groups(3)
    a = initial_clustering(panel, InitialClusteringConfig(seed=9))
    b = initial_clustering(panel, InitialClusteringConfig(seed=9))
    np.testing.assert_array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        initial_clustering(FTSPanel(g, vals[:2]))


def test_config_validation():
    with pytest.raises(ValueError):
        InitialClusteringConfig(K_max=1)


def test_leave_one_out_exclusion_rules():
    sim = generate_scenario("C4d", seed=1, n_objects_per_cluster=5, n_timepoints=20, n_grid=51)
    vals, g = sim.panel.values[:5], sim.panel.grid
    plain = fit_arrays(vals, g)
    loo = LeaveOneOut(sim.panel.values, g)
    np.testing.assert_array_equal(loo.fit(range(5), exclude=7).reconstruct(), plain.reconstruct())
    with pytest.raises(SingletonClusterError):
        leave_one_out_fit((vals[:2], g), exclude=0)


def test_leave_one_out_mean_perturbation_bound(rng):
    g = make_uniform_grid(21, 0, 1)
    base = np.sin(np.pi * g.points)
    vals = base + 0.01 * rng.normal(size=(10, 8, 21))
    full = fit_arrays(vals, g).decomposition.mu
    spread = np.max(np.abs(vals.mean(axis=1) - full))
    for i in range(10):
        part = leave_one_out_fit((vals, g), exclude=i).decomposition.mu
        assert np.max(np.abs(part - full)) <= spread / 9 + 1e-12


def test_predict_object_examples():
    sim = generate_scenario("C4d", seed=2, n_objects_per_cluster=8, n_timepoints=30, n_grid=51,
                            noise_sigma=0.1)
    g, vals = sim.panel.grid, sim.panel.values
    fit = leave_one_out_fit((vals[:8], g), exclude=0)
    pred = predict_object(fit, vals[0], g)
    err = np.mean(np.sqrt(((pred - vals[0]) ** 2) @ g.weights))
    assert err <= 0.1 * 1.5
    # an object equal to the cluster mean in every period is predicted by its level
    flat = np.broadcast_to(fit.decomposition.mu, (30, 51))
    np.testing.assert_allclose(predict_object(fit, flat, g), flat, atol=1e-8)
    # identical objects get identical predictions
    np.testing.assert_array_equal(predict_object(fit, vals[3], g), predict_object(fit, vals[3].copy(), g))


def test_reclassify_fixed_point_and_correction():
    sim = generate_scenario("C4d", seed=3, n_objects_per_cluster=10, n_timepoints=40)
    truth = sim.truth
    same = reclassify_once(sim.panel, ClusterAssignment(truth.copy(), 2))
    np.testing.assert_array_equal(same.labels, truth)
    wrong = truth.copy()
    wrong[0] = 2
    fixed = reclassify_once(sim.panel, ClusterAssignment(wrong, 2))
    np.testing.assert_array_equal(fixed.labels, truth)
    perm = 3 - wrong
    np.testing.assert_array_equal(reclassify_once(sim.panel, ClusterAssignment(perm, 2)).labels,
                                  3 - fixed.labels)
    one = reclassify_once(sim.panel, ClusterAssignment(np.ones(20, int), 1))
    assert one.K == 1 and np.all(one.labels == 1)


def test_cluster_mftsc_c4d_and_determinism():
    sim = generate_scenario("C4d", seed=4, n_objects_per_cluster=10, n_timepoints=40)
    a = cluster_mftsc(sim.panel, InitialClusteringConfig(seed=1))
    b = cluster_mftsc(sim.panel, InitialClusteringConfig(seed=1))
    assert a.to_dict() == b.to_dict()
    assert correct_classification_rate(a.labels, sim.truth) >= 0.95
    if a.converged:
        np.testing.assert_array_equal(a.history[-1], a.history[-2])
    seen = [tuple(h) for h in a.history]
    assert len(set(seen)) >= len(seen) - 1
    assert set(a.labels.tolist()) <= set(range(1, a.K + 1))


def test_cluster_mftsc_rejects_small_panels():
    g = make_uniform_grid(11, 0, 1)
    with pytest.raises(ValueError):
        cluster_mftsc(FTSPanel(g, np.zeros((2, 10, 11))))
    with pytest.raises(ValueError):
        cluster_mftsc(FTSPanel(g, np.random.default_rng(0).normal(size=(5, 3, 11))))


def test_baselines_separate_easy_groups():
    panel, truth = _two_groups(1)
    for method in ("kmeans", "hclust"):
        lab = baseline_clustering(panel, 2, method=method, seed=0)
        assert correct_classification_rate(lab, truth) == 1.0


def test_crate_examples():
    assert correct_classification_rate([1, 1, 2, 2], [1, 1, 2, 2]) == 1
    assert correct_classification_rate([2, 2, 1, 1], [1, 1, 2, 2]) == 1
    assert correct_classification_rate([1, 2, 1, 2], [1, 1, 2, 2]) == 0.5
    with pytest.raises(ValueError):
        correct_classification_rate([1, 2], [1])


def test_crate_hungarian_matches_exhaustive(rng):
    truth = rng.integers(1, 8, size=40)
    pred = np.where(rng.random(40) < 0.7, truth, rng.integers(1, 8, size=40))
    perm = {a: b for a, b in zip(range(1, 8), rng.permutation(range(1, 8)))}
    pred = np.array([perm[v] for v in pred])
    best = 0.0
    labs = sorted(set(pred) | set(truth))
    for p in itertools.permutations(labs):
        mp = dict(zip(labs, p))
        best = max(best, np.mean([mp[v] == t for v, t in zip(pred, truth)]))
    assert correct_classification_rate(pred, truth) == pytest.approx(best)


def test_adjusted_rand_against_sklearn(rng):
    assert adjusted_rand_index([1, 1, 2, 2], [1, 1, 2, 2]) == 1
    assert adjusted_rand_index([1, 1, 1, 1], [1, 1, 2, 2]) == pytest.approx(0.0)
    assert adjusted_rand_index([1, 2, 1, 2], [1, 1, 2, 2]) == pytest.approx(
        adjusted_rand_score([1, 1, 2, 2], [1, 2, 1, 2]))
    for _ in range(20):
        a, b = rng.integers(1, 5, 30), rng.integers(1, 4, 30)
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(b, a))
        assert adjusted_rand_index(a, a) == pytest.approx(1.0)
