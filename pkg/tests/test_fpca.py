import warnings

import numpy as np
import pytest

from mftsc.core import GridFunction, inner_product, make_uniform_grid
from mftsc.fpca import (
    DegenerateInputWarning,
    EigenSystem,
    KernelMatrix,
    LongRunConfig,
    autocovariance,
    eigen_decompose,
    flat_top_weight,
    long_run_covariance,
    project_scores,
    sample_covariance,
    select_bandwidth,
    select_n_components,
)
from mftsc.simulation import simulate_ar1


def _lift(scores, fn, grid):
    return np.outer(scores, fn(grid.points))


def test_autocovariance_constant_series_is_zero(grid201):
    series = np.full((10, 201), 3.0)
    for q in (0, 1, -2):
        assert np.all(autocovariance(series, q, grid201).values == 0)


def test_autocovariance_lag0_iid(grid201):
    g = make_uniform_grid(5, 0, 1)
    T = 4000
    x = np.random.default_rng(0).standard_normal((T, 5))
    c = autocovariance(x, 0, g).values
    assert np.max(np.abs(c - np.eye(5))) < 5 / np.sqrt(T)


def test_autocovariance_alternating_negative():
    g = make_uniform_grid(7, 0, 1)
    s = np.array([1, -1, 1, -1, 1, -1], dtype=float)
    c = autocovariance(np.outer(s, np.ones(7)), 1, g).values
    assert np.all(c < 0)


def test_autocovariance_negative_lag_is_transpose(rng):
    g = make_uniform_grid(6, 0, 1)
    x = rng.normal(size=(20, 6))
    np.testing.assert_allclose(autocovariance(x, -2, g).values, autocovariance(x, 2, g).values.T)


def test_autocovariance_rejects_long_lag(rng):
    g = make_uniform_grid(6, 0, 1)
    with pytest.raises(ValueError):
        autocovariance(rng.normal(size=(5, 6)), 5, g)


@pytest.mark.parametrize("x,expected", [(0.0, 1.0), (0.75, 0.5), (1.2, 0.0), (-0.75, 0.5)])
def test_flat_top_weight(x, expected):
    assert flat_top_weight(x, 0.5) == pytest.approx(expected)


@pytest.mark.parametrize("k", [0.0, 1.0, 1.5])
def test_flat_top_weight_rejects_k(k):
    with pytest.raises(ValueError):
        flat_top_weight(0.2, k)


def test_long_run_small_bandwidth_is_lag0(rng):
    g = make_uniform_grid(11, 0, 1)
    x = rng.normal(size=(30, 11))
    lr = long_run_covariance(x, LongRunConfig(bandwidth=0.5, flat_top_k=0.5), g)
    np.testing.assert_allclose(lr.values, autocovariance(x, 0, g).values, atol=1e-12)


def test_long_run_constant_and_symmetric(rng):
    g = make_uniform_grid(11, 0, 1)
    assert np.all(long_run_covariance(np.ones((12, 11)), grid=g).values == 0)
    lr = long_run_covariance(rng.normal(size=(40, 11)), grid=g).values
    assert np.array_equal(lr, lr.T)


def test_long_run_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        LongRunConfig(bandwidth=0.0)


def test_long_run_ar1_trace_matches_theory():
    g = make_uniform_grid(51, 0, 1)
    T = 2000
    basis = lambda x: np.sqrt(2) * np.sin(np.pi * x)
    xi = simulate_ar1(T, 0.5, 1.0, seed=3)
    lr = long_run_covariance(_lift(xi, basis, g), LongRunConfig(bandwidth=T ** 0.2), g)
    trace = lr.trace()
    theory = 1.0 / (1 - 0.5) ** 2
    assert abs(trace - theory) / theory < 0.15


def test_bandwidth_white_noise_small_and_persistent_larger():
    g = make_uniform_grid(21, 0, 1)
    T = 200
    rng = np.random.default_rng(7)
    e = rng.standard_normal(T)
    white = _lift(e, lambda x: np.sin(np.pi * x), g)
    ar = np.empty(T)
    ar[0] = e[0]
    for t in range(1, T):
        ar[t] = 0.9 * ar[t - 1] + e[t]
    pers = _lift(ar, lambda x: np.sin(np.pi * x), g)
    h_white = select_bandwidth(white, grid=g)
    h_pers = select_bandwidth(pers, grid=g)
    assert 1 <= h_white <= T ** (1 / 3)
    assert h_pers >= h_white


def test_bandwidth_minimal_and_degenerate(rng):
    g = make_uniform_grid(5, 0, 1)
    h = select_bandwidth(rng.normal(size=(8, 5)), grid=g)
    assert np.isfinite(h) and h > 0
    with pytest.warns(DegenerateInputWarning):
        assert select_bandwidth(np.ones((10, 5)), grid=g) == 1


def _sep_kernel(g, terms):
    x = g.points
    vals = sum(lam * 2 * np.outer(np.sin(k * np.pi * x), np.sin(k * np.pi * x)) for k, lam in terms)
    return KernelMatrix(g, vals)


def test_eigen_rank_one(grid201):
    eig = eigen_decompose(_sep_kernel(grid201, [(1, 1.0)]))
    assert eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-3)
    assert abs(eig.eigenvalues[1]) < 1e-8
    phi = np.sqrt(2) * np.sin(np.pi * grid201.points)
    assert np.max(np.abs(np.abs(eig.vectors[0]) - phi)) < 1e-2


def test_eigen_two_term_against_dense_oracle():
    g = make_uniform_grid(401, 0, 1)
    eig = eigen_decompose(_sep_kernel(g, [(1, 1.0), (2, 0.5)]))
    np.testing.assert_allclose(eig.eigenvalues[:2], [1.0, 0.5], atol=1e-3)
    # dense oracle: eigenvalues of values * dx
    dense = np.sort(np.linalg.eigvalsh(_sep_kernel(g, [(1, 1.0), (2, 0.5)]).values * g.spacing))[::-1]
    np.testing.assert_allclose(eig.eigenvalues[:2], dense[:2], atol=1e-3)


def test_eigen_zero_kernel_and_orthonormal(grid201, rng):
    eig = eigen_decompose(KernelMatrix(grid201, np.zeros((201, 201))))
    assert np.all(eig.eigenvalues == 0)
    curves = rng.normal(size=(30, 201)).cumsum(axis=1) / 10
    eig = eigen_decompose(sample_covariance(curves, grid201)).truncate(5)
    gram = np.array([[inner_product(a, b) for b in eig.eigenfunctions] for a in eig.eigenfunctions])
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-6)
    assert np.all(np.diff(eig.eigenvalues) <= 0)


def test_eigen_rejects_nonfinite(grid201):
    vals = np.zeros((201, 201))
    vals[0, 0] = np.inf
    with pytest.raises(ValueError):
        eigen_decompose(KernelMatrix(grid201, vals))


def test_trace_identity(grid201, rng):
    curves = rng.normal(size=(25, 201)).cumsum(axis=1) / 10
    eig = eigen_decompose(sample_covariance(curves, grid201, ddof=1))
    centered = curves - curves.mean(axis=0)
    avg_norm = np.sum((centered**2) @ grid201.weights) / (25 - 1)
    assert eig.eigenvalues.sum() == pytest.approx(avg_norm, rel=1e-6)


@pytest.mark.parametrize("lam,n,expected", [
    ((0.9, 0.05, 0.03, 0.02), 100, 1),
    ((0.5, 0.3, 0.2), 100, 3),
    ((1.0,), 7, 1),
])
def test_select_n_components(lam, n, expected):
    assert select_n_components(np.array(lam), 0.9, n) == expected


def test_select_n_components_all_zero():
    with pytest.warns(DegenerateInputWarning):
        assert select_n_components(np.zeros(4)) == 1


def _sine_basis(g, n):
    vecs = np.array([np.sqrt(2) * np.sin((k + 1) * np.pi * g.points) for k in range(n)])
    return EigenSystem(g, np.ones(n), vecs)


def test_project_scores_examples(grid201):
    basis = _sine_basis(grid201, 3)
    np.testing.assert_allclose(project_scores(GridFunction(grid201, 3 * basis.vectors[0]), basis),
                               [3, 0, 0], atol=1e-6)
    np.testing.assert_allclose(project_scores(2 * basis.vectors[0] - 1.5 * basis.vectors[1], basis, 2),
                               [2, -1.5], atol=1e-4)
    orth = np.sqrt(2) * np.sin(7 * np.pi * grid201.points)
    np.testing.assert_allclose(project_scores(orth, basis), 0, atol=1e-10)


def test_project_scores_grid_mismatch(grid201):
    with pytest.raises(ValueError):
        project_scores(np.ones(50), _sine_basis(grid201, 2))


def test_reconstruction_monotone_in_components(grid201, rng):
    basis = _sine_basis(grid201, 4)
    curve = rng.normal(size=4) @ basis.vectors + 0.1 * np.cos(9 * np.pi * grid201.points)
    errs = []
    for n in range(1, 5):
        rec = project_scores(curve, basis, n) @ basis.vectors[:n]
        errs.append(np.sqrt(((curve - rec) ** 2) @ grid201.weights))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    in_span = rng.normal(size=4) @ basis.vectors
    rec = project_scores(in_span, basis) @ basis.vectors
    assert np.sqrt(((in_span - rec) ** 2) @ grid201.weights) / np.sqrt((in_span**2) @ grid201.weights) < 1e-4
