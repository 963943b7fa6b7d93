import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mftsc.core import (
    FTSPanel,
    Grid,
    GridFunction,
    GridMismatchError,
    inner_product,
    l2_distance,
    make_uniform_grid,
)


def test_uniform_grid_unit_interval():
    g = make_uniform_grid(201, 0, 1)
    assert g.spacing == pytest.approx(0.005)
    assert g.points[0] == 0 and g.points[-1] == 1


def test_minimal_and_age_grids():
    np.testing.assert_array_equal(make_uniform_grid(2, 0, 1).points, [0, 1])
    ages = make_uniform_grid(101, 0, 100)
    np.testing.assert_allclose(ages.points, np.arange(101))


@pytest.mark.parametrize("n,a,b", [(1, 0, 1), (5, 1, 1), (5, 2, 1)])
def test_grid_rejects_bad_arguments(n, a, b):
    with pytest.raises(ValueError):
        make_uniform_grid(n, a, b)


def test_grid_rejects_nonuniform_points():
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.1, 0.3]))


def test_inner_product_examples(grid201):
    x = grid201.points
    one = GridFunction(grid201, np.ones_like(x))
    s = GridFunction(grid201, np.sqrt(2) * np.sin(np.pi * x))
    c = GridFunction(grid201, np.sqrt(2) * np.cos(np.pi * x))
    assert inner_product(one, one) == pytest.approx(1.0, abs=1e-12)
    assert abs(inner_product(s, c)) < 1e-4
    assert inner_product(s, s) == pytest.approx(1.0, abs=1e-4)


def test_inner_product_grid_mismatch(grid201):
    other = make_uniform_grid(101, 0, 1)
    with pytest.raises(GridMismatchError):
        inner_product(GridFunction(grid201, np.ones(201)), GridFunction(other, np.ones(101)))


def test_l2_distance_examples(grid201):
    f = GridFunction(grid201, np.ones(201))
    assert l2_distance(f, f) == 0
    assert l2_distance(f, GridFunction(grid201, np.zeros(201))) == pytest.approx(1.0)
    g2 = make_uniform_grid(51, 0, 2)
    assert l2_distance(GridFunction(g2, np.full(51, 3.0)), GridFunction(g2, np.zeros(51))) == pytest.approx(
        3 * np.sqrt(2))


def test_grid_function_rejects_nonfinite(grid201):
    v = np.ones(201)
    v[3] = np.nan
    with pytest.raises(ValueError):
        GridFunction(grid201, v)


def test_quadrature_second_order():
    errs = []
    for n in (21, 41, 81):
        g = make_uniform_grid(n, 0, 1)
        f = GridFunction(g, np.exp(g.points))
        errs.append(abs(inner_product(f, GridFunction(g, np.ones(n))) - (np.e - 1)))
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


vec = arrays(np.float64, 31, elements=st.floats(-100, 100, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(vec, vec, vec, st.floats(-5, 5))
def test_inner_product_symmetric_bilinear(a, b, c, k):
    g = make_uniform_grid(31, 0, 1)
    fa, fb, fc = (GridFunction(g, v) for v in (a, b, c))
    assert inner_product(fa, fb) == pytest.approx(inner_product(fb, fa), abs=1e-12)
    lhs = inner_product(fa * k + fb, fc)
    rhs = k * inner_product(fa, fc) + inner_product(fb, fc)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(vec, vec, vec)
def test_triangle_inequality(a, b, c):
    g = make_uniform_grid(31, 0, 1)
    fa, fb, fc = (GridFunction(g, v) for v in (a, b, c))
    assert l2_distance(fa, fc) <= l2_distance(fa, fb) + l2_distance(fb, fc) + 1e-9


def test_panel_rejects_ragged(grid201):
    s1 = [GridFunction(grid201, np.zeros(201))] * 3
    s2 = [GridFunction(grid201, np.zeros(201))] * 2
    with pytest.raises(ValueError, match="ragged"):
        FTSPanel.from_series([s1, s2])


def test_panel_subset_and_labels(grid201, rng):
    p = FTSPanel(grid201, rng.normal(size=(3, 4, 201)), labels=["a", "b", "c"], times=[10, 11, 12, 13])
    sub = p.subset(objects=[2, 0], times=[1, 3])
    assert sub.labels == ["c", "a"] and sub.times == [11, 13]
    np.testing.assert_array_equal(sub.values[0, 1], p.values[2, 3])
