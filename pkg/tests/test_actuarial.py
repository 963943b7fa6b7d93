import numpy as np
import pytest

from mftsc.actuarial import (
    MortalitySurface,
    annuity_price,
    death_probability,
    survival_probabilities,
)

YEARS = np.arange(1990, 2100)
AGES = np.arange(0, 111)


def _flat(m):
    return MortalitySurface(YEARS, AGES, np.full((YEARS.size, AGES.size), float(m)))


def test_survival_examples():
    np.testing.assert_array_equal(survival_probabilities(_flat(0), 50, 2000, 5), 1.0)
    np.testing.assert_array_equal(survival_probabilities(_flat(1e6), 50, 2000, 5), 0.0)
    p = survival_probabilities(_flat(0.01), 50, 2000, 3)
    assert p[-1] == pytest.approx(np.exp(-0.03), abs=1e-15)
    assert np.all(np.diff(p) <= 0)


def test_death_probability_conversions():
    assert death_probability(0.1) == pytest.approx(1 - np.exp(-0.1))
    assert death_probability(0.1, "balducci") == pytest.approx(0.1 / 1.05)
    with pytest.raises(ValueError):
        death_probability(0.1, "other")


def test_annuity_unit_cases():
    assert annuity_price(_flat(0), 80, 2000, 0.0).present_value == pytest.approx(10.0, abs=1e-12)
    assert annuity_price(_flat(0), 89, 2000, 0.02).present_value == pytest.approx(1 / 1.02, abs=1e-12)


def test_deferred_branch_matches_immediate_discounted():
    rng = np.random.default_rng(0)
    rates = rng.uniform(0.001, 0.05, (YEARS.size, AGES.size))
    s = MortalitySurface(YEARS, AGES, rates)
    deferred = annuity_price(s, 64, 2000, 0.03).present_value
    immediate = annuity_price(s, 65, 2001, 0.03).present_value
    assert deferred == pytest.approx(immediate / 1.03, rel=1e-12)


def test_annuity_bounds_and_errors():
    q = annuity_price(_flat(0.02), 70, 2000, 0.02)
    assert 0 <= q.present_value <= q.n_payments
    with pytest.raises(ValueError):
        annuity_price(_flat(0.02), 90, 2000, 0.02)
    with pytest.raises(ValueError):
        annuity_price(_flat(0.02), 70, 2000, -1.0)
    short = MortalitySurface(YEARS[:5], AGES, np.full((5, AGES.size), 0.01))
    with pytest.raises(KeyError):
        annuity_price(short, 70, 1990, 0.02)


def test_monotonicity_on_random_surfaces():
    rng = np.random.default_rng(42)
    for _ in range(100):
        rates = np.exp(rng.uniform(-8, -1, (YEARS.size, AGES.size)))
        s = MortalitySurface(YEARS, AGES, rates)
        x = int(rng.integers(20, 90))
        lo = annuity_price(s, x, 2000, 0.01).present_value
        hi = annuity_price(s, x, 2000, 0.05).present_value
        assert hi < lo
        bumped = MortalitySurface(YEARS, AGES, rates * rng.uniform(1, 2, rates.shape))
        assert annuity_price(bumped, x, 2000, 0.01).present_value <= lo + 1e-15
