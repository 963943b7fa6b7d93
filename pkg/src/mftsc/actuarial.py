"""Life annuity prices from forecast mortality surfaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TERMINAL_AGE = 90
RETIREMENT_AGE = 65
DEFERRED_PAYMENTS = 25


@dataclass(eq=False)
class MortalitySurface:
    """Central death rates ``m`` indexed by (year, age); NaN marks a missing cell."""

    years: np.ndarray
    ages: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=int)
        self.ages = np.asarray(self.ages, dtype=int)
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.shape != (self.years.size, self.ages.size):
            raise ValueError(f"rates must have shape ({self.years.size}, {self.ages.size})")
        if np.any(self.rates[~np.isnan(self.rates)] < 0):
            raise ValueError("rates must be non-negative")
        self._year_pos = {int(y): k for k, y in enumerate(self.years)}
        self._age_pos = {int(a): k for k, a in enumerate(self.ages)}

    def rate(self, year: int, age: int) -> float:
        try:
            value = float(self.rates[self._year_pos[int(year)], self._age_pos[int(age)]])
        except KeyError:
            value = float("nan")
        if np.isnan(value):
            raise KeyError(f"surface has no cell for year {year}, age {age}")
        return value


def death_probability(m, method: str = "exponential"):
    """One-year death probability from a central rate.

    ``"exponential"`` assumes a constant force, ``q = 1 - exp(-m)``;
    ``"balducci"`` uses ``q = m / (1 + m/2)``.
    """
    m = np.asarray(m, dtype=float)
    if method == "exponential":
        return -np.expm1(-m)
    if method == "balducci":
        return np.minimum(m / (1.0 + 0.5 * m), 1.0)
    raise ValueError(f"unknown conversion {method!r}")


def survival_probabilities(surface: MortalitySurface, x: int, t: int, n_max: int,
                           method: str = "exponential") -> np.ndarray:
    """``n p_{x,t}`` for ``n = 1..n_max`` along the cohort diagonal."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    m = np.array([surface.rate(t + s, x + s) for s in range(n_max)])
    return np.cumprod(1.0 - death_probability(m, method))


@dataclass(frozen=True)
class AnnuityQuote:
    """Present value of an annual payment of 1."""

    age: int
    year: int
    rate: float
    present_value: float
    n_payments: int

    def to_dict(self) -> dict:
        return {"age": self.age, "year": self.year, "rate": self.rate,
                "present_value": self.present_value, "n_payments": self.n_payments}


def annuity_price(surface: MortalitySurface, x: int, t: int, i: float,
                  method: str = "exponential") -> AnnuityQuote:
    """Price an annuity paying 1 a year.

    From age 65 the payments run for ``90 - x`` years. Below 65 the annuity is
    deferred to 65 and pays 25 times, with survival measured from age 65 in
    year ``t + 65 - x`` and discounting from the issue date.
    """
    if not 0 <= x < TERMINAL_AGE:
        raise ValueError(f"age must lie in [0, {TERMINAL_AGE}), got {x}")
    if i <= -1:
        raise ValueError(f"interest rate must exceed -1, got {i}")
    if x >= RETIREMENT_AGE:
        n = TERMINAL_AGE - x
        p = survival_probabilities(surface, x, t, n, method)
        disc = (1.0 + i) ** -np.arange(1, n + 1)
    else:
        n = DEFERRED_PAYMENTS
        wait = RETIREMENT_AGE - x
        p = survival_probabilities(surface, RETIREMENT_AGE, t + wait, n, method)
        disc = (1.0 + i) ** -(np.arange(1, n + 1) + wait)
    return AnnuityQuote(int(x), int(t), float(i), float(np.sum(p * disc)), int(n))
