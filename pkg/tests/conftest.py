import csv

import numpy as np
import pytest

from mftsc.core import make_uniform_grid


@pytest.fixture
def grid201():
    return make_uniform_grid(201, 0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_toy_mortality(path, n_countries=6, years=range(1960, 1991), ages=range(0, 106),
                        sexes=("F",), seed=5):
    """Gompertz-like synthetic rates with two groups of countries and Poisson noise."""
    rng = np.random.default_rng(seed)
    ages = np.asarray(list(ages))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["country_code", "sex", "year", "age", "rate", "exposure"])
        for c in range(n_countries):
            grp = c % 2
            for sex in sexes:
                for y in years:
                    level = -9.5 + 0.3 * grp - 0.02 * (y - years[0]) * (1 + 0.5 * grp)
                    m = np.exp(level + 0.09 * ages + 0.8 * np.exp(-ages / 2) + rng.normal(0, 0.01))
                    pop = 5e4 * np.exp(-ages / 60)
                    r = np.maximum(rng.poisson(m * pop), 1) / pop
                    for a in ages:
                        w.writerow([f"C{c}", sex, y, int(a), r[a], pop[a]])
    return path


@pytest.fixture
def toy_mortality(tmp_path):
    return write_toy_mortality(tmp_path / "toy.csv", n_countries=4, years=range(1960, 1986),
                               ages=range(0, 60))


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
