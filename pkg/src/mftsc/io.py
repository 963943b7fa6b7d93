"""Reading and writing mortality tables, curve panels and run configurations.

Two delimited formats are understood:

* mortality tables with header ``country_code,sex,year,age,rate,exposure``;
* curve panels with header ``object,time,x,value`` (one row per grid point).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FTSPanel, Grid
from .smoothing import RawMortalitySurface, SmoothingConfig

logger = logging.getLogger(__name__)

MORTALITY_COLUMNS = ("country_code", "sex", "year", "age", "rate", "exposure")
PANEL_COLUMNS = ("object", "time", "x", "value")
SEXES = ("F", "M", "T")


class DataValidationError(ValueError):
    """An input table violates its schema."""


class ConfigError(ValueError):
    """A run configuration is malformed."""


@dataclass
class RunConfig:
    """Settings shared by the command-line tools.

    Loaded from a JSON object; unknown keys are rejected.
    """

    age_min: int = 0
    age_max: Optional[int] = None
    aggregate_age: dict = field(default_factory=lambda: {"F": 100, "M": 98, "T": 100})
    tau0: Optional[float] = None
    monotone_from: Optional[float] = 65.0
    P1: float = 0.9
    P2: float = 0.9
    P3: float = 0.9
    K_max: int = 10
    Q_max: int = 6
    variance_share: float = 0.9
    kmeans_restarts: int = 25
    max_iterations: int = 50
    seed: int = 0
    train_end: Optional[int] = None
    horizons: int = 10
    p_max: int = 5
    alpha: float = 0.2
    bootstrap_B: int = 1000
    interest_rate: float = 0.02

    def __post_init__(self):
        for name in ("P1", "P2", "P3", "variance_share"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name, low in (("K_max", 2), ("Q_max", 1), ("kmeans_restarts", 1), ("max_iterations", 1),
                          ("horizons", 1), ("p_max", 1), ("bootstrap_B", 1)):
            if int(getattr(self, name)) < low:
                raise ConfigError(f"{name} must be >= {low}")
        if self.tau0 is not None and self.tau0 < 0:
            raise ConfigError("tau0 must be non-negative")
        if self.interest_rate <= -1:
            raise ConfigError("interest_rate must exceed -1")
        unknown = set(self.aggregate_age) - set(SEXES)
        if unknown:
            raise ConfigError(f"aggregate_age has unknown sex codes {sorted(unknown)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown configuration keys: {', '.join(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _header(path) -> list[str]:
    with open(path, newline="") as fh:
        return [c.strip() for c in next(csv.reader(fh), [])]


def detect_format(path) -> str:
    """``"mortality"`` or ``"panel"`` from the header row."""
    head = tuple(_header(path))
    if head == MORTALITY_COLUMNS:
        return "mortality"
    if head == PANEL_COLUMNS:
        return "panel"
    raise DataValidationError(f"{path}: row 1: unrecognised header {','.join(head)}")


@dataclass
class MortalityRecord:
    country: str
    sex: str
    year: int
    age: int
    rate: float
    exposure: float
    row: int


def read_mortality_csv(path) -> list[MortalityRecord]:
    """Parse and validate a mortality table; errors name the offending row."""
    records = []
    seen: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = tuple(c.strip() for c in next(reader, []))
        if head != MORTALITY_COLUMNS:
            raise DataValidationError(
                f"row 1: header must be {','.join(MORTALITY_COLUMNS)}, got {','.join(head)}")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MORTALITY_COLUMNS):
                raise DataValidationError(f"row {row_no}: expected 6 fields, got {len(row)}")
            country, sex = row[0].strip(), row[1].strip()
            if not country:
                raise DataValidationError(f"row {row_no}: empty country_code")
            if sex not in SEXES:
                raise DataValidationError(f"row {row_no}: sex must be one of F, M, T, got {sex!r}")
            try:
                year, age = int(row[2]), int(row[3])
                rate, exposure = float(row[4]), float(row[5])
            except ValueError:
                raise DataValidationError(f"row {row_no}: non-numeric year, age, rate or exposure") from None
            if not (np.isfinite(rate) and np.isfinite(exposure)) or exposure < 0 or rate < 0:
                raise DataValidationError(f"row {row_no}: rate and exposure must be finite and non-negative")
            if exposure > 0 and rate <= 0:
                raise DataValidationError(
                    f"row {row_no}: non-positive rate with positive exposure "
                    f"({country}, {sex}, {year}, age {age})")
            key = (country, sex, year, age)
            if key in seen:
                raise DataValidationError(
                    f"row {row_no}: duplicate ({country}, {sex}, {year}, {age}), first at row {seen[key]}")
            seen[key] = row_no
            records.append(MortalityRecord(country, sex, year, age, rate, exposure, row_no))
    if not records:
        raise DataValidationError(f"{path}: no data rows")
    return records


def _check_contiguous(records: list[MortalityRecord]) -> None:
    groups: dict = {}
    for r in records:
        groups.setdefault((r.country, r.sex, r.year), set()).add(r.age)
    for (country, sex, year), ages in sorted(groups.items()):
        missing = sorted(set(range(min(ages), max(ages) + 1)) - ages)
        if missing:
            raise DataValidationError(
                f"missing age {missing[0]} for ({country}, {sex}, {year})")


def aggregate_ages(ages: np.ndarray, rates: np.ndarray, exposures: np.ndarray, top: int):
    """Collapse ages ``>= top`` into one cell with pooled deaths and exposure."""
    keep = ages < top
    if not np.any(ages >= top):
        return ages, rates, exposures
    old = ~keep
    deaths = float(np.sum(rates[old] * exposures[old]))
    expo = float(np.sum(exposures[old]))
    if expo <= 0:
        raise DataValidationError(f"no exposure at ages {top}+ to aggregate")
    return (np.r_[ages[keep], top], np.r_[rates[keep], deaths / expo], np.r_[exposures[keep], expo])


@dataclass(eq=False)
class IngestResult:
    """Raw surfaces per (country, sex) and smoothed log-rate panels per sex."""

    surfaces: dict
    panels: dict
    tau0: dict


def ingest(path, config: Optional[RunConfig] = None, sexes=None, smooth: bool = True) -> IngestResult:
    """Read a mortality table and build one smoothed log-rate panel per sex.

    Ages at or above the configured aggregation age are pooled first; the
    countries of a sex must then share years and ages. With ``smooth=False``
    the panels hold raw log rates.
    """
    config = config or RunConfig()
    records = read_mortality_csv(path)
    _check_contiguous(records)
    cells: dict = {}
    for r in records:
        if sexes is not None and r.sex not in sexes:
            continue
        cells.setdefault((r.country, r.sex), {}).setdefault(r.year, {})[r.age] = (r.rate, r.exposure)
    if not cells:
        raise DataValidationError(f"no rows for sex {','.join(sexes or SEXES)}")
    surfaces = {}
    for (country, sex), by_year in sorted(cells.items()):
        years = sorted(by_year)
        top = int(config.aggregate_age.get(sex, 10**6))
        rows_r, rows_e, age_axis = [], [], None
        for y in years:
            ages = np.array(sorted(by_year[y]))
            rates = np.array([by_year[y][a][0] for a in ages])
            expo = np.array([by_year[y][a][1] for a in ages])
            ages, rates, expo = aggregate_ages(ages, rates, expo, top)
            hi = config.age_max if config.age_max is not None else ages.max()
            sel = (ages >= config.age_min) & (ages <= hi)
            ages, rates, expo = ages[sel], rates[sel], expo[sel]
            if age_axis is None:
                age_axis = ages
            elif not np.array_equal(age_axis, ages):
                raise DataValidationError(f"({country}, {sex}): age range differs in year {y}")
            rows_r.append(rates)
            rows_e.append(expo)
        if age_axis is None or age_axis.size < 3:
            raise DataValidationError(f"({country}, {sex}): fewer than 3 ages after filtering")
        grid = Grid(age_axis.astype(float))
        surfaces[(country, sex)] = RawMortalitySurface(np.array(rows_r), np.array(rows_e), grid,
                                                        np.array(years))
    panels, taus = {}, {}
    for sex in sorted({s for _, s in surfaces}):
        keys = sorted(k for k in surfaces if k[1] == sex)
        first = surfaces[keys[0]]
        for k in keys[1:]:
            s = surfaces[k]
            if not np.array_equal(s.years, first.years):
                raise DataValidationError(f"({k[0]}, {sex}): years differ from {keys[0][0]}")
            if s.ages != first.ages:
                raise DataValidationError(f"({k[0]}, {sex}): ages differ from {keys[0][0]}")
        smoothed = []
        for k in keys:
            surf = surfaces[k]
            if smooth:
                scfg = SmoothingConfig(config.tau0, config.monotone_from)
                smoothed.append(surf.smooth(scfg))
            else:
                smoothed.append(surf.log_rates)
        panels[sex] = FTSPanel(first.ages, np.array(smoothed), labels=[k[0] for k in keys],
                               times=[int(y) for y in first.years])
        taus[sex] = config.tau0
    return IngestResult(surfaces, panels, taus)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_panel_csv(panel: FTSPanel, path) -> None:
    """Write a panel in the ``object,time,x,value`` format with round-trip precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for i, name in enumerate(panel.labels):
            for t, time in enumerate(panel.times):
                for j, x in enumerate(panel.grid.points):
                    w.writerow([name, int(time), _fmt(x), _fmt(panel.values[i, t, j])])


def read_panel_csv(path) -> FTSPanel:
    """Read an ``object,time,x,value`` file; every object must cover every (time, x)."""
    data: dict = {}
    objects, times, xs = [], set(), set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = tuple(c.strip() for c in next(reader, []))
        if head != PANEL_COLUMNS:
            raise DataValidationError(f"row 1: header must be {','.join(PANEL_COLUMNS)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataValidationError(f"row {row_no}: expected 4 fields, got {len(row)}")
            try:
                obj, t, x, v = row[0], int(row[1]), float(row[2]), float(row[3])
            except ValueError:
                raise DataValidationError(f"row {row_no}: non-numeric time, x or value") from None
            if not np.isfinite(v):
                raise DataValidationError(f"row {row_no}: non-finite value")
            if obj not in data:
                data[obj] = {}
                objects.append(obj)
            if (t, x) in data[obj]:
                raise DataValidationError(f"row {row_no}: duplicate ({obj}, {t}, {x!r})")
            data[obj][(t, x)] = v
            times.add(t)
            xs.add(x)
    if not objects:
        raise DataValidationError(f"{path}: no data rows")
    times_s, xs_s = sorted(times), sorted(xs)
    values = np.empty((len(objects), len(times_s), len(xs_s)))
    for i, obj in enumerate(objects):
        for a, t in enumerate(times_s):
            for b, x in enumerate(xs_s):
                try:
                    values[i, a, b] = data[obj][(t, x)]
                except KeyError:
                    raise DataValidationError(f"missing value for ({obj}, {t}, {x!r})") from None
    return FTSPanel(Grid(np.array(xs_s)), values, labels=objects, times=times_s)


def write_mortality_csv(rows, path) -> None:
    """Write ``(method, country, sex, year, age, rate)`` rows of forecast rates."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "country_code", "sex", "year", "age", "rate"))
        for method, country, sex, year, age, rate in rows:
            w.writerow([method, country, sex, int(year), int(age), _fmt(rate)])


def read_rate_table(path) -> dict:
    """Rate surfaces keyed by ``(method, country, sex)`` from a forecast or mortality file.

    Each value is ``(years, ages, rates)``; mortality tables get method ``"input"``.
    """
    head = tuple(_header(path))
    has_method = head == ("method", "country_code", "sex", "year", "age", "rate")
    if not has_method and head != MORTALITY_COLUMNS:
        raise DataValidationError(f"row 1: unrecognised header {','.join(head)}")
    cells: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if has_method:
                    method, country, sex, year, age, rate = row[0], row[1], row[2], int(row[3]), int(row[4]), float(row[5])
                else:
                    method, country, sex, year, age, rate = "input", row[0], row[1], int(row[2]), int(row[3]), float(row[4])
            except (ValueError, IndexError):
                raise DataValidationError(f"row {row_no}: malformed row") from None
            if not rate >= 0:
                raise DataValidationError(f"row {row_no}: rate must be non-negative")
            cells.setdefault((method, country, sex), {})[(year, age)] = rate
    out = {}
    for key, tab in sorted(cells.items()):
        years = sorted({y for y, _ in tab})
        ages = sorted({a for _, a in tab})
        rates = np.full((len(years), len(ages)), np.nan)
        for (y, a), v in tab.items():
            rates[years.index(y), ages.index(a)] = v
        out[key] = (np.array(years), np.array(ages), rates)
    return out
