import csv
import json

import numpy as np
import pytest

from mftsc.cli import main
from mftsc.io import (
    ConfigError,
    DataValidationError,
    RunConfig,
    aggregate_ages,
    ingest,
    read_mortality_csv,
    read_panel_csv,
    read_rate_table,
    write_panel_csv,
)
from mftsc.simulation import generate_scenario


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _write(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_ingest_two_country_happy_path(tmp_path):
    from conftest import write_toy_mortality

    p = write_toy_mortality(tmp_path / "two.csv", n_countries=2, years=range(2000, 2004), ages=range(0, 30))
    res = ingest(p, RunConfig(tau0=1.0))
    panel = res.panels["F"]
    assert panel.n_objects == 2 and panel.labels == ["C0", "C1"]
    assert panel.values.shape == (2, 4, 30)


def test_ingest_missing_age_names_cell(toy_mortality, tmp_path):
    rows = _rows(toy_mortality)
    drop = next(k for k, r in enumerate(rows) if r[:4] == ["C1", "F", "1962", "10"])
    bad = _write(tmp_path / "bad.csv", rows[:drop] + rows[drop + 1:])
    with pytest.raises(DataValidationError, match=r"missing age 10 for \(C1, F, 1962\)"):
        ingest(bad)


def test_ingest_duplicate_and_bad_rate_rows(toy_mortality, tmp_path):
    rows = _rows(toy_mortality)
    dup = _write(tmp_path / "dup.csv", rows + [rows[5]])
    with pytest.raises(DataValidationError, match="row"):
        read_mortality_csv(dup)
    bad = [r[:] for r in rows]
    bad[3][4] = "0"
    with pytest.raises(DataValidationError, match="row 4"):
        read_mortality_csv(_write(tmp_path / "zero.csv", bad))


def test_aggregate_ages_pools_deaths():
    ages = np.array([98, 99, 100, 101, 102])
    rates = np.array([0.3, 0.3, 0.4, 0.5, 0.6])
    expo = np.array([10.0, 10.0, 100.0, 50.0, 10.0])
    a, r, e = aggregate_ages(ages, rates, expo, 100)
    np.testing.assert_array_equal(a, [98, 99, 100])
    assert r[-1] == pytest.approx((40 + 25 + 6) / 160)
    assert e[-1] == 160


def test_run_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"no_such_key": 1})
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 7, "P1": 0.8}))
    cfg = RunConfig.load(p)
    assert cfg.seed == 7 and cfg.P1 == 0.8


def test_panel_csv_round_trip(tmp_path):
    sim = generate_scenario("C4d", seed=1, n_objects_per_cluster=2, n_timepoints=5, n_grid=11)
    write_panel_csv(sim.panel, tmp_path / "p.csv")
    back = read_panel_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.values, sim.panel.values)
    assert back.labels == sim.panel.labels
    write_panel_csv(back, tmp_path / "q.csv")
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "q.csv").read_bytes()


def test_cli_simulate_deterministic(capsys):
    args = ("simulate", "--scenario", "C1a", "--reps", 1, "--seed", 1)
    code, out1, _ = _run(capsys, *args)
    assert code == 0
    _, out2, _ = _run(capsys, *args)
    assert out1 == out2
    assert json.loads(out1)["schema"] == "mftsc.scenario_result/v1"


def test_cli_cluster_on_exported_simulation(tmp_path, capsys):
    panel = tmp_path / "c4d.csv"
    code, out, _ = _run(capsys, "simulate", "--scenario", "C4d", "--seed", 3, "--export", panel)
    assert code == 0
    truth = json.loads(out)["truth"]
    code, out, _ = _run(capsys, "cluster", "--input", panel, "--seed", 0)
    assert code == 0
    labels = json.loads(out)["assignment"]["labels"]
    from mftsc.clustering import correct_classification_rate

    assert correct_classification_rate(labels, truth) >= 0.95


def test_cli_forecast_and_price(toy_mortality, tmp_path, capsys):
    fc = tmp_path / "fc.csv"
    code, out, err = _run(capsys, "forecast", "--input", toy_mortality, "--sex", "F", "--train-end", 1978,
                          "--horizons", 3, "--forecasts-out", fc)
    assert code == 0, err
    doc = json.loads(out)
    assert [r["method"] for r in doc["reports"]] == ["UTS-baseline", "MFTSC"]
    assert doc["reports"][0]["counts"] == [7, 6, 5]
    tables = read_rate_table(fc)
    assert {k[0] for k in tables} == {"UTS", "MFTSC"}
    code, out, err = _run(capsys, "price", "--input", fc, "--age", 50, "--year", 1979, "--rate", 0.02)
    # ages stop at 59, so the deferred branch is missing cells
    assert code == 2 and err.startswith("DataValidationError:")
    code, _, err = _run(capsys, "forecast", "--input", toy_mortality, "--sex", "F", "--train-end", 1985)
    assert code == 2 and err.startswith("UsageError:") and err.count("\n") == 1


def test_cli_price_unit_case(tmp_path, capsys):
    rows = [("country_code", "sex", "year", "age", "rate", "exposure")]
    rows += [("X", "F", y, a, "0", "1") for y in range(2000, 2012) for a in range(80, 91)]
    path = _write(tmp_path / "zero.csv", rows)
    code, out, _ = _run(capsys, "price", "--input", path, "--age", 80, "--year", 2000, "--rate", 0)
    assert code == 0
    assert json.loads(out)["quotes"][0]["pv"] == pytest.approx(10.0)


def test_cli_plotdata(toy_mortality, tmp_path, capsys):
    code, out, _ = _run(capsys, "plotdata", "--input", toy_mortality, "--sex", "F", "--what", "rainbow",
                        "--object", "C1")
    assert code == 0 and out.splitlines()[0] == "object,time,x,value"
    assert len(out.splitlines()) == 1 + 26 * 60
    code, out, _ = _run(capsys, "plotdata", "--input", toy_mortality, "--sex", "F", "--what", "components",
                        "--object", "C1")
    assert code == 0 and {"mu", "eta", "rho", "psi"} <= {r.split(",")[1] for r in out.splitlines()[1:]}
    code, _, err = _run(capsys, "plotdata", "--input", toy_mortality, "--sex", "F", "--what", "rainbow",
                        "--object", "NOPE")
    assert code == 2 and err.startswith("UsageError:")
