"""Command-line entry point: ``mftsc <command> [options]``.

Every command writes a JSON report (or a flat table with ``--format table``)
that echoes its configuration and seed, so identical inputs give identical
bytes. Failures exit with status 2 and print one line ``ErrorClass: message``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .actuarial import MortalitySurface, annuity_price
from .clustering import InitialClusteringConfig, cluster_mftsc
from .core import FTSPanel
from .forecasting import METHODS as FORECAST_METHODS
from .forecasting import _score_models, expanding_window_evaluation
from .io import (
    DataValidationError,
    RunConfig,
    detect_format,
    ingest,
    read_panel_csv,
    read_rate_table,
    write_mortality_csv,
    write_panel_csv,
)
from .panel import fit_panel_model
from .simulation import METHODS as SIM_METHODS
from .simulation import SCENARIO_IDS, generate_scenario, run_scenario

logger = logging.getLogger("mftsc")


class UsageError(ValueError):
    """Invalid combination of command-line options."""


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _table(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                    for c in columns])
    return buf.getvalue()


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _load_panel(args, cfg: RunConfig) -> tuple[FTSPanel, str]:
    fmt = detect_format(args.input)
    if fmt == "panel":
        return read_panel_csv(args.input), "panel"
    sex = args.sex or "T"
    result = ingest(args.input, cfg, sexes=(sex,))
    if sex not in result.panels:
        raise DataValidationError(f"no rows for sex {sex}")
    return result.panels[sex], "mortality"


def _input_echo(args) -> dict:
    return {"input": Path(args.input).name, "sex": getattr(args, "sex", None)}


def cmd_simulate(args) -> str:
    if args.scenario not in SCENARIO_IDS:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIO_IDS)}")
    if args.export:
        sim = generate_scenario(args.scenario, args.seed)
        write_panel_csv(sim.panel, args.export)
        doc = {
            "schema": "mftsc.simulated_panel/v1",
            "scenario": args.scenario,
            "seed": args.seed,
            "objects": list(sim.panel.labels),
            "truth": [int(v) for v in sim.truth],
            "config": sim.config.describe(),
        }
        if args.format == "table":
            return _table([{"object": o, "truth": int(t)} for o, t in zip(sim.panel.labels, sim.truth)],
                          ("object", "truth"))
        return _dumps(doc)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    result = run_scenario(args.scenario, args.reps, methods, args.seed, n_jobs=args.jobs)
    if args.format == "table":
        return result.to_table()
    return _dumps(result.to_dict())


def _cluster(panel: FTSPanel, cfg: RunConfig):
    init = InitialClusteringConfig(K_max=min(cfg.K_max, panel.n_objects - 1), Q_max=cfg.Q_max,
                                   variance_share=cfg.variance_share,
                                   kmeans_restarts=cfg.kmeans_restarts, seed=cfg.seed)
    return cluster_mftsc(panel, init, P=(cfg.P1, cfg.P2, cfg.P3), max_iterations=cfg.max_iterations)


def cmd_cluster(args) -> str:
    cfg = _config(args)
    panel, _ = _load_panel(args, cfg)
    res = _cluster(panel, cfg)
    if args.format == "table":
        return _table([{"object": o, "cluster": int(c)} for o, c in zip(panel.labels, res.labels)],
                      ("object", "cluster"))
    doc = {
        "schema": "mftsc.cluster_report/v1",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "data": {**_input_echo(args), "objects": panel.n_objects, "times": [panel.times[0], panel.times[-1]]},
        "assignment": res.to_dict(panel.labels),
    }
    return _dumps(doc)


def _forecast_rows(panel: FTSPanel, sex: Optional[str], n_train: int, H: int,
                   labels, cfg: RunConfig) -> list:
    rows = []
    train = panel.values[:, :n_train]
    years = [panel.times[n_train - 1] + h for h in range(1, H + 1)]
    for method in FORECAST_METHODS:
        models = _score_models(train, panel.grid, method, labels, (cfg.P1, cfg.P2, cfg.P3), None)
        for i, model in enumerate(models):
            fc = model.forecast(H, cfg.p_max)
            for h, year in enumerate(years):
                for j, x in enumerate(panel.grid.points):
                    rows.append((method, panel.labels[i], sex, year, x, fc[h, j]))
    return rows


def cmd_forecast(args) -> str:
    cfg = _config(args)
    if args.train_end is not None:
        cfg.train_end = args.train_end
    if args.horizons is not None:
        cfg.horizons = args.horizons
    panel, kind = _load_panel(args, cfg)
    times = np.array(panel.times)
    if cfg.train_end is None:
        raise UsageError("a training end (--train-end or train_end in the config) is required")
    if cfg.train_end >= times[-1]:
        raise UsageError(f"train end {cfg.train_end} leaves no held-out data (last time {times[-1]})")
    n_train = int(np.sum(times <= cfg.train_end))
    if n_train < 8:
        raise UsageError(f"train end {cfg.train_end} leaves only {n_train} training curves; need 8")
    H = min(cfg.horizons, len(times) - n_train)
    train_panel = panel.subset(times=np.arange(n_train))
    assignment = _cluster(train_panel, cfg)
    reports = []
    for method in ("UTS", "MFTSC"):
        rep = expanding_window_evaluation(
            panel, n_train, method, labels=assignment.labels if method == "MFTSC" else None,
            max_horizon=H, P=(cfg.P1, cfg.P2, cfg.P3), p_max=cfg.p_max, intervals=not args.no_intervals,
            alpha=cfg.alpha, B=cfg.bootstrap_B, seed=cfg.seed)
        rep.method = "UTS-baseline" if method == "UTS" else method
        reports.append(rep)
    if args.forecasts_out:
        rows = _forecast_rows(panel, args.sex or "T", n_train, H, assignment.labels, cfg)
        if kind == "mortality":
            write_mortality_csv([(m, c, s, y, int(round(x)), float(np.exp(v))) for m, c, s, y, x, v in rows],
                                args.forecasts_out)
        else:
            with open(args.forecasts_out, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("method", "object", "time", "x", "value"))
                for m, c, _, y, x, v in rows:
                    w.writerow([m, c, y, repr(float(x)), repr(float(v))])
    flat = [row for rep in reports for row in rep.to_rows()]
    if args.format == "table":
        return _table(flat, ("method", "h", "windows", "rmsfe", "interval_score"))
    doc = {
        "schema": "mftsc.forecast_report/v1",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "data": {**_input_echo(args), "objects": list(panel.labels),
                 "train_years": [int(times[0]), int(cfg.train_end)], "last_year": int(times[-1])},
        "clusters": [int(v) for v in assignment.labels],
        "reports": [rep.to_dict() for rep in reports],
        "table": flat,
    }
    return _dumps(doc)


def cmd_price(args) -> str:
    cfg = _config(args)
    rate = cfg.interest_rate if args.rate is None else args.rate
    tables = read_rate_table(args.input)
    quotes = []
    for (method, country, sex), (years, ages, rates) in tables.items():
        surface = MortalitySurface(years, ages, rates)
        try:
            q = annuity_price(surface, args.age, args.year, rate, args.conversion)
        except KeyError as exc:
            raise DataValidationError(f"({method}, {country}, {sex}): {exc.args[0]}") from None
        quotes.append({"year": q.year, "age": q.age, "method": method, "country": country, "sex": sex,
                       "rate": q.rate, "pv": q.present_value, "n_payments": q.n_payments})
    if args.format == "table":
        return _table(quotes, ("year", "age", "method", "country", "sex", "pv"))
    doc = {"schema": "mftsc.annuity_quotes/v1", "input": Path(args.input).name,
           "config": {"interest_rate": rate, "conversion": args.conversion,
                      "age": args.age, "year": args.year},
           "quotes": quotes}
    return _dumps(doc)


def cmd_plotdata(args) -> str:
    cfg = _config(args)
    panel, _ = _load_panel(args, cfg)
    if args.object not in panel.labels:
        raise UsageError(f"object {args.object!r} not in panel ({len(panel.labels)} objects)")
    i = panel.labels.index(args.object)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.what == "rainbow":
        w.writerow(("object", "time", "x", "value"))
        for t, time in enumerate(panel.times):
            for j, x in enumerate(panel.grid.points):
                w.writerow([args.object, time, repr(float(x)), repr(float(panel.values[i, t, j]))])
        return buf.getvalue()
    fit = fit_panel_model(panel, cfg.P1, cfg.P2, cfg.P3)
    dec = fit.decomposition
    curves = [("mu", 0, dec.mu), ("eta", 0, dec.eta[i])]
    curves += [("phi", k + 1, v) for k, v in enumerate(fit.eta_basis.vectors)]
    curves += [("rho", k + 1, v) for k, v in enumerate(fit.r_basis.vectors)]
    curves += [("psi", k + 1, v) for k, v in enumerate(fit.u_basis.vectors)]
    w.writerow(("object", "component", "index", "x", "value"))
    for name, k, vals in curves:
        for x, v in zip(panel.grid.points, vals):
            w.writerow([args.object, name, k, repr(float(x)), repr(float(v))])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mftsc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        if data:
            p.add_argument("--input", required=True, help="mortality table or curve panel CSV")
            p.add_argument("--sex", choices=("F", "M", "T"), help="sex to use from a mortality table (default T)")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--format", choices=("json", "table"), default="json")
        p.add_argument("--output", help="write the report here instead of stdout")

    p = sub.add_parser("simulate", help="replicate a simulation design")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="MFTSC", help=f"comma-separated subset of {','.join(SIM_METHODS)}")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--export", help="write one generated panel (seed --seed) to this CSV instead")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", help="cluster a panel of functional time series")
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("forecast", help="expanding-window forecast evaluation")
    common(p)
    p.add_argument("--train-end", type=int, help="last time (year) of the initial training span")
    p.add_argument("--horizons", type=int, help="maximum forecast horizon")
    p.add_argument("--no-intervals", action="store_true", help="skip bootstrap prediction intervals")
    p.add_argument("--forecasts-out", help="write forecasts made at the training end to this CSV")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("price", help="annuity prices from a rate table")
    common(p, data=False)
    p.add_argument("--input", required=True, help="forecast or mortality rate CSV")
    p.add_argument("--age", type=int, required=True)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--rate", type=float, help="interest rate (default from config)")
    p.add_argument("--conversion", choices=("exponential", "balducci"), default="exponential")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("plotdata", help="curve files for plotting")
    common(p)
    p.add_argument("--what", choices=("rainbow", "components"), required=True)
    p.add_argument("--object", required=True)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            text = args.func(args)
        _emit(text, getattr(args, "output", None))
    except Exception as exc:  # reported as one machine-parsable line
        msg = " ".join(str(exc).split()) or repr(exc)
        print(f"{type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
