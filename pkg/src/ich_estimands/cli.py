"""Batch command-line front end.

Subcommands: ``validate``, ``estimate``, ``test``, ``simulate``.
Exit codes: 0 success, 1 estimation-domain error, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .data import Form, read_dataset, validate, write_dataset
from .errors import EstimandError, EstimationError, InputError, NoEvents, WrongForm
from .estimands import ALL_STRATEGIES, HazardTable, StrategyKind, estimate
from .hazards import HazardKind, arm_hazards, transform_gap
from .logrank import LogRankTest, logrank
from .processes import build_processes
from .simulation import SimConfig, run_calibration, simulate, worker_count

log = logging.getLogger("ich_estimands")

EXIT_OK, EXIT_ESTIMATION, EXIT_INPUT = 0, 1, 2

INCIDENCE_COLUMNS = ("time", "mu", "variance", "ci_lo", "ci_hi", "truncated_flag", "clipped_flag")
EFFECT_COLUMNS = ("time", "tau", "variance", "ci_lo", "ci_hi", "truncated_flag", "clipped_flag")
TEST_COLUMNS = ("test", "status", "U", "S", "z", "p", "weight")


def _num(x) -> str:
    return format(float(x), ".10g")


# ----------------------------------------------------------------- file output


def _write_table(path: Path, columns, rows, fmt: str) -> Path:
    path = path.with_suffix("." + fmt)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)
    else:
        data = {c: [r[i] for r in rows] for i, c in enumerate(columns)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"columns": list(columns), "data": data}, fh, indent=1)
    return path


def _curve_rows(grid, point, res):
    return [
        [_num(t), _num(v), _num(var), _num(lo), _num(hi), int(tr), int(cl)]
        for t, v, var, lo, hi, tr, cl in zip(
            grid, point, res.variance, res.ci_lo, res.ci_hi, res.truncated, res.clipped
        )
    ]


def read_table(path) -> dict[str, list]:
    """Read a curve, effect or test file written by this CLI back into columns."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        cols = obj["columns"]
        raw = obj["data"]
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            cols = next(reader)
            rows = list(reader)
        raw = {c: [r[i] for r in rows] for i, c in enumerate(cols)}
    out = {}
    for c in cols:
        if c in ("test", "status", "weight"):
            out[c] = list(raw[c])
        elif c.endswith("_flag"):
            out[c] = [int(v) for v in raw[c]]
        else:
            out[c] = [float(v) if v not in ("", None) else float("nan") for v in raw[c]]
    return out


# --------------------------------------------------------------------- helpers


def _parse_schema(items) -> dict[str, str] | None:
    if not items:
        return None
    schema = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--column expects field=name, got {item!r}")
        schema[key.strip()] = value.strip()
    return schema


def _parse_strategies(text: str | None) -> list[StrategyKind]:
    if not text or text.strip().lower() == "all":
        return list(ALL_STRATEGIES)
    kinds = []
    for part in text.split(","):
        if part.strip():
            k = StrategyKind.parse(part)
            if k not in kinds:
                kinds.append(k)
    if not kinds:
        raise ValueError("no strategies given")
    return kinds


def _load(args):
    return read_dataset(args.input, args.t_star, _parse_schema(args.column))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------- commands


def _transform_gaps(ds) -> dict[str, float] | None:
    """Composite-hazard gap between the exp and product-limit survival forms."""
    try:
        procs = build_processes(ds)
    except EstimandError:
        return None
    return {str(p.arm): transform_gap(arm_hazards(p)[HazardKind.COMPOSITE]) for p in procs}


def cmd_validate(args) -> int:
    ds = _load(args)
    report = validate(ds).to_dict()
    warnings = []
    if args.strategies:
        kinds = _parse_strategies(args.strategies)
        if ds.form is Form.REDUCED and StrategyKind.TREATMENT_POLICY in kinds:
            warnings.append("tp not applicable: treatment policy needs full-form data")
    report["transform_gap"] = _transform_gaps(ds)
    report["warnings"] = warnings
    text = json.dumps(report, indent=2)
    if args.out:
        path = _out_dir(args) / "validation.json"
        path.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_estimate(args) -> int:
    ds = _load(args)
    kinds = _parse_strategies(args.strategies)
    if ds.form is Form.REDUCED and StrategyKind.TREATMENT_POLICY in kinds:
        raise WrongForm("tp: treatment policy strategy needs full-form data (T~, R~ observed)")
    tab = HazardTable.from_processes(build_processes(ds))
    extra = [float(t) for t in args.times.split(",")] if args.times else None
    grid = tab.default_output_grid(extra)
    kw = dict(level=args.level, transform=args.transform, ci_transform=args.ci_transform)

    def run(kind):
        try:
            return estimate(tab, kind, grid, **kw)
        except EstimationError as exc:
            raise type(exc)(f"{kind.label}: {exc}") from exc

    with ThreadPoolExecutor(max_workers=min(len(kinds), worker_count())) as pool:
        results = list(pool.map(run, kinds))

    out = _out_dir(args)
    written = []
    for kind, res in zip(kinds, results):
        for w in (0, 1):
            r = res.arm(w)
            written.append(
                _write_table(
                    out / f"incidence_{kind.value}_arm{w}",
                    INCIDENCE_COLUMNS,
                    _curve_rows(r.grid, r.mu, r),
                    args.format,
                )
            )
        e = res.effect
        written.append(
            _write_table(
                out / f"effect_{kind.value}", EFFECT_COLUMNS, _curve_rows(e.grid, e.tau, e), args.format
            )
        )
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def run_tests(procs, form: Form) -> list[list]:
    rows = []
    for test in LogRankTest:
        if test is LogRankTest.TP and form is Form.REDUCED:
            rows.append([test.value, "not applicable", "", "", "", "", ""])
            continue
        try:
            r = logrank(procs, test)
        except NoEvents:
            rows.append([test.value, "no events", "", "", "", "", ""])
            continue
        rows.append(
            [test.value, "ok", _num(r.u_stat), _num(r.s_var), _num(r.z), _num(r.p_two_sided), r.weight]
        )
    for kind in ("wo", "ps"):
        rows.append([kind, "not available", "", "", "", "", ""])
    return rows


def cmd_test(args) -> int:
    ds = _load(args)
    rows = run_tests(build_processes(ds), ds.form)
    path = _write_table(_out_dir(args) / "tests", TEST_COLUMNS, rows, args.format)
    log.info("wrote %s", path)
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    try:
        return SimConfig(
            a1=args.a1,
            a0=args.a0,
            c1=args.c1,
            c0=args.c0,
            censor_rate=args.censor_rate,
            n_per_arm=args.n_per_arm,
            t_star=args.t_star,
            seed=args.seed,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    out = _out_dir(args)
    ds = simulate(cfg)
    with open(out / "simulated.csv", "w", newline="", encoding="utf-8") as fh:
        write_dataset(ds, fh)
    if args.calibrate:
        if args.replications < 100:
            raise InputError("--replications must be at least 100")
        report = run_calibration(cfg, args.replications, args.level, transform=args.transform)
        with open(out / "calibration.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    return EXIT_OK


# ----------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ich-estimands",
        description="Cumulative incidences, treatment effects and log-rank tests "
        "for two-arm trials with an intercurrent event.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, out_required=True):
        p.add_argument("--input", required=True, help="CSV file with a header row")
        p.add_argument("--t-star", type=float, required=True, help="analysis horizon")
        p.add_argument(
            "--column",
            action="append",
            metavar="FIELD=NAME",
            help="map a logical field (id, arm, t_obs, delta_t, r_obs, delta_r, time, cause) "
            "to a column name; repeatable",
        )
        p.add_argument("--out", required=out_required, help="output directory")

    def fmt_arg(p):
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("validate", help="summarise and flag the input data")
    data_args(p, out_required=False)
    p.add_argument("--strategies", help="strategies to check applicability for")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("estimate", help="write incidence and effect curves")
    data_args(p)
    fmt_arg(p)
    p.add_argument("--strategies", default="all", help="comma list of tp,cv,wo,hp1,hp2,ps or 'all'")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--times", help="extra comma-separated output times")
    p.add_argument("--transform", choices=("exp", "product-limit"), default="exp")
    p.add_argument("--ci-transform", choices=("plain", "cloglog"), default="plain")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="log-rank tests for tp, cv and hp")
    data_args(p)
    fmt_arg(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="generate synthetic trial data, optionally calibrate")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-arm", type=int, default=1000)
    p.add_argument("--t-star", type=float, default=2.0)
    p.add_argument("--a1", type=float, default=0.4)
    p.add_argument("--a0", type=float, default=0.8)
    p.add_argument("--c1", type=float, default=0.3)
    p.add_argument("--c0", type=float, default=0.15)
    p.add_argument("--censor-rate", type=float, default=0.1)
    p.add_argument("--calibrate", action="store_true")
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--transform", choices=("exp", "product-limit"), default="exp")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    if getattr(args, "level", None) is not None and not 0 < args.level < 1:
        print("error: --level must lie in (0, 1)", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EstimationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
