"""Command-line runner: ``fermatlab run|list|sweep``.

Exit codes: 0 when every expectation in the config is met, 1 when some
outcome diverges from its expectation, 2 on config or system errors.

Each run directory receives report.json (deterministic: no timestamps),
cells.csv, paths.csv, SVG figures, summary.txt (the only file with a
timestamp) and MANIFEST. MANIFEST is written first with ``status:
incomplete`` and rewritten with file hashes once every output exists.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import FermatError
from .experiments import ANCHORS, RUNNERS, STATIONARITY_KINDS, default_config, run_experiment
from .paths import path_to_csv
from .plotting import convergence_figure, multiplier_figure, sweep_figure
from .systems import SystemSpec
from .variation import jsonable, fitted_order

EXIT_OK, EXIT_DIVERGED, EXIT_ERROR = 0, 1, 2
CELL_HEADER = ["experiment", "direction", "mode", "seed", "epsilon", "grid", "T", "dTde_2pt", "dTde_4pt"]
SWEEP_AXES = ("grid", "epsilon", "dimension")
# accepted distance of a sweep's fitted refinement order from the quadrature order
SWEEP_ORDER_BAND = 0.3


class RunError(Exception):
    """Operational failure that maps to exit code 2."""


# ------------------------------------------------------------------ output helpers


def _dump_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def _manifest(out: Path, status: str, files=(), note: str | None = None):
    lines = [f"status: {status}", f"fermatlab {__version__}"]
    if note:
        lines.append(f"note: {note}")
    for name in sorted(files):
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        lines.append(f"{digest}  {name}")
    _write(out / "MANIFEST", "\n".join(lines) + "\n")


def _resolved_config(cfg: ExperimentConfig) -> dict:
    d = cfg.to_dict()
    d["system"]["parameters"] = cfg.system.resolved()
    return d


def _cell_rows(cfg, result):
    rows = []
    for name, report in sorted(result.reports.items()):
        for label, rep in (("physical", report), ("baseline", report.baseline)):
            if rep is None:
                continue
            for row in rep.cells():
                rows.append({"experiment": f"{cfg.experiment}/{name}/{label}", **row})
    return rows


def _write_cells(path: Path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CELL_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# ------------------------------------------------------------------ run


def _executor(threads: int):
    return ThreadPoolExecutor(max_workers=threads) if threads > 1 else None


def execute(cfg: ExperimentConfig, out: Path, threads: int = 1, check_expectations: bool = True):
    """Run one config into ``out``; returns (exit_code, report_dict, result)."""
    out.mkdir(parents=True, exist_ok=True)
    _manifest(out, "incomplete", note="run in progress")
    pool = _executor(threads)
    try:
        result = run_experiment(cfg, pool)
        checks = result.check(cfg.expect) if check_expectations else {}
    except (FermatError, ValueError) as exc:
        _manifest(out, "failed", note=f"{type(exc).__name__}: {exc}")
        raise RunError(f"{type(exc).__name__}: {exc}") from None
    finally:
        if pool is not None:
            pool.shutdown()
    met = all(c["met"] for c in checks.values())
    report = {
        "fermatlab_version": __version__,
        "experiment": cfg.experiment,
        "anchor": ANCHORS[cfg.experiment],
        "config": _resolved_config(cfg),
        "outcomes": result.outcomes,
        "expectations": checks,
        "expectations_evaluated": check_expectations,
        "status": "met" if met else "diverged",
        "results": result.results,
    }
    files = ["report.json", "cells.csv", "summary.txt"]
    _write(out / "report.json", _dump_json(report))
    _write_cells(out / "cells.csv", _cell_rows(cfg, result))
    if result.path is not None:
        _write(out / "paths.csv", path_to_csv(result.path))
        files.append("paths.csv")
    for name, rep in sorted(result.reports.items()):
        convergence_figure(rep, out / f"convergence_{name}.svg")
        files.append(f"convergence_{name}.svg")
    if result.traces:
        multiplier_figure(result.traces, out / "multipliers.svg")
        files.append("multipliers.svg")
    _write(out / "summary.txt", _summary(cfg, result, checks, met))
    _manifest(out, "complete", files)
    return (EXIT_OK if met else EXIT_DIVERGED), report, result


def _summary(cfg, result, checks, met):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    lines = [f"fermatlab {__version__}  {cfg.experiment}  ({stamp})", f"anchor: {ANCHORS[cfg.experiment]}", ""]
    for key, value in sorted(result.outcomes.items()):
        mark = ""
        if key in checks:
            mark = "  [met]" if checks[key]["met"] else f"  [DIVERGED, expected {checks[key]['expected']}]"
        lines.append(f"{key:28s} {value}{mark}")
    lines += ["", f"status: {'met' if met else 'diverged'}"]
    return "\n".join(lines) + "\n"


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg.variation["seed"] = args.seed
    return cfg


def _output_dir(cfg, args) -> Path:
    return Path(args.output_dir or cfg.output_dir)


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("FERMATLAB_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise RunError(f"FERMATLAB_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise RunError(f"thread count must be at least 1, got {n}")
    return n


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config, default_config), args)
    code, report, _ = execute(cfg, _output_dir(cfg, args), _threads(args))
    for key, c in sorted(report["expectations"].items()):
        print(f"{key}: {c['observed']} ({'met' if c['met'] else 'expected ' + str(c['expected'])})")
    print(f"status: {report['status']}")
    return code


def cmd_list(args) -> int:
    for name in RUNNERS:
        print(f"{name}")
        print(f"  anchor: {ANCHORS[name]}")
        text = json.dumps(default_config(name), sort_keys=True)
        print(f"  default: {text}")
    return EXIT_OK


# ------------------------------------------------------------------ sweep


def _parse_values(axis, text):
    try:
        raw = [v.strip() for v in text.split(",") if v.strip()]
        values = [float(v) for v in raw] if axis == "epsilon" else [int(v) for v in raw]
    except ValueError:
        raise RunError(f"cannot parse --values {text!r} for axis {axis}") from None
    if len(values) < 2:
        raise RunError("a sweep needs at least two values")
    if any(v <= 0 for v in values):
        raise RunError("sweep values must be positive")
    return values


def _variant(cfg, axis, value) -> ExperimentConfig:
    c = copy.deepcopy(cfg)
    if axis == "grid":
        c.path["grids"] = [int(value)]
    elif axis == "epsilon":
        c.variation["epsilons"] = [float(value)]
    else:
        params = dict(c.system.parameters)
        params["dim"] = int(value)
        c.system = SystemSpec(c.system.kind, params, c.system.seed)
    return c


def _check_axis(cfg, axis):
    if axis == "grid" and cfg.experiment not in STATIONARITY_KINDS + ("isoperimetric",):
        raise RunError(f"grid sweeps need a grid-ladder experiment, not {cfg.experiment}")
    if axis == "epsilon" and cfg.experiment not in STATIONARITY_KINDS:
        raise RunError(f"epsilon sweeps need a stationarity experiment, not {cfg.experiment}")
    if axis == "dimension" and "dim" not in cfg.system.resolved():
        raise RunError(f"system {cfg.system.kind!r} has no 'dim' parameter to sweep")


def cauchy_order(values, series) -> float:
    """Refinement order from successive differences |x_k - x_{k+1}| ~ n_k^-p."""
    x = np.asarray(series, dtype=float)
    diffs = np.abs(np.diff(x))
    return fitted_order(np.asarray(values[:-1], dtype=float), diffs) if len(diffs) >= 2 else float("nan")


def _sweep_outcomes(axis, values, table, subs, cfg):
    th = cfg.tolerances
    if axis == "grid":
        key = next((k for k in table[0] if k.endswith("T")), None)
        if key is None:
            key = next(iter(table[0]))
        order = cauchy_order(values, [row[key] for row in table])
        ok = math.isfinite(order) and abs(order - th["order"]) <= SWEEP_ORDER_BAND
        return {"refinement_metric": key, "refinement_order": order, "refinement": "pass" if ok else "fail"}
    if axis == "epsilon":
        keys = sorted(k for k in table[0] if "baseline_slope" in k)
        worst = 0.0
        for k in keys:
            ys = np.array([row[k] for row in table], dtype=float)
            worst = max(worst, float(np.ptp(ys) / max(np.max(np.abs(ys)), 1e-300)))
        ok = bool(keys) and worst <= th["convergence_tol"]
        return {"linear_response_spread": worst, "linear_response": "stable" if ok else "unstable"}
    return {"sub_runs": "all met" if all(sub["status"] == "met" for sub in subs) else "some diverged"}


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config, default_config), args)
    axis = args.axis
    _check_axis(cfg, axis)
    values = _parse_values(axis, args.values)
    out = _output_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    _manifest(out, "incomplete", note="sweep in progress")
    threads = _threads(args)
    check_sub = axis != "grid"
    subs, table, codes = [], [], []
    for v in values:
        sub_dir = f"{axis}_{v}"
        code, report, result = execute(_variant(cfg, axis, v), out / sub_dir, threads, check_sub)
        codes.append(code)
        subs.append({"value": v, "directory": sub_dir, "status": report["status"], "outcomes": report["outcomes"]})
        table.append(dict(result.metrics))
    orders = {}
    if axis == "grid":
        for key in table[0]:
            series = [row[key] for row in table]
            orders[key] = cauchy_order(values, series) if key.endswith("T") else fitted_order(values, series)
    outcomes = _sweep_outcomes(axis, values, table, subs, cfg)
    ok = all(c == EXIT_OK for c in codes)
    if "refinement" in outcomes:
        ok = ok and outcomes["refinement"] == "pass"
    if "linear_response" in outcomes:
        ok = ok and outcomes["linear_response"] == "stable"
    combined = {"fermatlab_version": __version__, "axis": axis, "values": values, "config": _resolved_config(cfg),
                "sub_reports": subs, "table": table, "fitted_orders": orders, "outcomes": outcomes,
                "status": "met" if ok else "diverged"}
    _write(out / "sweep.json", _dump_json(combined))
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        keys = sorted(table[0])
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([axis] + keys)
        for v, row in zip(values, table):
            writer.writerow([v] + [repr(float(row[k])) for k in keys])
    series = {k: [row[k] for row in table] for k in table[0] if "slope" in k or k.endswith("spread")}
    files = ["sweep.json", "sweep.csv"]
    if series:
        sweep_figure(values, series, out / "sweep.svg", axis, f"{cfg.experiment}: {axis} sweep")
        files.append("sweep.svg")
    _manifest(out, "complete", files)
    for key, value in sorted(outcomes.items()):
        print(f"{key}: {value}")
    print(f"status: {combined['status']}")
    return EXIT_OK if ok else EXIT_DIVERGED


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermatlab", description="Stationarity experiments for time functionals")
    parser.add_argument("--version", action="version", version=f"fermatlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON experiment config")
        p.add_argument("--output-dir", help="override the config's output_dir")
        p.add_argument("--seed", type=int, help="override the variation seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for variation cells (default: $FERMATLAB_THREADS or 1)")

    common(sub.add_parser("run", help="run one experiment"))
    sub.add_parser("list", help="list experiment kinds with their default configs")
    sweep = sub.add_parser("sweep", help="repeat an experiment along one axis")
    common(sweep)
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "list": cmd_list, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except (RunError, FermatError) as exc:
        print(f"fermatlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
