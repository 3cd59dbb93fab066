"""Command-line front end.

Commands: simulate, sweep, efficiency, dump-table, print-defaults.
Exit codes: 0 success, 2 config or usage error, 3 numeric failure,
4 partial sweep failure.  ``MATRIXSRC_VERBOSE`` (0-2) sets log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .config import apply_values, format_config, load_config, run_id, to_flat
from .errors import ConfigError, ContractError, NumericalError
from .modulation import GATE_NAMES, table_rows
from .simulation import SimConfig, run_simulation

log = logging.getLogger("matrixsrc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SWEEP = 0, 2, 3, 4

WAVEFORM_HEADER = ["t", "va", "vb", "vc", "sector", "pwm_a", "pwm_b", "pwm_c", *GATE_NAMES,
                   "v_mx", "i_L", "v_C", "i_batt", "p_out", "f_hf"]
EVENTS_HEADER = ["t", "kind", "device", "zvs"]
TABLE_HEADER = ["sector", "pwm_a", "pwm_b", "pwm_c", *GATE_NAMES]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# writers

def write_waveform(trace, path) -> None:
    n = len(trace.t)
    cols = [trace.t[:, None], trace.v, trace.sector[:, None], trace.pwm, trace.gates,
            trace.v_mx[:, None], trace.i_L[:, None], trace.v_C[:, None],
            trace.i_batt[:, None], trace.p_out[:, None], trace.f_hf[:, None]]
    fmt = ["%.17g"] * 4 + ["%d"] * 16 + ["%.17g"] * 6
    with open(path, "w", newline="") as fh:
        fh.write(",".join(WAVEFORM_HEADER) + "\n")
        if n:
            data = np.hstack([np.asarray(c, dtype=float).reshape(n, -1) for c in cols])
            np.savetxt(fh, data, fmt=fmt, delimiter=",")


def write_events(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for e in trace.events:
            zvs = "" if e.zvs is None or not e.hf else int(e.zvs)
            w.writerow([repr(float(e.t)), e.kind, e.device, zvs])


GNUPLOT = """\
# gnuplot -p {name}
set datafile separator ","
set key autotitle columnhead
set xlabel "t [s]"
set multiplot layout 3,1
plot "waveform.csv" using "t":"v_mx" with lines, "" using "t":"v_C" with lines
plot "waveform.csv" using "t":"i_L" with lines
plot "waveform.csv" using "t":"p_out" with lines
unset multiplot
"""


def table_text(fmt: str = "text") -> str:
    rows = table_rows()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for sector, select, gates in rows:
            w.writerow([sector, *(int(b) for b in select), *gates])
        return buf.getvalue()
    lines = ["sector | pwm a b c | " + ", ".join(GATE_NAMES)]
    for sector, select, gates in rows:
        bits = " ".join(str(int(b)) for b in select)
        lines.append(f"{sector:>6} |     {bits} | " + ", ".join(gates))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    cfg = load_config(args.config) if args.config else SimConfig()
    if args.set:
        cfg = apply_values(cfg, _parse_assignments(args.set, single=True))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    manifest = {"run_id": run_id(cfg), "tool": "matrixsrc", "version": __version__,
                "started": started, "config": to_flat(cfg) | {"dt": cfg.step}}
    t0 = time.perf_counter()
    try:
        trace = run_simulation(cfg)
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if exc.partial_trace is not None:
            write_waveform(exc.partial_trace, out / "waveform.csv")
            write_events(exc.partial_trace, out / "events.csv")
        manifest["status"] = "numeric_failure"
        manifest["error"] = str(exc)
        (out / "manifest.json").write_text(_dump_json(manifest))
        return EXIT_NUMERIC
    manifest["runtime_s"] = round(time.perf_counter() - t0, 3)
    manifest["status"] = "ok"
    write_waveform(trace, out / "waveform.csv")
    write_events(trace, out / "events.csv")
    (out / "analysis.json").write_text(_dump_json(analysis.summarize(trace)))
    (out / "manifest.json").write_text(_dump_json(manifest))
    if args.gnuplot:
        (out / "plot.gp").write_text(GNUPLOT.format(name="plot.gp"))
    log.info("wrote %s (run %s)", out, manifest["run_id"])
    return EXIT_OK


def _parse_values(text: str) -> list:
    """``a,b,c`` or ``start:stop:count`` (inclusive linspace)."""
    if text.count(":") == 2 and "," not in text:
        a, b, n = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    out = []
    for item in text.split(","):
        item = item.strip()
        if item.lower() in ("true", "false"):
            out.append(item.lower() == "true")
            continue
        try:
            num = float(item)
            out.append(int(num) if item.lstrip("+-").isdigit() else num)
        except ValueError:
            out.append(item)
    return out


def _parse_assignments(items, single=False) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError([f"expected path=values, got {item!r}"])
        path, values = item.split("=", 1)
        vals = _parse_values(values)
        if single:
            if len(vals) != 1:
                raise ConfigError([f"{path.strip()} takes a single value here"])
            out[path.strip()] = vals[0]
        else:
            out[path.strip()] = vals
    return out


def _sweep_one(job):
    index, base_flat, values = job
    row = {"index": index, **values, "status": "ok", "error": ""}
    try:
        cfg = apply_values(SimConfig(), {**base_flat, **values})
        trace = run_simulation(cfg)
        s = analysis.summarize(trace)
        row.update({
            "run_id": run_id(cfg),
            "zvs_fraction": s["zvs_summary"]["zvs_fraction"],
            "zvs_events": s["zvs_summary"]["zvs_events"],
            "total_events": s["zvs_summary"]["total_events"],
            "mean_battery_power": s["power_balance"]["mean_battery_power"],
            "e_in": s["power_balance"]["e_in"],
            "e_out": s["power_balance"]["e_out"],
            "relative_residual": s["power_balance"]["relative_residual"],
            "mean_hf_freq": float(np.mean(trace.half_cycles["freq"])),
        })
    except ConfigError as exc:
        row.update(status="config_error", error=str(exc))
    except (NumericalError, ContractError) as exc:
        row.update(status="numeric_failure", error=str(exc))
    return row


SWEEP_COLUMNS = ["run_id", "status", "zvs_fraction", "zvs_events", "total_events",
                 "mean_battery_power", "e_in", "e_out", "relative_residual", "mean_hf_freq",
                 "error"]


def run_sweep(base: SimConfig, grid: dict, parallelism: int = 1) -> list[dict]:
    """Summary rows of the cross product of ``grid``, in grid order."""
    base_flat = to_flat(base)
    paths = list(grid)
    jobs = [(i, base_flat, dict(zip(paths, combo)))
            for i, combo in enumerate(itertools.product(*(grid[p] for p in paths)))]
    if parallelism <= 1 or len(jobs) <= 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    return sorted(rows, key=lambda r: r["index"])


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_sweep(args) -> int:
    base = load_config(args.config) if args.config else SimConfig()
    grid = _parse_assignments(args.grid)
    if not grid:
        raise ConfigError(["sweep needs at least one --grid path=values"])
    apply_values(base, {p: v[0] for p, v in grid.items()})  # unknown paths fail early
    rows = run_sweep(base, grid, args.parallel)
    header = ["index", *grid, *SWEEP_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_format_cell(row.get(h, "")) for h in header])
    if args.output:
        Path(args.output).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        log.error("run %d failed: %s", r["index"], r["error"])
    return EXIT_SWEEP if failed else EXIT_OK


def _positive(name):
    def conv(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not value > 0 and not (name == "p_loss_tx" and value == 0):
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return value
    return conv


def _efficiency_table(reports) -> str:
    cols = ["r_ds", "i_pri_rms", "p_loss_pri", "p_loss_sec", "p_loss_tx", "efficiency"]
    lines = ["  ".join(f"{c:>11}" for c in cols)]
    for r in reports:
        d = r.to_dict()
        lines.append("  ".join(f"{d[c]:>11.5g}" for c in cols))
    return "\n".join(lines) + "\n"


def cmd_efficiency(args) -> int:
    r_values = _parse_values(args.sweep_r_ds) if args.sweep_r_ds else [args.r_ds]
    reports = []
    for r in r_values:
        if not float(r) > 0:
            raise ContractError("r_ds values must be positive")
        reports.append(analysis.conduction_loss_model(args.p_batt, float(r), args.v_pri,
                                                      args.v_sec, args.p_loss_tx))
    payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
    if args.format in ("json", "both"):
        sys.stdout.write(_dump_json(payload))
    if args.format in ("text", "both"):
        sys.stdout.write(_efficiency_table(reports))
    return EXIT_OK


def cmd_dump_table(args) -> int:
    sys.stdout.write(table_text(args.format))
    return EXIT_OK


def cmd_print_defaults(args) -> int:
    sys.stdout.write(format_config(SimConfig()))
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matrixsrc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    sub = p.add_subparsers(dest="command")

    s = sub.add_parser("simulate", help="run one simulation and write its outputs")
    s.add_argument("config", nargs="?", help="flat key config file (defaults if omitted)")
    s.add_argument("-o", "--output", default="run", help="output directory")
    s.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override one config key (repeatable)")
    s.add_argument("--gnuplot", action="store_true", help="also write plot.gp")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run the cross product of parameter grids")
    s.add_argument("config", nargs="?", help="base config file (defaults if omitted)")
    s.add_argument("--grid", action="append", default=[], metavar="PATH=VALUES",
                   help="parameter grid, 'a,b,c' or 'start:stop:count' (repeatable)")
    s.add_argument("-j", "--parallel", type=int, default=1, help="worker processes")
    s.add_argument("-o", "--output", help="summary CSV path (stdout if omitted)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("efficiency", help="analytic conduction-loss efficiency")
    s.add_argument("--p_batt", "--p-batt", type=_positive("p_batt"), default=13000.0)
    s.add_argument("--r_ds", "--r-ds", type=_positive("r_ds"), default=0.03)
    s.add_argument("--v_pri", "--v-pri", type=_positive("v_pri"), default=447.75)
    s.add_argument("--v_sec", "--v-sec", type=_positive("v_sec"), default=375.0)
    s.add_argument("--p_loss_tx", "--p-loss-tx", type=_positive("p_loss_tx"), default=90.0)
    s.add_argument("--sweep-r-ds", "--sweep_r_ds", metavar="VALUES",
                   help="list or start:stop:count of r_ds values, one row each")
    s.add_argument("--format", choices=("both", "json", "text"), default="both")
    s.set_defaults(func=cmd_efficiency)

    s = sub.add_parser("dump-table", help="print the gate switching table")
    s.add_argument("--format", choices=("text", "csv"), default="text")
    s.set_defaults(func=cmd_dump_table)

    s = sub.add_parser("print-defaults", help="print the default config")
    s.set_defaults(func=cmd_print_defaults)
    return p


def _setup_logging() -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(
        int(os.environ.get("MATRIXSRC_VERBOSE", "0") or 0), logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        return cmd_print_defaults(args)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
