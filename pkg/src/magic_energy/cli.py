"""Command-line front end: map, simulate, calibrate, export-spice, report."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from .calibration import fit_table1
from .device import CalibrationError, calibrate_k, default_params, load_params, save_params
from .program import emit_simpler, map_to_row, parse_netlist, parse_simpler
from .report import (DC_AVERAGES, PATTERNS, PULSE_AVERAGES, RunSummary, input_bits,
                     render_comparison, render_csv, summarize)
from .simulator import SolverError, run_program
from .spice import write_deck
from .waveform import CATEGORIES, build_schedule

log = logging.getLogger("magic_energy")
PARAMS_ENV = "MAGIC_ENERGY_PARAMS"
EXAMPLES = ("half_adder.json", "half_adder.net")


class CliError(Exception):
    pass


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(f"file not found: {path}") from None


def _params(path):
    path = path or os.environ.get(PARAMS_ENV)
    if not path:
        return default_params()
    if not Path(path).is_file():
        raise CliError(f"file not found: {path}")
    log.info("parameters from %s", path)
    return load_params(path)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _fj(x: float) -> str:
    return f"{x * 1e15:.4f} fJ"


# -- subcommands -----------------------------------------------------------

def cmd_map(a) -> int:
    n = parse_netlist(_read(a.netlist))
    p = map_to_row(n, a.row_size)
    _write(a.output, emit_simpler(p, a.benchmark or Path(a.netlist).stem))
    log.info("mapped %d gates onto %d cells in %d cycles", len(n.gates), p.row_size, len(p.cycles))
    return 0


def cmd_simulate(a) -> int:
    p = parse_simpler(_read(a.mapping))
    params = _params(a.params)
    bits = input_bits(p, a.inputs)
    log.info("simulating %s with %s", a.mapping, a.inputs)
    res = run_program(p, bits, params, record_trace=bool(a.trace))
    out = ["inputs: " + " ".join(f"{k}={v}" for k, v in bits.items()),
           "read-outs: " + " ".join(f"{k}={v}" for k, v in res.readouts.items()),
           "",
           "energy per category (memristors):"]
    totals = res.report.category_totals
    out += [f"  {c:<11} {_fj(totals[c])}" for c in CATEGORIES]
    out += [f"  {'total':<11} {_fj(res.report.device_total)}", "", res.report.format_table()]
    sys.stdout.write("\n".join(out))
    if a.trace:
        _write(a.trace, res.trace.to_csv(a.decimate))
    if a.json:
        _write(a.json, res.report.to_json())
    if a.summary:
        label = PATTERNS.get(a.inputs, a.inputs)
        s = summarize(Path(a.mapping).stem, p, {label: res.report})
        _write(a.summary, s.to_json())
    return 0


def cmd_calibrate(a) -> int:
    base = _params(a.params)
    if a.target_table1:
        log.info("fitting the device parameters to the table energies")
        fit = fit_table1(base)
        sys.stdout.write(fit.format())
        p, header = fit.params, "Fitted to the pulse-mode NOR/NOT/write energy table."
    else:
        if a.voltage is None or a.switch_time is None:
            raise CliError("calibrate needs --target-table1 or both --voltage and --switch-time")
        p = calibrate_k(base, a.voltage, a.switch_time, a.direction)
        header = f"k_{a.direction} from a {a.switch_time:g} s switch at {a.voltage:g} V"
        sys.stdout.write(f"k_{a.direction} = {getattr(p, 'k_' + a.direction):.6e}\n")
    save_params(p, a.output, header)
    sys.stdout.write(f"wrote {a.output}\n")
    return 0


def cmd_export_spice(a) -> int:
    p = parse_simpler(_read(a.mapping))
    params = _params(a.params)
    schedule = build_schedule(p, input_bits(p, a.inputs))
    paths = write_deck(a.output, p, schedule, params, title=f"{Path(a.mapping).stem} {a.inputs}")
    for path in paths:
        sys.stdout.write(f"wrote {path}\n")
    return 0


def _simulate_patterns(path, params, model) -> RunSummary:
    p = parse_simpler(_read(path))

    def one(spec):
        log.info("%s: %s", path, spec)
        return PATTERNS[spec], run_program(p, input_bits(p, spec), params).report

    # each run owns its state; the inputs are immutable
    with ThreadPoolExecutor(max_workers=len(PATTERNS)) as pool:
        reports = dict(pool.map(one, PATTERNS))
    return summarize(Path(path).stem, p, reports, model)


def cmd_report(a) -> int:
    model = DC_AVERAGES if a.dc_averages else PULSE_AVERAGES
    params = None
    summaries = []
    for path in a.files:
        doc = json.loads(_read(path))
        if "patterns" in doc:
            summaries.append(RunSummary.from_dict(doc))
            continue
        params = params or _params(a.params)
        summaries.append(_simulate_patterns(path, params, model))
    sys.stdout.write(render_comparison(summaries))
    if a.csv:
        _write(a.csv, render_csv(summaries))
    return 0


def cmd_examples(a) -> int:
    target = Path(a.directory)
    target.mkdir(parents=True, exist_ok=True)
    for name in EXAMPLES:
        text = resources.files("magic_energy").joinpath("data", name).read_text(encoding="utf-8")
        (target / name).write_text(text, encoding="utf-8")
        sys.stdout.write(f"wrote {target / name}\n")
    return 0


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magic-energy",
                                 description="Fine-grained energy estimation for MAGIC "
                                             "NOR/NOT programs on one crossbar row.")
    ap.add_argument("--verbose", "-v", action="store_true",
                    help="timestamped progress on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("map", help="map a NOT/NOR netlist onto one row")
    m.add_argument("netlist")
    m.add_argument("--row-size", type=int)
    m.add_argument("--benchmark", help="name written to the mapping (default: file stem)")
    m.add_argument("-o", "--output", help="mapping file (default: stdout)")
    m.set_defaults(func=cmd_map)

    s = sub.add_parser("simulate", help="simulate a mapping and report energy")
    s.add_argument("mapping")
    s.add_argument("--inputs", default="all0", help="all0 (default), all1, alt or a bit string")
    s.add_argument("--params", help=f"VTEAM params file (default: ${PARAMS_ENV} or built-in)")
    s.add_argument("--trace", help="write the waveform trace CSV here")
    s.add_argument("--decimate", type=int, default=1, help="keep every k-th trace sample")
    s.add_argument("--json", help="write the full energy report as JSON")
    s.add_argument("--summary", help="write a run summary for `report`")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="fit or calibrate device parameters")
    c.add_argument("--target-table1", action="store_true",
                   help="fit to the NOR/NOT/write energy table")
    c.add_argument("--voltage", type=float)
    c.add_argument("--switch-time", type=float)
    c.add_argument("--direction", choices=("set", "reset"), default="set")
    c.add_argument("--params", help="starting parameters")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("export-spice", help="write a SPICE deck with PWL sidecars")
    e.add_argument("mapping")
    e.add_argument("--inputs", required=True)
    e.add_argument("--params")
    e.add_argument("-o", "--output", required=True, help="deck path (.sp)")
    e.set_defaults(func=cmd_export_spice)

    r = sub.add_parser("report", help="coarse vs fine-grained comparison table")
    r.add_argument("files", nargs="*", help="run summaries or mapping files")
    r.add_argument("--params")
    r.add_argument("--dc-averages", action="store_true",
                   help="coarse estimate from the DC-mode averages")
    r.add_argument("--csv", help="also write the table as CSV")
    r.set_defaults(func=cmd_report)

    x = sub.add_parser("examples", help="copy the shipped half adder files")
    x.add_argument("directory")
    x.set_defaults(func=cmd_examples)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = None
    if a.verbose:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
    try:
        return a.func(a)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, SolverError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if handler is not None:
            log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
