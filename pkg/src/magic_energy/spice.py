"""SPICE deck export for a built schedule.

The deck instantiates the row as column sources, voltage-controlled selector
switches, 0 V current-sense sources and one memristor subcircuit per cell.
The memristor body (``vteam_memristor``) comes from the external tool's model
library; the deck only passes parameters. Column, gate and row-switch drives
live in ``.pwl`` sidecar files referenced by relative path.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Sequence

from .device import VteamParams
from .program import ExecutionProgram
from .simulator import CircuitConfig
from .waveform import (CycleDrive, PwlWaveform, Timing, VoltageLevels, column_waveform,
                       gate_waveform, row_switch_waveform, schedule_duration)

MODEL_NAME = "vteam_memristor"
MODEL_PORTS = "p n"
MODEL_PARAMS = ("x0", "v_t_set", "v_t_reset", "k_set", "k_reset", "alpha_set",
                "alpha_reset", "r_on", "r_off")


def _num(v: float) -> str:
    return f"{v:.5e}"


def emit_pwl_file(w: PwlWaveform) -> str:
    return "".join(f"{t:.9e} {v:.9e}\n" for t, v in w.breakpoints)


def pwl_files(schedule: Sequence[CycleDrive], levels: VoltageLevels | None = None,
              timing: Timing | None = None, stem: str = "") -> dict[str, str]:
    """Sidecar file name -> contents, one per column, gate line and the row switch."""
    levels = levels or VoltageLevels()
    timing = timing or Timing()
    if not schedule:
        return {}
    n = schedule[0].n_cells
    prefix = f"{stem}_" if stem else ""
    files = {}
    for k in range(n):
        files[f"{prefix}col{k}.pwl"] = emit_pwl_file(column_waveform(schedule, k))
    for k in range(n):
        files[f"{prefix}gate{k}.pwl"] = emit_pwl_file(gate_waveform(schedule, k, levels, timing))
    files[f"{prefix}row_ctl.pwl"] = emit_pwl_file(row_switch_waveform(schedule, levels, timing))
    return files


def emit_deck(p: ExecutionProgram, schedule: Sequence[CycleDrive], params: VteamParams,
              config: CircuitConfig | None = None, levels: VoltageLevels | None = None,
              title: str = "MAGIC single-row crossbar", stem: str = "") -> str:
    config = config or CircuitConfig()
    levels = levels or VoltageLevels()
    n = p.row_size
    duration = schedule_duration(schedule)
    prefix = f"{stem}_" if stem else ""
    vt = 0.5 * (levels.v_gate_on + levels.v_gate_off)
    out = [f"* {title}",
           f"* row_size={n} cycles={len(schedule)} duration={_num(duration)} s",
           "*",
           "* VTEAM parameters"]
    out += [f"*   {f.name} = {_num(getattr(params, f.name))}" for f in fields(params)]
    out.append(".param " + " ".join(f"{f.name}={_num(getattr(params, f.name))}"
                                    for f in fields(params)))
    out.append(f".param r_sel_on={_num(config.r_selector_on)} "
               f"r_sel_off={_num(config.r_selector_off)} r_row_sw={_num(config.r_row_switch)}")
    out += ["*",
            f"* memristor: {MODEL_NAME} ({MODEL_PORTS}) with parameters "
            + ", ".join(MODEL_PARAMS),
            "* p is the column side; x0 is the initial normalized state (1 = LRS).",
            "* The subcircuit body is supplied by the simulator's model library.",
            f".model selsw sw vt={_num(vt)} vh=0 ron={{r_sel_on}} roff={{r_sel_off}}",
            f".model rowsw sw vt={_num(vt)} vh=0 ron={{r_row_sw}} roff={{r_sel_off}}",
            "*",
            "* columns"]
    for k in range(n):
        out.append(f"VC{k} col{k} 0 PWL FILE=\"{prefix}col{k}.pwl\"")
    out += ["*", "* selector gates"]
    for k in range(n):
        out.append(f"VG{k} gate{k} 0 PWL FILE=\"{prefix}gate{k}.pwl\"")
        out.append(f"S{k} col{k} mid{k} gate{k} 0 selsw")
    out += ["*", "* memristors (current sensed through VS<k>)"]
    for k in range(n):
        out.append(f"VS{k} mid{k} sense{k} 0")
        pars = " ".join(["x0=0"] + [f"{name}={{{name}}}" for name in MODEL_PARAMS[1:]])
        out.append(f"X{k} sense{k} row {MODEL_NAME} {pars}")
    out += ["*", "* row ground switch",
            f"VROW rowctl 0 PWL FILE=\"{prefix}row_ctl.pwl\"",
            "SROW row 0 rowctl 0 rowsw",
            "*",
            f".tran {_num(config.dt)} {_num(duration)}",
            "*", "* device energy per cycle"]
    for c in schedule:
        for k in range(n):
            out.append(f".meas tran e_{c.label}_{k} INTEG par('(v(sense{k})-v(row))*i(VS{k})') "
                       f"FROM={_num(c.start)} TO={_num(c.end)}")
    out += ["*", "* device energy over the run"]
    for k in range(n):
        out.append(f".meas tran e_dev{k} INTEG par('(v(sense{k})-v(row))*i(VS{k})') "
                   f"FROM={_num(0.0)} TO={_num(duration)}")
    out.append(".end")
    return "\n".join(out) + "\n"


def write_deck(path, p: ExecutionProgram, schedule: Sequence[CycleDrive], params: VteamParams,
               config: CircuitConfig | None = None, levels: VoltageLevels | None = None,
               timing: Timing | None = None, title: str = "MAGIC single-row crossbar"
               ) -> list[Path]:
    """Write ``<path>`` (.sp) plus its .pwl sidecars next to it; returns all paths."""
    path = Path(path)
    if path.suffix != ".sp":
        path = path.with_suffix(".sp")
    stem = path.stem
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_deck(p, schedule, params, config, levels, title, stem=stem),
                    encoding="utf-8")
    written = [path]
    for name, text in pwl_files(schedule, levels, timing, stem=stem).items():
        target = path.parent / name
        target.write_text(text, encoding="utf-8")
        written.append(target)
    return written
