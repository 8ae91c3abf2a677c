"""Per-cycle drive schedules: piecewise-linear column voltages, selector
states and the row ground switch for every cycle of a program."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .program import ExecutionProgram, Init, MicroOp, check

INPUT_LOAD = "input_load"
INIT = "init"
EXEC = "exec"
READ = "read"
CATEGORIES = (INPUT_LOAD, INIT, EXEC, READ)


@dataclass(frozen=True)
class VoltageLevels:
    v_input_write: float = 2.0
    v_init: float = 2.0
    v_exec: float = 1.0
    v_read: float = 0.2
    v_gate_on: float = 2.0
    v_gate_off: float = 0.0
    v_reset_write: float = -1.0

    def __post_init__(self):
        if not self.v_read < abs(self.v_reset_write) <= self.v_exec < self.v_init:
            raise ValueError("need v_read < |v_reset_write| <= v_exec < v_init")


@dataclass(frozen=True)
class Timing:
    pulse_width: float = 1.3e-9
    edge_time: float = 1e-12
    settle_gap: float = 1e-10

    def __post_init__(self):
        if self.edge_time <= 0:
            raise ValueError("edge_time must be positive")
        if self.pulse_width <= 2 * self.edge_time:
            raise ValueError("pulse_width must exceed twice the edge time")
        if self.settle_gap < 0:
            raise ValueError("settle_gap must be non-negative")


@dataclass(frozen=True)
class PwlWaveform:
    breakpoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        bp = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if any(b[0] >= a[0] for a, b in zip(bp[1:], bp)):
            raise ValueError("PWL breakpoint times must be strictly increasing")

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.breakpoints])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints])

    def __call__(self, t):
        return pwl_value(self, t)


def pwl_value(w: PwlWaveform, t):
    """Linear interpolation, held constant outside the breakpoint range."""
    if not w.breakpoints:
        return 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else 0.0
    out = np.interp(t, w.times, w.values)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CycleDrive:
    label: str
    category: str
    start: float
    duration: float
    column_waveforms: tuple[PwlWaveform, ...]
    gates_on: frozenset[int]
    row_grounded: bool
    op: MicroOp | None = None

    @property
    def n_cells(self) -> int:
        return len(self.column_waveforms)

    @property
    def end(self) -> float:
        return self.start + self.duration

    def breakpoint_times(self) -> np.ndarray:
        """Sorted union of the cycle's breakpoints, including its end."""
        ts = set()
        for w in self.column_waveforms:
            ts.update(t for t, _ in w.breakpoints)
        # rounding can put a breakpoint a hair away from the cycle end; merge those
        tol = 1e-15
        kept = [self.start]
        for t in sorted(ts):
            if kept[-1] + tol < t < self.end - tol:
                kept.append(t)
        kept.append(self.end)
        return np.array(kept)


def _pulse_times(start: float, timing: Timing) -> list[float]:
    pw, edge = timing.pulse_width, timing.edge_time
    ts = [start, start + edge, start + pw - edge, start + pw]
    if timing.settle_gap > 0:
        ts.append(start + pw + timing.settle_gap)
    return ts


def trapezoid(level: float, start: float, timing: Timing) -> PwlWaveform:
    ts = _pulse_times(start, timing)
    vs = [0.0, level, level, 0.0, 0.0][:len(ts)]
    return PwlWaveform(tuple(zip(ts, vs)))


def make_drive(label: str, category: str, levels_by_cell: Mapping[int, float], n_cells: int,
               start: float, timing: Timing, row_grounded: bool,
               gates_on=None, op: MicroOp | None = None) -> CycleDrive:
    """One cycle: trapezoidal pulses on ``levels_by_cell``, 0 V elsewhere."""
    waves = tuple(trapezoid(levels_by_cell.get(k, 0.0), start, timing) for k in range(n_cells))
    gates = frozenset(levels_by_cell if gates_on is None else gates_on)
    return CycleDrive(label, category, start, timing.pulse_width + timing.settle_gap,
                      waves, gates, row_grounded, op)


def op_drive(label: str, op: MicroOp, n_cells: int, levels: VoltageLevels, timing: Timing,
             start: float = 0.0) -> CycleDrive:
    if isinstance(op, Init):
        return make_drive(label, INIT, {c: levels.v_init for c in op.cells}, n_cells, start,
                          timing, row_grounded=True, op=op)
    drive = {c: levels.v_exec for c in op.inputs}
    drive[op.output] = 0.0
    return make_drive(label, EXEC, drive, n_cells, start, timing, row_grounded=False, op=op)


def build_schedule(p: ExecutionProgram, input_bits: Mapping[str, int],
                   levels: VoltageLevels | None = None, timing: Timing | None = None,
                   read_all: bool = True) -> list[CycleDrive]:
    """Drive schedule for one run of ``p``.

    Order: an optional input-load cycle (only when some input bit is 1), one
    cycle per program op, then a read cycle. ``read_all=False`` reads only the
    declared output cells.
    """
    levels = levels or VoltageLevels()
    timing = timing or Timing()
    missing = [name for name in p.inputs if name not in input_bits]
    if missing:
        raise KeyError(f"no input bit for {', '.join(missing)}")
    check(p)
    n = p.row_size
    cycles = []
    t = 0.0
    ones = {cell: levels.v_input_write for name, cell in p.inputs.items() if input_bits[name]}
    if ones:
        cycles.append(make_drive("IN", INPUT_LOAD, ones, n, t, timing, row_grounded=True))
        t = cycles[-1].end
    for label, op in p.cycles:
        cycles.append(op_drive(label, op, n, levels, timing, t))
        t = cycles[-1].end
    read_cells = range(n) if read_all else sorted(set(p.outputs.values()))
    cycles.append(make_drive("R", READ, {c: levels.v_read for c in read_cells}, n, t, timing,
                             row_grounded=True))
    return cycles


def schedule_duration(cycles: Sequence[CycleDrive]) -> float:
    return float(sum(c.duration for c in cycles))


def column_waveform(cycles: Sequence[CycleDrive], cell: int) -> PwlWaveform:
    """Stitch one column's per-cycle waveforms into a single PWL over the run."""
    points: list[tuple[float, float]] = []
    for c in cycles:
        for t, v in c.column_waveforms[cell].breakpoints:
            if points and t <= points[-1][0]:
                if v != points[-1][1]:
                    raise ValueError(f"discontinuous drive on cell {cell} at t={t}")
                continue
            points.append((t, v))
    return PwlWaveform(tuple(points))


def gate_waveform(cycles: Sequence[CycleDrive], cell: int, levels: VoltageLevels,
                  timing: Timing) -> PwlWaveform:
    """Selector gate drive: ``v_gate_on`` for the cycles selecting ``cell``."""
    points: list[tuple[float, float]] = []
    for c in cycles:
        level = levels.v_gate_on if cell in c.gates_on else levels.v_gate_off
        points += _level_span(c, level, timing, points)
    return PwlWaveform(tuple(points))


def row_switch_waveform(cycles: Sequence[CycleDrive], levels: VoltageLevels,
                        timing: Timing) -> PwlWaveform:
    """Row-to-ground switch control: on while the row is grounded."""
    points: list[tuple[float, float]] = []
    for c in cycles:
        level = levels.v_gate_on if c.row_grounded else levels.v_gate_off
        points += _level_span(c, level, timing, points)
    return PwlWaveform(tuple(points))


def _level_span(c: CycleDrive, level: float, timing: Timing, prev) -> list:
    # held for the whole cycle; transitions take one edge at the cycle start
    last = prev[-1][1] if prev else 0.0
    if last == level:
        return [(c.start, level)] if not prev else []
    return [(c.start, last), (c.start + timing.edge_time, level)]


def schedule_csv(cycles: Sequence[CycleDrive]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cycle_label", "category", "cell", "breakpoint_t_s", "v_volts"])
    for c in cycles:
        for cell, wave in enumerate(c.column_waveforms):
            for t, v in wave.breakpoints:
                w.writerow([c.label, c.category, cell, f"{t:.6e}", f"{v:.6e}"])
    return buf.getvalue()
