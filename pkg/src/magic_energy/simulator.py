"""Transient simulation of a single crossbar row.

Each cell is a column source feeding a selector switch, then the memristor,
then the shared row node. During writes, initialization and reads the row node
is tied to ground through a switch; during MAGIC execution it floats and its
voltage is found from KCL at every integration stage.

Device states advance with a coupled fixed-step RK4 (the row voltage is
re-solved for each stage) and energies are accumulated with the trapezoidal
rule on the same grid.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from numba import njit

from .device import VteamParams, DeviceState, _rate, _clamp01
from .program import ExecutionProgram
from .waveform import (CATEGORIES, CycleDrive, Timing, VoltageLevels, build_schedule,
                       pwl_value)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CircuitConfig:
    r_selector_on: float = 50.0
    r_selector_off: float = 10e9
    r_row_switch: float = 10.0
    dt: float = 0.5e-12
    kcl_abs_tol: float = 1e-12
    kcl_rel_tol: float = 1e-9
    max_newton_iters: int = 50
    # every PWL interval (notably the 1 ps edges) gets at least this many steps
    min_interval_steps: int = 16
    # a step is split when a device's resistance would change by more than this fraction
    substep_tol: float = 0.05
    max_substeps: int = 1000

    def __post_init__(self):
        if self.dt <= 0 or self.kcl_abs_tol <= 0 or self.kcl_rel_tol <= 0:
            raise ValueError("dt and KCL tolerances must be positive")
        if self.substep_tol <= 0 or self.max_substeps < 1 or self.min_interval_steps < 1:
            raise ValueError("substep_tol must be positive; step counts at least 1")
        if min(self.r_selector_on, self.r_selector_off, self.r_row_switch) <= 0:
            raise ValueError("switch resistances must be positive")

    def check_timing(self, timing: Timing) -> None:
        if self.dt > timing.pulse_width / 100:
            raise ValueError(f"dt={self.dt:g} s is coarser than pulse_width/100")


@dataclass
class CrossbarState:
    x: np.ndarray
    v_row: float = 0.0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        if np.any(self.x < 0) or np.any(self.x > 1):
            raise ValueError("device states must lie in [0, 1]")

    @classmethod
    def hrs(cls, n: int) -> "CrossbarState":
        return cls(np.zeros(n))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def devices(self) -> list[DeviceState]:
        return [DeviceState(float(v)) for v in self.x]

    def copy(self) -> "CrossbarState":
        return CrossbarState(self.x.copy(), self.v_row)


# -- compiled core ---------------------------------------------------------

@njit(cache=True)
def _solve_row(vc, g, g_row, floating, any_on, v_prev, abs_tol, rel_tol, max_iter, out):
    """Row-node voltage from KCL; ``out`` receives (residual/tolerance, iterations, status)."""
    n = vc.shape[0]
    if floating and not any_on:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return v_prev
    lo = vc[0]
    hi = vc[0]
    gsum = g_row
    for k in range(n):
        lo = min(lo, vc[k])
        hi = max(hi, vc[k])
        gsum += g[k]
    if not floating:
        lo = min(lo, 0.0)
        hi = max(hi, 0.0)
    v = min(max(v_prev, lo), hi)
    ratio = 0.0
    for it in range(max_iter + 1):
        f = -g_row * v
        imax = abs(g_row * v)
        for k in range(n):
            i = g[k] * (vc[k] - v)
            f += i
            imax = max(imax, abs(i))
        tol = abs_tol + rel_tol * imax
        ratio = abs(f) / tol
        if ratio <= 1.0:
            out[0] = ratio
            out[1] = it
            out[2] = 0.0
            return v
        if it == max_iter:
            break
        # residual decreases with v
        if f > 0:
            lo = v
        else:
            hi = v
        v_new = v + f / gsum
        if v_new < lo or v_new > hi:
            v_new = 0.5 * (lo + hi)
        v = v_new
    out[0] = ratio
    out[1] = max_iter
    out[2] = 1.0
    out[3] = lo
    out[4] = hi
    return v


@njit(cache=True)
def _evaluate(x, vc, rsel, g_row, floating, any_on, v_prev, prm, tol, max_iter,
              g, rate, i_dev, v_dev, info):
    vts, vtr, ks, kr, a_s, a_r, r_on, r_off = prm
    n = x.shape[0]
    for k in range(n):
        g[k] = 1.0 / (rsel[k] + (r_off - x[k] * (r_off - r_on)))
    v_row = _solve_row(vc, g, g_row, floating, any_on, v_prev, tol[0], tol[1], max_iter, info)
    if floating and not any_on:
        for k in range(n):
            i_dev[k] = 0.0
            v_dev[k] = 0.0
            rate[k] = 0.0
        return v_row
    for k in range(n):
        i = g[k] * (vc[k] - v_row)
        r = r_off - x[k] * (r_off - r_on)
        i_dev[k] = i
        v_dev[k] = i * r
        rate[k] = _rate(x[k], i * r, vts, vtr, ks, kr, a_s, a_r)
    return v_row


@njit(cache=True)
def _rk4(x, k1, va, vb, dt, rsel, g_row, floating, any_on, v_row, prm, tol, max_iter,
         bufs, x_out, info):
    """Coupled RK4 over one step with columns ramping linearly from ``va`` to ``vb``;
    the row voltage is re-solved at every stage. Returns the number of solver failures."""
    n = x.shape[0]
    xs, g, k2, k3, k4, i_tmp, v_tmp, vmid = bufs
    for k in range(n):
        vmid[k] = 0.5 * (va[k] + vb[k])
        xs[k] = _clamp01(x[k] + 0.5 * dt * k1[k])
    vr = _evaluate(xs, vmid, rsel, g_row, floating, any_on, v_row, prm, tol, max_iter,
                   g, k2, i_tmp, v_tmp, info)
    bad = info[2]
    info[5] = max(info[5], info[0])
    for k in range(n):
        xs[k] = _clamp01(x[k] + 0.5 * dt * k2[k])
    vr = _evaluate(xs, vmid, rsel, g_row, floating, any_on, vr, prm, tol, max_iter,
                   g, k3, i_tmp, v_tmp, info)
    bad += info[2]
    info[5] = max(info[5], info[0])
    for k in range(n):
        xs[k] = _clamp01(x[k] + dt * k3[k])
    vr = _evaluate(xs, vb, rsel, g_row, floating, any_on, vr, prm, tol, max_iter,
                   g, k4, i_tmp, v_tmp, info)
    bad += info[2]
    info[5] = max(info[5], info[0])
    for k in range(n):
        x_out[k] = _clamp01(x[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]))
    return bad


@njit(cache=True)
def _n_substeps(x, x_new, r_on, r_off, sub_tol, max_sub):
    # sub-steps needed to keep each device's relative resistance change below sub_tol
    worst = 0.0
    for k in range(x.shape[0]):
        ra = r_off - x[k] * (r_off - r_on)
        rb = r_off - x_new[k] * (r_off - r_on)
        worst = max(worst, abs(ra - rb) / min(ra, rb))
    if worst <= sub_tol:
        return 1
    return min(int(np.ceil(worst / sub_tol)), max_sub)


@njit(cache=True, nogil=True)
def _run_cycle_kernel(x0, v_row0, t, vcol, rsel, g_row, floating, any_on, prm, tol, max_iter,
                      sub_tol, max_sub, record, rec_vrow, rec_vdev, rec_idev, rec_x,
                      e_dev, e_sel, e_misc, diag):
    """March one cycle. ``e_misc`` = [row-switch energy, source energy];
    ``diag`` = [max residual ratio, failed step or -1, bracket lo, bracket hi, residual].

    A step in which some device's resistance would change by more than ``sub_tol``
    (relative) is split into equal sub-steps; traces stay on the grid ``t``."""
    n = x0.shape[0]
    m = t.shape[0] - 1
    r_on = prm[6]
    r_off = prm[7]
    x = x0.copy()
    x_new = np.empty(n)
    g = np.empty(n)
    k1 = np.empty(n)
    i_dev = np.empty(n)
    v_dev = np.empty(n)
    va = np.empty(n)
    vb = np.empty(n)
    bufs = (np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n),
            np.empty(n), np.empty(n))
    info = np.zeros(6)  # solver out[0..4], running max residual ratio
    diag[1] = -1.0
    v_row = _evaluate(x, vcol[0], rsel, g_row, floating, any_on, v_row0, prm, tol,
                      max_iter, g, k1, i_dev, v_dev, info)
    if info[2] != 0.0:
        diag[1] = 0
        diag[2] = info[3]
        diag[3] = info[4]
        diag[4] = info[0]
        return x, v_row
    info[5] = info[0]
    p_row = g_row * v_row * v_row
    p_src = 0.0
    for k in range(n):
        p_src += vcol[0, k] * i_dev[k]
    if record:
        rec_vrow[0] = v_row
        for k in range(n):
            rec_vdev[0, k] = v_dev[k]
            rec_idev[0, k] = i_dev[k]
            rec_x[0, k] = x[k]

    for j in range(m):
        dt = t[j + 1] - t[j]
        bad = _rk4(x, k1, vcol[j], vcol[j + 1], dt, rsel, g_row, floating, any_on, v_row,
                   prm, tol, max_iter, bufs, x_new, info)
        nsub = _n_substeps(x, x_new, r_on, r_off, sub_tol, max_sub) if bad == 0.0 else 1
        h = dt / nsub
        for s in range(nsub):
            if nsub > 1:
                for k in range(n):
                    dv = vcol[j + 1, k] - vcol[j, k]
                    va[k] = vcol[j, k] + dv * s / nsub
                    vb[k] = vcol[j, k] + dv * (s + 1) / nsub
                bad += _rk4(x, k1, va, vb, h, rsel, g_row, floating, any_on, v_row,
                            prm, tol, max_iter, bufs, x_new, info)
            else:
                for k in range(n):
                    vb[k] = vcol[j + 1, k]
            # trapezoid: the end-point evaluation is the next sub-step's start
            for k in range(n):
                e_dev[k] += 0.5 * h * v_dev[k] * i_dev[k]
                e_sel[k] += 0.5 * h * i_dev[k] * i_dev[k] * rsel[k]
                x[k] = x_new[k]
            e_misc[0] += 0.5 * h * p_row
            e_misc[1] += 0.5 * h * p_src
            v_row = _evaluate(x, vb, rsel, g_row, floating, any_on, v_row, prm, tol,
                              max_iter, g, k1, i_dev, v_dev, info)
            bad += info[2]
            info[5] = max(info[5], info[0])
            if bad != 0.0:
                diag[0] = info[5]
                diag[1] = j + 1
                diag[2] = info[3]
                diag[3] = info[4]
                diag[4] = info[0]
                return x, v_row
            p_row = g_row * v_row * v_row
            p_src = 0.0
            for k in range(n):
                p_src += vb[k] * i_dev[k]
                e_dev[k] += 0.5 * h * v_dev[k] * i_dev[k]
                e_sel[k] += 0.5 * h * i_dev[k] * i_dev[k] * rsel[k]
            e_misc[0] += 0.5 * h * p_row
            e_misc[1] += 0.5 * h * p_src
        if record:
            rec_vrow[j + 1] = v_row
            for k in range(n):
                rec_vdev[j + 1, k] = v_dev[k]
                rec_idev[j + 1, k] = i_dev[k]
                rec_x[j + 1, k] = x[k]
    diag[0] = info[5]
    return x, v_row


# -- Python-facing API -----------------------------------------------------

def step_grid(cycle: CycleDrive, dt: float, min_steps: int = 1) -> np.ndarray:
    """Uniform sub-steps of at most ``dt`` inside each breakpoint interval, and at
    least ``min_steps`` of them (short edges would otherwise get one or two)."""
    bps = cycle.breakpoint_times()
    pieces = [bps[:1]]
    for a, b in zip(bps[:-1], bps[1:]):
        m = max(min_steps, math.ceil((b - a) / dt - 1e-9))
        pieces.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(pieces)


def solve_row_voltage(states: Sequence[float], column_voltages: Sequence[float], gates_on,
                      row_grounded: bool, params: VteamParams, config: CircuitConfig | None = None,
                      v_prev: float = 0.0) -> float:
    """Row-node voltage for frozen device states (KCL over every branch)."""
    config = config or CircuitConfig()
    x = np.asarray(states, dtype=float)
    vc = np.asarray(column_voltages, dtype=float)
    rsel = _selector_resistances(len(x), gates_on, config)
    g = 1.0 / (rsel + (params.r_off - x * (params.r_off - params.r_on)))
    info = np.zeros(5)
    g_row = 0.0 if not row_grounded else 1.0 / config.r_row_switch
    v = _solve_row(vc, g, g_row, not row_grounded, bool(len(gates_on)), float(v_prev),
                   config.kcl_abs_tol, config.kcl_rel_tol, config.max_newton_iters, info)
    if info[2]:
        raise SolverError(f"row voltage did not converge in {config.max_newton_iters} "
                          f"iterations: bracket [{info[3]:.6g}, {info[4]:.6g}] V, "
                          f"residual {info[0]:.3g}x tolerance")
    return float(v)


def _selector_resistances(n, gates_on, config):
    rsel = np.full(n, config.r_selector_off)
    rsel[list(gates_on)] = config.r_selector_on
    return rsel


@dataclass
class CycleTrace:
    t: np.ndarray
    v_row: np.ndarray
    v_device: np.ndarray  # (samples, cells)
    i_device: np.ndarray
    x: np.ndarray


@dataclass
class CycleEnergy:
    device: np.ndarray  # per cell, J
    selector: np.ndarray
    row_switch: float
    source: float
    max_kcl_ratio: float

    @property
    def peripheral(self) -> float:
        return float(self.selector.sum() + self.row_switch)


def run_cycle(state: CrossbarState, cycle: CycleDrive, params: VteamParams,
              config: CircuitConfig | None = None, record: bool = False):
    """Simulate one cycle; returns ``(new_state, trace_or_None, CycleEnergy)``."""
    config = config or CircuitConfig()
    n = state.n
    if cycle.n_cells != n:
        raise ValueError(f"cycle drives {cycle.n_cells} columns, row has {n}")
    t = step_grid(cycle, config.dt, config.min_interval_steps)
    vcol = np.empty((len(t), n))
    for k, w in enumerate(cycle.column_waveforms):
        vcol[:, k] = pwl_value(w, t)
    rsel = _selector_resistances(n, cycle.gates_on, config)
    g_row = 1.0 / config.r_row_switch if cycle.row_grounded else 0.0
    size = len(t) if record else 1
    rec = (np.zeros(size), np.zeros((size, n)), np.zeros((size, n)), np.zeros((size, n)))
    e_dev, e_sel, e_misc, diag = np.zeros(n), np.zeros(n), np.zeros(2), np.zeros(5)
    x, v_row = _run_cycle_kernel(
        state.x, float(state.v_row), t, vcol, rsel, g_row, not cycle.row_grounded,
        bool(cycle.gates_on), params.as_tuple(),
        (config.kcl_abs_tol, config.kcl_rel_tol), config.max_newton_iters,
        config.substep_tol, config.max_substeps, record, *rec, e_dev, e_sel, e_misc, diag)
    if diag[1] >= 0:
        raise SolverError(
            f"cycle {cycle.label}: row voltage did not converge at t={t[int(diag[1])]:.6g} s "
            f"after {config.max_newton_iters} iterations: bracket [{diag[2]:.6g}, "
            f"{diag[3]:.6g}] V, residual {diag[4]:.3g}x tolerance")
    trace = CycleTrace(t, *rec) if record else None
    energy = CycleEnergy(e_dev, e_sel, float(e_misc[0]), float(e_misc[1]), float(diag[0]))
    return CrossbarState(x, float(v_row)), trace, energy


def integrate_energy(t, v, i) -> np.ndarray:
    """Trapezoidal ``∫ v·i dt`` along the first axis (per device when 2-D)."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(v, dtype=float) * np.asarray(i, dtype=float)
    return np.trapezoid(p, t, axis=0)


def readout(state: CrossbarState, params: VteamParams) -> dict[int, int]:
    """1 where the resistance is below the geometric mean of r_on and r_off."""
    r = params.r_off - state.x * (params.r_off - params.r_on)
    threshold = math.sqrt(params.r_on * params.r_off)
    return {k: int(r[k] < threshold) for k in range(state.n)}


@dataclass
class SimTrace:
    t: np.ndarray
    v_row: np.ndarray
    v_device: np.ndarray
    i_device: np.ndarray
    x: np.ndarray
    cycle_start_index: list[int]
    cycle_energy: np.ndarray  # (cycles, cells) device energy
    max_kcl_ratio: float

    def to_csv(self, decimate: int = 1) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "v_row", "cell", "v_device", "i_device", "x"])
        for j in range(0, len(self.t), max(1, decimate)):
            for k in range(self.x.shape[1]):
                w.writerow([f"{self.t[j]:.6e}", f"{self.v_row[j]:.6e}", k,
                            f"{self.v_device[j, k]:.6e}", f"{self.i_device[j, k]:.6e}",
                            f"{self.x[j, k]:.6e}"])
        return buf.getvalue()


@dataclass
class EnergyReport:
    """Energies in joules. Device energy is memristor dissipation only; the
    selectors and the row switch are reported as peripheral energy."""
    cycle_labels: list[str]
    cycle_categories: list[str]
    device: np.ndarray  # (cycles, cells)
    selector: np.ndarray  # (cycles, cells)
    row_switch: np.ndarray  # (cycles,)
    source: np.ndarray  # (cycles,)
    max_kcl_ratio: float = 0.0

    @property
    def n_cells(self) -> int:
        return self.device.shape[1]

    def _mask(self, category):
        return np.array([c == category for c in self.cycle_categories], dtype=bool)

    def per_cell(self, category: str) -> np.ndarray:
        mask = self._mask(category)
        return self.device[mask].sum(axis=0) if mask.any() else np.zeros(self.n_cells)

    @property
    def category_totals(self) -> dict[str, float]:
        return {c: float(self.per_cell(c).sum()) for c in CATEGORIES}

    @property
    def cycle_totals(self) -> np.ndarray:
        return self.device.sum(axis=1)

    @property
    def device_total(self) -> float:
        return float(self.device.sum())

    @property
    def peripheral_total(self) -> float:
        return float(self.selector.sum() + self.row_switch.sum())

    @property
    def source_total(self) -> float:
        return float(self.source.sum())

    @property
    def grand_total(self) -> float:
        return self.device_total + self.peripheral_total

    def init_with_input_load(self) -> float:
        totals = self.category_totals
        return totals["init"] + totals["input_load"]

    def to_dict(self) -> dict:
        devices = [{"cell": k, "category": c, "energy_j": float(self.per_cell(c)[k])}
                   for k in range(self.n_cells) for c in CATEGORIES]
        cycles = [{"label": label, "category": cat, "device_j": float(self.device[i].sum()),
                   "peripheral_j": float(self.selector[i].sum() + self.row_switch[i])}
                  for i, (label, cat) in enumerate(zip(self.cycle_labels, self.cycle_categories))]
        return {
            "unit": "J",
            "devices": devices,
            "cycles": cycles,
            "category_totals": self.category_totals,
            "device_total": self.device_total,
            "peripheral_total": self.peripheral_total,
            "source_total": self.source_total,
            "grand_total": self.grand_total,
            "max_kcl_residual_ratio": self.max_kcl_ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_table(self) -> str:
        """Per-cell table in fJ with Init/Exe/Read columns (plus input load)."""
        head = f"{'cell':>6} {'InLoad':>12} {'Init':>12} {'Exe':>12} {'Read':>12} {'Total':>12}"
        rows = [head, "-" * len(head)]
        cols = [self.per_cell(c) * 1e15 for c in CATEGORIES]
        for k in range(self.n_cells):
            vals = [c[k] for c in cols]
            rows.append(f"{k:>6} " + " ".join(f"{v:12.4f}" for v in vals)
                        + f" {sum(vals):12.4f}")
        tot = [c.sum() for c in cols]
        rows.append("-" * len(head))
        rows.append(f"{'total':>6} " + " ".join(f"{v:12.4f}" for v in tot)
                    + f" {sum(tot):12.4f}")
        rows.append(f"peripheral (selectors + row switch): {self.peripheral_total * 1e15:.4f} fJ")
        rows.append(f"source-delivered: {self.source_total * 1e15:.4f} fJ")
        return "\n".join(rows) + "\n"


class SimResult(NamedTuple):
    trace: SimTrace | None
    report: EnergyReport
    readouts: dict[str, int]
    final_state: CrossbarState
    cell_bits: dict[int, int]


def run_schedule(cycles: Sequence[CycleDrive], params: VteamParams,
                 config: CircuitConfig | None = None, state: CrossbarState | None = None,
                 record_trace: bool = False):
    """Run prepared cycles in order; returns ``(SimTrace|None, EnergyReport, final state)``."""
    config = config or CircuitConfig()
    n = cycles[0].n_cells if cycles else (state.n if state else 0)
    state = state.copy() if state is not None else CrossbarState.hrs(n)
    dev, sel, row, src = [], [], [], []
    traces = []
    max_ratio = 0.0
    for c in cycles:
        state, tr, e = run_cycle(state, c, params, config, record=record_trace)
        dev.append(e.device)
        sel.append(e.selector)
        row.append(e.row_switch)
        src.append(e.source)
        max_ratio = max(max_ratio, e.max_kcl_ratio)
        if tr is not None:
            traces.append(tr)
    shape = (len(cycles), n)
    report = EnergyReport(
        [c.label for c in cycles], [c.category for c in cycles],
        np.array(dev).reshape(shape), np.array(sel).reshape(shape),
        np.array(row, dtype=float), np.array(src, dtype=float), max_ratio)
    trace = _join_traces(traces, report.device, max_ratio) if record_trace else None
    return trace, report, state


def _join_traces(traces, cycle_energy, max_ratio) -> SimTrace:
    parts = {"t": [], "v_row": [], "v_device": [], "i_device": [], "x": []}
    starts = []
    count = 0
    for i, tr in enumerate(traces):
        skip = 1 if i else 0  # shared boundary sample
        starts.append(max(count - 1, 0) if i else 0)
        for key in parts:
            parts[key].append(getattr(tr, key)[skip:])
        count += len(tr.t) - skip
    if not traces:
        return SimTrace(np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)),
                        np.zeros((0, 0)), [], cycle_energy, max_ratio)
    return SimTrace(*(np.concatenate(parts[k]) for k in parts), starts, cycle_energy,
                    max_ratio)


def run_program(p: ExecutionProgram, input_bits: Mapping[str, int], params: VteamParams,
                levels: VoltageLevels | None = None, timing: Timing | None = None,
                config: CircuitConfig | None = None, record_trace: bool = False,
                initial_state: CrossbarState | None = None, read_all: bool = True) -> SimResult:
    """Simulate ``p`` from an all-HRS row (or ``initial_state`` for a warm start)."""
    timing = timing or Timing()
    config = config or CircuitConfig()
    config.check_timing(timing)
    cycles = build_schedule(p, input_bits, levels, timing, read_all=read_all)
    if initial_state is not None and initial_state.n != p.row_size:
        raise ValueError(f"warm-start state has {initial_state.n} cells, row has {p.row_size}")
    trace, report, final = run_schedule(cycles, params, config, initial_state, record_trace)
    bits = readout(final, params)
    readouts = {name: bits[cell] for name, cell in p.outputs.items()}
    return SimResult(trace, report, readouts, final, bits)
