"""Single-operation energy experiments and the fit against the published
NOR/NOT/write energy table.

Each experiment runs one 1.3 ns pulse (1 ps edges) on a tiny row: a 3-cell row
for NOR, 2 cells for NOT, 1 cell for the writes. Reported energies are the
memristor dissipation summed over the row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .device import VteamParams, calibrate_k
from .program import Nor, Not
from .simulator import CircuitConfig, CrossbarState, integrate_energy, run_cycle
from .waveform import INIT, Timing, VoltageLevels, make_drive, op_drive

# fJ; pulse columns (1.3 ns, 1 ps rise/fall) and the DC columns of the same table
TABLE1_PULSE = {
    "nor_00": 8.6, "nor_01": 87.96, "nor_10": 87.96, "nor_11": 30.48,
    "not_0": 4.32, "not_1": 88.74,
    "set": 1272.2, "reset": 19.01,
}
TABLE1_DC = {
    "nor_00": 8.6, "nor_01": 89.53, "nor_10": 89.53, "nor_11": 32.48,
    "not_0": 4.31, "not_1": 90.31,
    "set": 75.56, "reset": 17.66,
}
EXPERIMENTS = tuple(TABLE1_PULSE)
# full-pulse SET energy over the energy spent until the switching point
SET_PULSE_TO_SWITCH_RATIO = 16.8


@dataclass
class OpMeasurement:
    energy: float  # J, device energy over the whole pulse
    final_x: np.ndarray
    energy_to_switch: float = math.nan  # writes only: energy until the state crosses 0.99/0.01
    switch_time: float = math.nan


def table1_timing(timing: Timing | None = None) -> Timing:
    t = timing or Timing()
    return Timing(pulse_width=t.pulse_width, edge_time=t.edge_time, settle_gap=0.0)


def measure_gate(params: VteamParams, op, states, levels: VoltageLevels | None = None,
                 timing: Timing | None = None, config: CircuitConfig | None = None
                 ) -> OpMeasurement:
    """One MAGIC gate pulse with the given initial states (output normally at x=1)."""
    levels = levels or VoltageLevels()
    drive = op_drive("T", op, len(states), levels, table1_timing(timing))
    state, _, e = run_cycle(CrossbarState(states), drive, params, config)
    return OpMeasurement(float(e.device.sum()), state.x)


def measure_write(params: VteamParams, voltage: float, x0: float,
                  timing: Timing | None = None, config: CircuitConfig | None = None
                  ) -> OpMeasurement:
    """One write pulse on a single grounded-row cell, with the energy at the switching instant."""
    drive = make_drive("W", INIT, {0: voltage}, 1, 0.0, table1_timing(timing),
                       row_grounded=True)
    state, tr, e = run_cycle(CrossbarState([x0]), drive, params, config, record=True)
    target = 0.99 if x0 < 0.5 else 0.01
    crossed = tr.x[:, 0] >= target if x0 < 0.5 else tr.x[:, 0] <= target
    m = OpMeasurement(float(e.device.sum()), state.x)
    if crossed.any():
        j = int(np.argmax(crossed))
        m.switch_time = float(tr.t[j])
        m.energy_to_switch = float(
            integrate_energy(tr.t[:j + 1], tr.v_device[:j + 1, 0], tr.i_device[:j + 1, 0]))
    return m


def measure_table1(params: VteamParams, levels: VoltageLevels | None = None,
                   timing: Timing | None = None, config: CircuitConfig | None = None
                   ) -> dict[str, OpMeasurement]:
    levels = levels or VoltageLevels()
    out = {}
    for a in (0, 1):
        for b in (0, 1):
            out[f"nor_{a}{b}"] = measure_gate(params, Nor((0, 1), 2), [a, b, 1.0],
                                              levels, timing, config)
    for a in (0, 1):
        out[f"not_{a}"] = measure_gate(params, Not(0, 1), [a, 1.0], levels, timing, config)
    out["set"] = measure_write(params, levels.v_init, 0.0, timing, config)
    out["reset"] = measure_write(params, levels.v_reset_write, 1.0, timing, config)
    return out


def expected_final(name: str) -> int:
    """Logic value the experiment's target device must end in."""
    if name.startswith("nor_"):
        return int(name == "nor_00")
    if name.startswith("not_"):
        return int(name == "not_0")
    return int(name == "set")


def target_index(name: str) -> int:
    return {"nor": 2, "not": 1}.get(name[:3], 0)


@dataclass
class FitResult:
    params: VteamParams
    measured: dict[str, OpMeasurement]
    targets: dict[str, float]

    def relative_errors(self) -> dict[str, float]:
        return {k: self.measured[k].energy * 1e15 / v - 1.0 for k, v in self.targets.items()}

    def format(self) -> str:
        lines = [f"{'experiment':<10} {'target fJ':>10} {'model fJ':>10} {'error':>8}"]
        for k, err in self.relative_errors().items():
            lines.append(f"{k:<10} {self.targets[k]:>10.2f} "
                         f"{self.measured[k].energy * 1e15:>10.2f} {err:>+8.1%}")
        return "\n".join(lines) + "\n"


# fitted: log r_on, log r_off, log k_set, log k_reset, alpha_reset, v_t_reset
_LOWER = [math.log(1e3), math.log(3e4), math.log(1e8), math.log(1e6), 1.0, -0.48]
_UPPER = [math.log(2e4), math.log(1e8), math.log(1e13), math.log(1e13), 6.0, -0.21]


def _unpack(z, base: VteamParams) -> VteamParams:
    return base.replace(r_on=math.exp(z[0]), r_off=math.exp(z[1]), k_set=math.exp(z[2]),
                        k_reset=math.exp(z[3]), alpha_reset=float(z[4]), v_t_reset=float(z[5]))


def fit_table1(base: VteamParams | None = None, targets: dict[str, float] | None = None,
               levels: VoltageLevels | None = None, timing: Timing | None = None,
               config: CircuitConfig | None = None,
               set_ratio: float = SET_PULSE_TO_SWITCH_RATIO) -> FitResult:
    """Least-squares fit of r_on, r_off, k_set, k_reset, alpha_reset and v_t_reset
    to the table energies (log-ratio residuals), keeping every experiment's
    logic outcome correct. The SET pulse-to-switching-point energy ratio is an
    extra (half-weight) target; without it r_on and k_set are degenerate."""
    base = base or VteamParams()
    targets = targets or TABLE1_PULSE
    levels = levels or VoltageLevels()
    # start: HRS leakage of a NOT 0->1 pulse fixes r_off; a RESET write dissipating
    # the target needs about one time constant per pulse; SET is fast
    r_off0 = levels.v_exec ** 2 * 1.3e-9 / (targets["not_0"] * 1e-15)
    start = base.replace(r_off=min(max(r_off0, 4e4), 5e7), r_on=3.9e3,
                         alpha_reset=3.3, v_t_reset=-0.25)
    k1 = 1.0 / 1.3e-9
    start = start.replace(
        k_reset=k1 / (levels.v_reset_write / start.v_t_reset - 1.0) ** start.alpha_reset)
    start = calibrate_k(start, levels.v_init, 0.1e-9, "set")

    def residuals(z):
        p = _unpack(z, base)
        meas = measure_table1(p, levels, timing, config)
        res = [math.log(meas[k].energy * 1e15 / v) for k, v in targets.items()]
        s = meas["set"]
        ratio = s.energy / s.energy_to_switch if s.energy_to_switch > 0 else 1.0
        res.append(0.5 * math.log(ratio / set_ratio))
        for k, m in meas.items():
            # logic outcome with a 3x resistance margin around the read threshold
            r = p.r_off - m.final_x[target_index(k)] * (p.r_off - p.r_on)
            margin = math.log(r / math.sqrt(p.r_on * p.r_off)) / math.log(3.0)
            miss = 1.0 - margin if expected_final(k) == 0 else 1.0 + margin
            res.append(5.0 * max(miss, 0.0))
        return res

    z0 = [math.log(start.r_on), math.log(start.r_off), math.log(start.k_set),
          math.log(start.k_reset), start.alpha_reset, start.v_t_reset]
    z0 = np.clip(z0, _LOWER, _UPPER)
    sol = least_squares(residuals, z0, bounds=(_LOWER, _UPPER), x_scale="jac",
                        diff_step=1e-4, max_nfev=400)
    fitted = _unpack(sol.x, base)
    return FitResult(fitted, measure_table1(fitted, levels, timing, config), dict(targets))
