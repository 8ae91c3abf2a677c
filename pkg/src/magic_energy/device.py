"""VTEAM behavioral memristor model.

The state ``x`` is normalized to [0, 1]: ``x = 1`` is the low resistive state
(LRS, logic 1) and ``x = 0`` the high resistive state (HRS, logic 0).
Resistance is linear in ``x`` and the state only moves when the device voltage
leaves the ``[v_t_reset, v_t_set]`` window.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from numba import njit

SWITCH_MARGIN = 0.01


@dataclass(frozen=True)
class VteamParams:
    v_t_set: float = 1.2
    v_t_reset: float = -0.4
    k_set: float = 1.0e9
    k_reset: float = 1.0e9
    alpha_set: float = 3.0
    alpha_reset: float = 3.0
    r_on: float = 4.0e3
    r_off: float = 1.0e6

    def __post_init__(self):
        if not 0 < self.r_on < self.r_off:
            raise ValueError(f"need 0 < r_on < r_off, got r_on={self.r_on}, r_off={self.r_off}")
        if not self.v_t_reset < 0 < self.v_t_set:
            raise ValueError(
                f"need v_t_reset < 0 < v_t_set, got {self.v_t_reset}, {self.v_t_set}")
        if self.k_set <= 0 or self.k_reset <= 0:
            raise ValueError("switching rate constants must be positive")
        if self.alpha_set < 1 or self.alpha_reset < 1:
            raise ValueError("alpha exponents must be >= 1")

    def replace(self, **changes) -> "VteamParams":
        return dataclasses.replace(self, **changes)

    def as_tuple(self):
        """Positional form consumed by the compiled kernels."""
        return (self.v_t_set, self.v_t_reset, self.k_set, self.k_reset,
                self.alpha_set, self.alpha_reset, self.r_on, self.r_off)


@dataclass(frozen=True)
class DeviceState:
    x: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"state x={self.x} outside [0, 1]")


# -- compiled scalar kernels (shared with the crossbar simulator) ----------

@njit(cache=True)
def _resistance(x, r_on, r_off):
    return r_off - x * (r_off - r_on)


@njit(cache=True)
def _rate(x, v, v_t_set, v_t_reset, k_set, k_reset, alpha_set, alpha_reset):
    if v > v_t_set:
        return k_set * (v / v_t_set - 1.0) ** alpha_set * (1.0 - x)
    if v < v_t_reset:
        return -k_reset * (v / v_t_reset - 1.0) ** alpha_reset * x
    return 0.0


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def _rk4_const_v(x, v, dt, vts, vtr, ks, kr, a_s, a_r):
    k1 = _rate(x, v, vts, vtr, ks, kr, a_s, a_r)
    k2 = _rate(_clamp01(x + 0.5 * dt * k1), v, vts, vtr, ks, kr, a_s, a_r)
    k3 = _rate(_clamp01(x + 0.5 * dt * k2), v, vts, vtr, ks, kr, a_s, a_r)
    k4 = _rate(_clamp01(x + dt * k3), v, vts, vtr, ks, kr, a_s, a_r)
    return _clamp01(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


@njit(cache=True)
def _switch_time(x0, target, v, dt, t_max, vts, vtr, ks, kr, a_s, a_r):
    # time for x to cross ``target`` starting from x0; -1 if it never does
    rising = target > x0
    x = x0
    t = 0.0
    while t < t_max:
        x_new = _rk4_const_v(x, v, dt, vts, vtr, ks, kr, a_s, a_r)
        if (rising and x_new >= target) or (not rising and x_new <= target):
            frac = (target - x) / (x_new - x)
            return t + frac * dt
        if x_new == x:
            return -1.0
        x = x_new
        t += dt
    return -1.0


# -- public API -------------------------------------------------------------

def _x(s) -> float:
    return s.x if isinstance(s, DeviceState) else float(s)


def resistance(p: VteamParams, s) -> float:
    """Linear interpolation between ``r_off`` (x=0) and ``r_on`` (x=1)."""
    return _resistance(_x(s), p.r_on, p.r_off)


def current(p: VteamParams, s, v: float) -> float:
    return v / resistance(p, s)


def state_rate(p: VteamParams, s, v: float) -> float:
    """dx/dt for device voltage ``v`` (column terminal minus row terminal)."""
    return _rate(_x(s), v, p.v_t_set, p.v_t_reset, p.k_set, p.k_reset,
                 p.alpha_set, p.alpha_reset)


def step_state(p: VteamParams, s, v: float, dt: float) -> DeviceState:
    """One fixed RK4 step under constant voltage, clamped to [0, 1]."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = _rk4_const_v(_x(s), v, dt, p.v_t_set, p.v_t_reset, p.k_set, p.k_reset,
                     p.alpha_set, p.alpha_reset)
    return DeviceState(x)


def switch_time(p: VteamParams, v: float, direction: str, dt: float = 1e-13,
                t_max: float = 1e-6) -> float:
    """Time for a full switch under constant ``v``.

    ``direction="set"`` starts at x=0 and stops at x=0.99; ``"reset"`` starts at
    x=1 and stops at x=0.01. Returns ``math.inf`` when the device never gets there.
    """
    if direction == "set":
        x0, target = 0.0, 1.0 - SWITCH_MARGIN
    elif direction == "reset":
        x0, target = 1.0, SWITCH_MARGIN
    else:
        raise ValueError(f"direction must be 'set' or 'reset', not {direction!r}")
    t = _switch_time(x0, target, v, dt, t_max, *p.as_tuple()[:6])
    return math.inf if t < 0 else t


class CalibrationError(RuntimeError):
    pass


def calibrate_k(p: VteamParams, target_voltage: float, target_switch_time: float,
                direction: str, k_bracket=(1e3, 1e18), rel_tol: float = 1e-4) -> VteamParams:
    """Fit ``k_set`` or ``k_reset`` so a full switch at ``target_voltage`` takes
    ``target_switch_time``.

    Bisection runs on log(k); the switching time is measured with the same RK4
    stepper used everywhere else, at a step of ``target_switch_time / 4000``.
    """
    if target_switch_time <= 0:
        raise ValueError("target_switch_time must be positive")
    if direction == "set":
        if target_voltage <= p.v_t_set:
            raise CalibrationError(
                f"{target_voltage} V does not exceed the SET threshold {p.v_t_set} V; "
                "state rate is identically zero")
        field = "k_set"
    elif direction == "reset":
        if target_voltage >= p.v_t_reset:
            raise CalibrationError(
                f"{target_voltage} V does not exceed the RESET threshold {p.v_t_reset} V; "
                "state rate is identically zero")
        field = "k_reset"
    else:
        raise ValueError(f"direction must be 'set' or 'reset', not {direction!r}")

    dt = target_switch_time / 4000.0
    t_max = 50.0 * target_switch_time

    def t_of(log_k):
        return switch_time(p.replace(**{field: math.exp(log_k)}), target_voltage,
                           direction, dt=dt, t_max=t_max)

    lo, hi = math.log(k_bracket[0]), math.log(k_bracket[1])
    t_lo, t_hi = t_of(lo), t_of(hi)
    if t_hi > target_switch_time:
        raise CalibrationError(
            f"even k={k_bracket[1]:.3g} switches in {t_hi:.3g} s > target "
            f"{target_switch_time:.3g} s at {target_voltage} V")
    if t_lo < target_switch_time:
        raise CalibrationError(
            f"k={k_bracket[0]:.3g} already switches in {t_lo:.3g} s < target "
            f"{target_switch_time:.3g} s at {target_voltage} V")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        t_mid = t_of(mid)
        if abs(t_mid - target_switch_time) <= rel_tol * target_switch_time:
            lo = hi = mid
            break
        if t_mid > target_switch_time:
            lo = mid
        else:
            hi = mid
    return p.replace(**{field: math.exp(0.5 * (lo + hi))})


# -- parameter files -------------------------------------------------------

_FIELDS = [f.name for f in dataclasses.fields(VteamParams)]


def parse_params(text: str, base: VteamParams | None = None) -> VteamParams:
    """Parse ``name = value`` lines (SI units, ``#`` comments).

    Keys not present keep the value from ``base`` (class defaults if omitted).
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'name = value', got {raw!r}")
        name, value = (part.strip() for part in line.split("=", 1))
        if name not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown parameter {name!r}")
        try:
            values[name] = float(value)
        except ValueError:
            raise ValueError(f"line {lineno}: bad number {value!r} for {name}") from None
    base = base or VteamParams()
    return base.replace(**values)


def format_params(p: VteamParams, header: str = "") -> str:
    lines = [f"# {h}" if h else "#" for h in header.splitlines()]
    lines += [f"{name} = {getattr(p, name)!r}" for name in _FIELDS]
    return "\n".join(lines) + "\n"


def load_params(path) -> VteamParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def save_params(p: VteamParams, path, header: str = "") -> None:
    Path(path).write_text(format_params(p, header), encoding="utf-8")


def default_params() -> VteamParams:
    """Parameters from the shipped ``vteam_default.params``."""
    text = resources.files("magic_energy").joinpath("data/vteam_default.params").read_text(
        encoding="utf-8")
    return parse_params(text)
