import csv
import io

import numpy as np
import pytest

from magic_energy.program import ExecutionProgram, Init, Nor, Not
from magic_energy.waveform import (EXEC, INIT, INPUT_LOAD, READ, PwlWaveform, Timing,
                                   VoltageLevels, build_schedule, column_waveform,
                                   gate_waveform, make_drive, pwl_value, row_switch_waveform,
                                   schedule_csv, schedule_duration, trapezoid)

LV = VoltageLevels()
TM = Timing()


def pulse_level(c, cell):
    return max((v for _, v in c.column_waveforms[cell].breakpoints), key=abs)


def test_pwl_value_examples():
    w = PwlWaveform(((0.0, 0.0), (1e-12, 2.0)))
    assert pwl_value(w, 0.5e-12) == pytest.approx(1.0)
    assert pwl_value(w, -1.0) == 0.0
    assert pwl_value(w, 1.0) == 2.0
    assert w(np.array([0.0, 1e-12])).tolist() == [0.0, 2.0]
    assert pwl_value(PwlWaveform(), 3.0) == 0.0


def test_pwl_needs_increasing_times():
    with pytest.raises(ValueError):
        PwlWaveform(((0.0, 0.0), (0.0, 1.0)))


def test_levels_and_timing_invariants():
    with pytest.raises(ValueError):
        VoltageLevels(v_read=1.5)
    with pytest.raises(ValueError):
        VoltageLevels(v_exec=2.5)
    with pytest.raises(ValueError):
        Timing(pulse_width=1e-12)
    with pytest.raises(ValueError):
        Timing(edge_time=0.0)


def test_trapezoid_shape():
    w = trapezoid(2.0, 1e-9, TM)
    assert w.breakpoints == ((1e-9, 0.0), (1e-9 + 1e-12, 2.0), (1e-9 + 1.3e-9 - 1e-12, 2.0),
                             (1e-9 + 1.3e-9, 0.0), (1e-9 + 1.4e-9, 0.0))


def test_listing_schedule_with_input_load(half_adder):
    cycles = build_schedule(half_adder, {"A": 1, "B": 0})
    assert len(cycles) == 9
    assert [c.label for c in cycles] == ["IN"] + [f"T{k}" for k in range(7)] + ["R"]
    load = cycles[0]
    assert load.category == INPUT_LOAD and load.gates_on == {0} and load.row_grounded
    assert pulse_level(load, 0) == 2.0 and pulse_level(load, 1) == 0.0
    t0 = cycles[1]
    assert t0.category == INIT and t0.row_grounded and t0.gates_on == {2, 3, 4}
    assert [pulse_level(t0, k) for k in range(5)] == [0, 0, 2.0, 2.0, 2.0]
    t3 = cycles[4]
    assert t3.category == EXEC and not t3.row_grounded and t3.gates_on == {2, 3, 4}
    assert [pulse_level(t3, k) for k in range(5)] == [0, 0, 0.0, 1.0, 1.0]
    read = cycles[-1]
    assert read.category == READ and read.gates_on == set(range(5)) and read.row_grounded
    assert all(pulse_level(read, k) == 0.2 for k in range(5))


def test_all_zero_inputs_skip_input_load(half_adder):
    cycles = build_schedule(half_adder, {"A": 0, "B": 0})
    assert len(cycles) == 8 and cycles[0].label == "T0"


def test_category_counts_and_exec_shape(half_adder):
    cycles = build_schedule(half_adder, {"A": 1, "B": 1})
    cats = [c.category for c in cycles]
    assert cats.count(EXEC) == 5 and cats.count(INIT) == 2
    assert cats.count(READ) == 1 and cats.count(INPUT_LOAD) == 1
    for c in cycles:
        assert c.row_grounded == (c.category != EXEC)
        levels = [pulse_level(c, k) for k in range(c.n_cells)]
        for k in range(c.n_cells):
            wave = c.column_waveforms[k].breakpoints
            assert wave[0][1] == 0.0 and wave[-1][1] == 0.0
            if k not in c.gates_on:
                assert levels[k] == 0.0
        if c.category == EXEC:
            assert [levels[k] for k in c.gates_on].count(0.0) == 1
            assert levels.count(LV.v_exec) >= 1
            assert c.gates_on == {*c.op.inputs, c.op.output}


def test_empty_program_reads_only():
    p = ExecutionProgram(3, {}, {}, ())
    cycles = build_schedule(p, {})
    assert [c.category for c in cycles] == [READ]


def test_read_outputs_only(half_adder):
    cycles = build_schedule(half_adder, {"A": 0, "B": 0}, read_all=False)
    assert cycles[-1].gates_on == {2, 4}


def test_missing_input_bit(half_adder):
    with pytest.raises(KeyError, match="B"):
        build_schedule(half_adder, {"A": 1})


def test_invalid_program_rejected():
    p = ExecutionProgram(2, {"a": 0}, {"y": 1}, (("T0", Not(0, 1)), ("T1", Not(0, 1))))
    with pytest.raises(ValueError):
        build_schedule(p, {"a": 0})


def test_schedule_duration(half_adder):
    cycles = build_schedule(half_adder, {"A": 1, "B": 0})
    assert schedule_duration(cycles) == pytest.approx(9 * 1.3e-9 + 9 * 0.1e-9)
    assert schedule_duration([]) == 0.0
    one = make_drive("X", INIT, {0: 2.0}, 1, 0.0, Timing(settle_gap=0.0), True)
    assert schedule_duration([one]) == pytest.approx(1.3e-9)


def test_cycles_tile_time(half_adder):
    cycles = build_schedule(half_adder, {"A": 1, "B": 1})
    assert cycles[0].start == 0.0
    for a, b in zip(cycles, cycles[1:]):
        assert b.start == pytest.approx(a.end)


def test_column_waveform_stitches_cycles(half_adder):
    cycles = build_schedule(half_adder, {"A": 1, "B": 0})
    w = column_waveform(cycles, 3)
    assert w.breakpoints[-1][0] == pytest.approx(schedule_duration(cycles))
    # cell 3 is driven in T0 (2 V), T2 output (0 V), T3 input (1 V), T4 (2 V), T5 output, R
    for c in cycles:
        mid = c.start + TM.pulse_width / 2
        assert w(mid) == pytest.approx(pulse_level(c, 3))


def test_gate_and_row_switch_waveforms(half_adder):
    cycles = build_schedule(half_adder, {"A": 0, "B": 0})
    row = row_switch_waveform(cycles, LV, TM)
    for c in cycles:
        mid = c.start + TM.pulse_width / 2
        assert row(mid) == (LV.v_gate_on if c.row_grounded else LV.v_gate_off)
        g0 = gate_waveform(cycles, 0, LV, TM)
        assert g0(mid) == (LV.v_gate_on if 0 in c.gates_on else LV.v_gate_off)


def test_schedule_csv(half_adder):
    text = schedule_csv(build_schedule(half_adder, {"A": 0, "B": 1}))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["cycle_label", "category", "cell", "breakpoint_t_s", "v_volts"]
    assert {r[0] for r in rows[1:]} == {"IN", "R"} | {f"T{k}" for k in range(7)}


def test_nor_schedule_drives_all_inputs():
    p = ExecutionProgram(4, {"a": 0, "b": 1, "c": 2}, {"y": 3},
                         (("T0", Init((3,))), ("T1", Nor((0, 1, 2), 3))))
    c = build_schedule(p, {"a": 0, "b": 0, "c": 0})[1]
    assert [pulse_level(c, k) for k in range(4)] == [1.0, 1.0, 1.0, 0.0]
