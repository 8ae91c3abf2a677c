import math

import pytest

from magic_energy.calibration import (EXPERIMENTS, TABLE1_DC, TABLE1_PULSE, FitResult,
                                      expected_final, measure_table1, measure_write,
                                      table1_timing, target_index)
from magic_energy.device import load_params
from magic_energy.waveform import Timing


@pytest.fixture(scope="module")
def table(params):
    return measure_table1(params)


def test_targets_match_published_averages():
    # the coarse model's per-op averages are the means of these rows
    nor = [TABLE1_PULSE[k] for k in ("nor_00", "nor_01", "nor_10", "nor_11")]
    assert sum(nor) / 4 == pytest.approx(53.75, abs=0.01)
    assert (TABLE1_PULSE["not_0"] + TABLE1_PULSE["not_1"]) / 2 == pytest.approx(46.53, abs=0.01)
    nor_dc = [TABLE1_DC[k] for k in ("nor_00", "nor_01", "nor_10", "nor_11")]
    assert sum(nor_dc) / 4 == pytest.approx(55.04, abs=0.01)
    assert (TABLE1_DC["not_0"] + TABLE1_DC["not_1"]) / 2 == pytest.approx(47.31, abs=0.01)


def test_experiment_outcomes(table, params):
    for name, m in table.items():
        x = m.final_x[target_index(name)]
        assert (x >= 0.99) if expected_final(name) else (x <= 0.01), name


def test_energy_orderings(table):
    e = {k: m.energy for k, m in table.items()}
    assert e["nor_00"] < e["nor_11"] < e["nor_01"]
    assert e["not_0"] < e["not_1"]
    assert e["nor_01"] == pytest.approx(e["nor_10"], rel=0.01)


def test_set_pulse_wastes_energy_after_switching(table):
    s = table["set"]
    assert s.switch_time < 1.3e-9
    assert s.energy >= 10 * s.energy_to_switch


def test_reset_write_switches(table):
    r = table["reset"]
    assert r.final_x[0] <= 0.01 and r.switch_time < 1.3e-9


def test_write_that_never_switches_has_no_switch_energy(params):
    m = measure_write(params, 1.0, 0.0)  # below the SET threshold
    assert math.isnan(m.energy_to_switch) and m.energy > 0


def test_table1_timing_drops_gap():
    t = table1_timing(Timing(pulse_width=2e-9))
    assert t.settle_gap == 0.0 and t.pulse_width == 2e-9


def test_shipped_fit_is_close():
    from importlib import resources
    with resources.as_file(resources.files("magic_energy") / "data" / "vteam_table1.params") as f:
        p = load_params(f)
    fit = FitResult(p, measure_table1(p), dict(TABLE1_PULSE))
    errs = fit.relative_errors()
    assert set(errs) == set(EXPERIMENTS)
    assert max(abs(v) for v in errs.values()) < 0.05
    assert "nor_11" in fit.format()


def test_helpers():
    assert expected_final("nor_00") == 1 and expected_final("nor_10") == 0
    assert expected_final("not_0") == 1 and expected_final("reset") == 0
    assert expected_final("set") == 1
    assert target_index("nor_11") == 2 and target_index("not_1") == 1
    assert target_index("set") == 0
