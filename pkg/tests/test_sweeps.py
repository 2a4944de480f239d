import csv
import json
import math
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swingup.protocols import second_detuning_for
from swingup.pulses import FmGaussian, TwoColor, mev
from swingup.sweeps import (
    SweepAxis,
    SweepGrid,
    SweepResult,
    display,
    final_occupation,
    gradient_orientation,
    phase_scan,
    run_sweep,
    stripe_onset,
)

PI = math.pi
ROW4 = TwoColor(22.65 * PI, 2.4, mev(-8), 19.29 * PI, 3.04, mev(-19.163), -0.73)
FM = FmGaussian(6.2 * PI, 4.0, mev(-6), mev(2), mev(6.08))


def test_axis_validation():
    with pytest.raises(ValueError):
        SweepAxis("alpha", 0, 1, 0)
    with pytest.raises(ValueError):
        SweepAxis("alpha", 0, 1, 1)
    assert list(SweepAxis("alpha", 2.0, 2.0, 1).values()) == [2.0]


def test_grid_rejects_unknown_fields():
    with pytest.raises(ValueError):
        SweepGrid(FM, SweepAxis("nope", 0, 1, 2))
    with pytest.raises(ValueError):
        SweepGrid(FM, SweepAxis("alpha", 0, 1, 2), links=(("alpha", "nope", 1.0),))
    with pytest.raises(ValueError):
        SweepGrid(FM, SweepAxis("alpha", 0, 1, 2), derive_delta2=True)


def test_single_point_grid_is_final_occupation():
    # [TRIVIAL]
    g = SweepGrid(FM, SweepAxis("alpha", FM.alpha, FM.alpha, 1))
    res = run_sweep(g)
    assert res.values.shape == (1, 1)
    assert res.values[0, 0] == final_occupation(FM)


def test_links_and_derived_detuning():
    g = SweepGrid(ROW4, SweepAxis("alpha1", 10 * PI, 20 * PI, 3), SweepAxis("sigma1", 1.0, 3.0, 3),
                  links=(("alpha2", "alpha1", 1.0), ("sigma2", "sigma1", 1.5)), derive_delta2=True)
    s = g.spec_at(1, 2)
    assert s.alpha1 == pytest.approx(15 * PI) and s.alpha2 == s.alpha1
    assert s.sigma1 == 3.0 and s.sigma2 == pytest.approx(4.5)
    assert s.delta2 == pytest.approx(second_detuning_for(s.alpha1, s.sigma1, s.delta1))
    assert s.tau == ROW4.tau


def test_failing_cells_become_nan():
    g = SweepGrid(FM, SweepAxis("sigma", -1.0, 1.0, 3))
    res = run_sweep(g)
    assert math.isnan(res.values[0, 0]) and math.isnan(res.values[1, 0])
    assert np.isfinite(res.values[2, 0])
    assert [f["i"] for f in res.failures] == [0, 1]
    assert "sigma" in res.failures[0]["error"]


def test_worker_count_does_not_change_results():
    g = SweepGrid(FM, SweepAxis("omega_m", mev(5), mev(7), 7), SweepAxis("alpha", 2 * PI, 10 * PI, 5))
    ref = run_sweep(g, workers=1).values
    for w in (4, os.cpu_count() or 2):
        assert np.array_equal(run_sweep(g, workers=w).values, ref)


def test_display_units():
    assert display(TwoColor, "delta1", mev(-8))[0] == pytest.approx(-8.0)
    assert display(TwoColor, "alpha1", 3 * PI) == pytest.approx((3.0, "pi"))
    assert display(TwoColor, "tau", 1.5) == (1.5, "ps")


def test_csv_and_json_export(tmp_path):
    g = SweepGrid(FM, SweepAxis("omega_m", mev(5), mev(7), 3), SweepAxis("alpha", 2 * PI, 4 * PI, 2))
    res = run_sweep(g)
    res.to_csv(tmp_path / "m.csv")
    res.to_json(tmp_path / "m.json")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["omega_m [meV]", "alpha [pi]", "f"]
    assert len(rows) == 1 + 6
    assert float(rows[1][0]) == pytest.approx(5.0)
    assert float(rows[2][1]) == pytest.approx(4.0)
    assert float(rows[-1][2]) == res.values[2, 1]
    env = json.load(open(tmp_path / "m.json"))
    assert env["pulse_type"] == "fm_gaussian"
    assert env["axis1"]["unit"] == "meV"
    assert env["values"][2][1] == res.values[2, 1]
    assert "timestamp" in env["metadata"] and "settings" in env["metadata"]


def test_phase_scan_covers_full_circle():
    phis, f = phase_scan(ROW4, n=4)
    assert phis[0] == 0 and phis[-1] == pytest.approx(2 * PI)
    assert len(f) == 4


def test_stripe_onset_on_synthetic_map():
    g = SweepGrid(FM, SweepAxis("omega_m", 1.0, 5.0, 5), SweepAxis("alpha", 0.0, 1.0, 3))
    v = np.array([[0.1, 0.2, 0.3], [0.5, 0.6, 0.4], [0.2, 0.95, 0.3], [0.9, 0.1, 0], [1, 1, 1]])
    res = SweepResult(g, v)
    assert stripe_onset(res, 0.9) == 3.0
    assert stripe_onset(res, 1.5) is None


@given(st.floats(0.5, 3.0))
def test_gradient_orientation_limits(k):
    x1 = np.geomspace(1, 10, 40)
    x2 = np.geomspace(0.1, 5, 30)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    # [TRIVIAL] dependence on x1 only -> 0, on x2 only -> 1, on x1/x2 -> 1/2
    assert gradient_orientation(np.sin(k * X1), x1, x2) == pytest.approx(0.0, abs=1e-12)
    assert gradient_orientation(np.sin(k * X2), x1, x2) == pytest.approx(1.0, abs=1e-12)
    assert gradient_orientation(k * np.log(X1 / X2), x1, x2) == pytest.approx(0.5, abs=1e-12)


def test_gradient_orientation_subblock():
    x1 = np.linspace(1, 2, 10)
    x2 = np.linspace(1, 2, 10)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    v = np.where(X2 < 1.5, X1, X2)
    assert gradient_orientation(v, x1, x2, cols=(0, 4)) == pytest.approx(0.0, abs=1e-12)
    assert gradient_orientation(v, x1, x2, cols=(6, 10)) == pytest.approx(1.0, abs=1e-12)


def test_sweep_metadata_records_settings():
    g = SweepGrid(FM, SweepAxis("alpha", PI, PI, 1))
    res = run_sweep(g, workers=2, gamma=0.001)
    assert res.metadata["gamma"] == 0.001
    assert res.metadata["workers"] == 2
    assert res.metadata["settings"]["step"] == 1e-3
