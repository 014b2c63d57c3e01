import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polylab import storage
from polylab.errors import ConfigError, OutOfRange
from polylab.integrator import IntegrationControls, evaluate, integrate
from polylab.negpower import extinction_scan
from polylab.radial_system import Exp, ProblemSpec
from polylab.shooting import scan_n2


@given(st.floats(allow_nan=False))
def test_fmt_round_trips_every_double(x):
    assert float(storage.fmt(x)) == x


def test_fmt_specials():
    assert storage.fmt(None) == ""
    assert storage.fmt(math.nan) == "nan"
    assert storage.fmt(-math.inf) == "-inf"


def test_json_is_strict_and_sorted(tmp_path):
    p = tmp_path / "a.json"
    storage.dump_json({"b": math.inf, "a": [1.0, math.nan], "c": np.float64(0.5)}, p)
    text = p.read_text()
    json.loads(text)  # strict JSON
    assert text.index('"a"') < text.index('"b"')
    back = storage.load_json(p)
    assert back["b"] == math.inf and math.isnan(back["a"][1]) and back["c"] == 0.5


@pytest.mark.parametrize("spec", [
    ProblemSpec.exponential(3, -2.0),
    ProblemSpec(4, 2, Exp(), (0.0, -1.0, 0.5, -2.0)),
    ProblemSpec.negative_power(3, 1.0, 1.0, -1.0),
])
def test_trajectory_round_trip(tmp_path, spec):
    t = integrate(spec, IntegrationControls(r_max=8.0))
    storage.write_trajectory(t, tmp_path / "t.csv")
    back = storage.read_trajectory(tmp_path / "t.csv")
    assert back.spec == t.spec and back.controls == t.controls and back.termination == t.termination
    assert np.array_equal(back.r, t.r) and np.array_equal(back.y, t.y)
    assert np.array_equal(back.error_estimates, t.error_estimates)
    # between nodes the cubic Hermite reconstruction stays close to the original dense output
    mid = 0.5 * (t.r[len(t.r) // 2] + t.r[len(t.r) // 2 + 1])
    assert np.allclose(evaluate(back, mid).y, evaluate(t, mid).y, rtol=1e-6, atol=1e-8)
    with pytest.raises(OutOfRange):
        evaluate(back, t.r_last * 2)
    meta = storage.load_json(tmp_path / "t.json")
    assert meta["max_error_estimate"] == pytest.approx(float(np.max(t.error_estimates)))


def test_trajectory_header_check(tmp_path):
    t = integrate(ProblemSpec.exponential(3, -2.0), IntegrationControls(r_max=4.0))
    storage.write_trajectory(t, tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text().replace("v1p", "vx", 1)
    (tmp_path / "t.csv").write_text(text)
    with pytest.raises(ConfigError):
        storage.read_trajectory(tmp_path / "t.csv")


def test_scan_round_trip(tmp_path):
    recs = scan_n2([-50.0, -1.0, 5.0])
    storage.write_scan(recs, tmp_path / "s.csv")
    back = storage.read_scan(tmp_path / "s.csv")
    assert [r.init for r in back] == [r.init for r in recs]
    assert [r.row() for r in back] == [r.row() for r in recs]


def test_extinction_round_trip(tmp_path):
    recs = extinction_scan(2.0, a_grid=(1.0,), b_grid=(-1.0, 4.0))
    storage.write_extinction_scan(recs, tmp_path / "e.csv")
    back = storage.read_extinction_scan(tmp_path / "e.csv")
    assert [r.row() for r in back] == [r.row() for r in recs]


def test_residuals_round_trip(tmp_path):
    rows = [(20.0, -30.5, -30.4999, -1e-7), (40.0, -64.9, -64.8999, 3.3e-300)]
    storage.write_residuals(rows, tmp_path / "r.csv")
    assert storage.read_residuals(tmp_path / "r.csv") == rows


def test_output_dir_collision(tmp_path):
    out = storage.prepare_output_dir(tmp_path / "o", expect=["x.csv"])
    (out / "x.csv").write_text("1")
    with pytest.raises(ConfigError):
        storage.prepare_output_dir(out, expect=["x.csv"])
    assert storage.prepare_output_dir(out, force=True, expect=["x.csv"]) == out
    (tmp_path / "f").write_text("")
    with pytest.raises(ConfigError):
        storage.prepare_output_dir(tmp_path / "f")
