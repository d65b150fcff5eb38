import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evcharge.signals import (
    SeriesError, TimeSeries, energy_cost, interval_index, load_series, value_at, write_series,
)


def test_two_segment_series():
    s = load_series("time_s,value\n0,0.30\n43200,0.20\n")
    assert s.breakpoints == (0.0, 43200.0)
    assert s.values == (0.30, 0.20)
    assert value_at(s, 43200) == 0.20
    assert value_at(s, 43199.9) == 0.30


def test_single_row_is_constant():
    s = load_series("time_s,value\n0,0.25\n")
    assert all(value_at(s, t) == 0.25 for t in (0, 1, 1e5, 1e9))


@pytest.mark.parametrize("text, msg", [
    ("time_s,value\n10,1\n5,2\n", "unsorted at row 2"),
    ("time_s,value\n0,1\n0,2\n", "duplicate timestamp at row 2"),
    ("time_s,value\n0,1\n5,abc\n", "non-numeric cell at row 2"),
    ("time_s,value\n", "no data rows"),
])
def test_malformed_series(text, msg):
    with pytest.raises(SeriesError, match=msg):
        load_series(text)


def test_missing_file_names_path(tmp_path):
    p = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_series(p)


def test_before_first_breakpoint_is_error():
    s = load_series("time_s,value\n100,1\n")
    with pytest.raises(SeriesError):
        value_at(s, 50)


def test_roundtrip(tmp_path):
    s = load_series("time_s,value\n0,0.30\n43200,0.20\n")
    write_series(s, tmp_path / "p.csv")
    back = load_series(tmp_path / "p.csv")
    assert (back.breakpoints, back.values) == (s.breakpoints, s.values)


@pytest.mark.parametrize("t, k", [(0, 0), (900, 1), (899.999, 0), (1799.9999999, 1), (8100, 9)])
def test_interval_index(t, k):
    assert interval_index(t, 900) == k


def test_flat_price_cost():
    flat = TimeSeries.constant(0.30)
    assert energy_cost([(0, 3600, 10_000)], flat) == pytest.approx(3.00, abs=1e-12)
    assert energy_cost([(50, 50, 10_000)], flat) == 0.0


def test_cost_straddling_price_step():
    s = load_series("time_s,value\n0,0.30\n3600,0.20\n")
    assert energy_cost([(0, 7200, 1000)], s) == pytest.approx(0.50, abs=1e-12)


@given(st.floats(0, 80_000), st.floats(1, 10_000), st.floats(0, 1),
       st.floats(1, 50_000))
def test_cost_additive_across_split(start, length, frac, watts):
    s = load_series("time_s,value\n0,0.30\n21600,0.12\n43200,0.20\n64800,0.41\n")
    cut = start + frac * length
    whole = energy_cost([(start, start + length, watts)], s)
    parts = energy_cost([(start, cut, watts), (cut, start + length, watts)], s)
    assert math.isclose(whole, parts, rel_tol=1e-9, abs_tol=1e-9)


@given(st.lists(st.tuples(st.integers(0, 10**6), st.floats(-1e3, 1e3)), min_size=1, max_size=20,
                unique_by=lambda r: r[0]))
def test_value_at_reproduces_rows(rows):
    rows = sorted(rows)
    text = "time_s,value\n" + "".join(f"{t},{v!r}\n" for t, v in rows)
    s = load_series(text)
    assert all(value_at(s, t) == v for t, v in rows)


@given(st.lists(st.floats(0, 1e6), min_size=2, max_size=50), st.sampled_from([60.0, 900.0, 3600.0]))
def test_interval_index_monotone(ts, width):
    ts = sorted(ts)
    ks = [interval_index(t, width) for t in ts]
    assert ks == sorted(ks)
    for k in range(0, 50):
        assert interval_index(k * width, width) == k
        if k:
            assert interval_index(np.nextafter(k * width, -1), width) == k - 1
