import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gluebench.grid import Box, ScalarField, SymTensorField, VectorField, build_domain
from gluebench.io import fmt, read_field_csv, read_rows, read_vtk, write_field_csv, write_rows, write_vtk


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_roundtrips(x):
    assert float(fmt(x)) == x


def test_fmt_types():
    assert fmt(True) == "1"
    assert fmt(np.int64(7)) == "7"
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt("abc") == "abc"
    assert fmt(math.inf) == "inf"


@pytest.fixture
def dom3():
    return build_domain(Box(), 0.5, ((0.0, 0.0, 0.0), (1.5, 1.0, 2.0)))


def test_vtk_roundtrip(tmp_path, dom3, rng):
    d = dom3
    s = ScalarField(d, rng.standard_normal(d.shape))
    v = VectorField(d, tuple(rng.standard_normal(d.face_coords(a).shape[1:]) for a in range(3)))
    t = rng.standard_normal((3, 3) + d.shape)
    t = t + t.swapaxes(0, 1)
    write_vtk(tmp_path / "f.vtk", d, {"s": s, "v": v, "t": SymTensorField.from_full(d, t)})
    meta, arrays = read_vtk(tmp_path / "f.vtk")
    assert meta["dimensions"] == d.shape
    assert meta["origin"] == pytest.approx((0.25, 0.25, 0.25))
    assert np.array_equal(arrays["s"], s.values)
    assert np.array_equal(arrays["v"], v.at_cells())
    assert np.array_equal(arrays["t_12"], t[1, 2])


def test_vtk_2d_pads_to_three_dimensions(tmp_path):
    d = build_domain(Box(), 1.0, ((0.0, 0.0), (3.0, 2.0)))
    write_vtk(tmp_path / "f.vtk", d, {"a": np.arange(6.0).reshape(3, 2)})
    text = (tmp_path / "f.vtk").read_text().splitlines()
    assert "DIMENSIONS 3 2 1" in text
    # x runs fastest
    assert text[text.index("LOOKUP_TABLE default") + 1 :][:3] == ["0", "2", "4"]


def test_field_csv_roundtrip(tmp_path, dom3, rng):
    d = dom3
    s = ScalarField(d, rng.standard_normal(d.shape))
    write_field_csv(tmp_path / "f.csv", d, {"s": s})
    cols = read_field_csv(tmp_path / "f.csv")
    assert np.array_equal(cols["s"], s.values.ravel())
    assert np.allclose(cols["z"], d.cell_coords()[2].ravel())


def test_rows_roundtrip(tmp_path):
    write_rows(tmp_path / "r.csv", [{"a": 1, "b": 0.1}, {"a": 2, "b": math.nan}], ["a", "b"])
    rows = read_rows(tmp_path / "r.csv")
    assert rows[0] == {"a": "1", "b": "0.10000000000000001"}
    assert rows[1]["b"] == "nan"
