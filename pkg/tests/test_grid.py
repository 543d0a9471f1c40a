import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlheat.grid import ExactTail, Field, Grid, read_field, write_field


def test_defaults():
    assert (Grid.default(1).N, Grid.default(1).L) == (4096, 64)
    assert (Grid.default(2).N, Grid.default(2).L) == (512, 32)
    assert (Grid.default(3).N, Grid.default(3).L) == (128, 16)


@pytest.mark.parametrize("args", [(0, 16, 1.0), (1, 12, 1.0), (1, 2, 1.0), (1, 16, 0.0)])
def test_grid_validation(args):
    with pytest.raises(ValueError):
        Grid(*args)


def test_axis_layout():
    g = Grid(1, 8, 2.0)
    np.testing.assert_allclose(g.axis, [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5])
    assert g.axis[g.origin_index] == 0.0
    assert g.nyquist == pytest.approx(np.pi / 0.5)
    assert g.refine().h == g.h / 2 and g.enlarge(2).h == g.h


def test_trusted_mask_and_crop():
    g = Grid(2, 16, 4.0)
    m = g.trusted_mask(0.5)
    assert m.sum() == 9 ** 2
    big = g.enlarge(2)
    sl = big.crop_slices(g)
    np.testing.assert_allclose(big.points()[sl], g.points())
    with pytest.raises(ValueError):
        g.crop_slices(big)


@given(st.integers(1, 3), st.floats(-1e3, 1e3), st.floats(0, 1e3))
def test_field_roundtrip(tmp_path_factory, d, shift, t):
    g = Grid(d, 8, 3.0)
    vals = np.arange(8 ** d, dtype=float).reshape(g.shape) + shift
    p = tmp_path_factory.mktemp("f") / "x.bin"
    write_field(p, g, vals, t)
    g2, v2, t2 = read_field(p)
    assert g2 == g and t2 == t
    np.testing.assert_array_equal(v2, vals)


def test_read_field_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\0" * 40)
    with pytest.raises(ValueError):
        read_field(p)
    g = Grid(1, 8, 1.0)
    write_field(p, g, np.zeros(8))
    with open(p, "ab") as fh:
        fh.write(b"\0" * 8)
    with pytest.raises(ValueError):
        read_field(p)


def test_field_shape_check():
    with pytest.raises(ValueError):
        Field(Grid(1, 8, 1.0), np.zeros(7))


@given(st.floats(-3.9, 3.9))
def test_evaluate_interpolates_smooth_functions(x):
    g = Grid(1, 256, 8.0)
    f = Field(g, np.exp(-g.axis ** 2))
    assert float(f.evaluate(np.array([x]))[0]) == pytest.approx(np.exp(-x * x), abs=1e-6)


def test_evaluate_uses_tail_outside_and_extends():
    g = Grid(1, 64, 4.0)
    tail = ExactTail(lambda p: 1.0 / (1.0 + np.asarray(p) ** 2))
    f = Field(g, 1.0 / (1.0 + g.axis ** 2), tail)
    assert float(f.evaluate(np.array([10.0]))[0]) == pytest.approx(1 / 101)
    big = f.extended(2)
    np.testing.assert_allclose(big.values, 1.0 / (1.0 + big.grid.axis ** 2), rtol=1e-14)
    assert f.integral() == pytest.approx(np.sum(f.values) * g.h)
