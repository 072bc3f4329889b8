import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subsearch.environment import (
    CURRENT_HEADER,
    CurrentField,
    FieldFormatError,
    PerturbationSpec,
    PerturbationStream,
    draw_perturbation,
    load_current_field,
    perturbation_table,
    sample_current,
    write_current_field,
)


def _write(path, rows):
    path.write_text(",".join(CURRENT_HEADER) + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


def test_single_node_file_is_constant(tmp_path):
    cf = load_current_field(_write(tmp_path / "c.csv", [(0, 0, 0, 0.1, 0, 0)]))
    assert cf.n_nodes == 1
    for p in ([0, 0, 0], [5e4, -3e3, -4000], [-1, 1, 1]):
        assert np.array_equal(sample_current(cf, p), [0.1, 0.0, 0.0])


def test_two_by_two_lattice_infers_spacing(tmp_path):
    rows = [(x, y, -10, u, 0, 0) for (x, y, u) in
            [(0, 0, 0.1), (500, 0, 0.2), (0, 250, 0.3), (500, 250, 0.4)]]
    cf = load_current_field(_write(tmp_path / "c.csv", rows[::-1]))
    assert cf.shape == (2, 2, 1)
    assert np.array_equal(cf.spacing[:2], [500, 250])
    assert np.array_equal(cf.origin, [0, 0, -10])
    assert cf.uvw[0, 1, 0, 0] == 0.2
    assert cf.uvw[0, 0, 1, 0] == 0.3


@pytest.mark.parametrize("rows", [
    [(0, 0, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0), (0, 1, 0, 0, 0, 0)],  # missing node
    [(0, 0, 0, 0, 0, 0), (0, 0, 0, 1, 0, 0)],  # duplicate
    [(0, 0, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0), (3, 0, 0, 0, 0, 0)],  # uneven axis
])
def test_malformed_lattices_rejected(tmp_path, rows):
    with pytest.raises(FieldFormatError):
        load_current_field(_write(tmp_path / "c.csv", rows))


def test_bad_header_rejected(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x,y,z,u,v,w\n0,0,0,0,0,0\n")
    with pytest.raises(FieldFormatError):
        load_current_field(p)


def test_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    cf = CurrentField([10, -20, -300], [100, 50, 25], rng.normal(size=(3, 3, 2, 4)))
    write_current_field(tmp_path / "c.csv", cf)
    back = load_current_field(tmp_path / "c.csv")
    assert np.array_equal(back.uvw, cf.uvw)
    assert np.allclose(back.origin, cf.origin) and np.allclose(back.spacing, cf.spacing)


def _linear_field():
    # u = x/1000, v = y/1000, w = z/1000 on a 3x3x3 lattice
    o, h = np.array([0.0, 0.0, -200.0]), np.array([100.0, 100.0, 100.0])
    idx = np.indices((3, 3, 3)).astype(float)
    coords = o[:, None, None, None] + h[:, None, None, None] * idx
    return CurrentField(o, h, coords / 1000.0)


def test_node_values_exact():
    cf = _linear_field()
    assert np.allclose(sample_current(cf, [100, 200, -100]), [0.1, 0.2, -0.1], rtol=0, atol=1e-15)


def test_midpoint_interpolation():
    uvw = np.zeros((3, 2, 1, 1))
    uvw[0, 1] = 0.2
    cf = CurrentField([0, 0, 0], [1000, 1, 1], uvw)
    assert math.isclose(sample_current(cf, [500, 0, 0])[0], 0.1)


def test_outside_hull_clamps_to_nearest_node():
    cf = _linear_field()
    assert np.allclose(sample_current(cf, [-1e6, 5e6, 1e5]), [0.0, 0.2, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 250), st.floats(-50, 250), st.floats(-250, 50))
def test_trilinear_reproduces_linear_field_inside_hull(x, y, z):
    cf = _linear_field()
    got = sample_current(cf, [x, y, z])
    want = np.clip([x, y, z], [0, 0, -200], [200, 200, 0]) / 1000.0
    assert np.allclose(got, want, atol=1e-12)


def test_degenerate_ranges():
    zero = PerturbationStream(PerturbationSpec(0.0, 0.0))
    assert all(np.array_equal(zero(t), [0, 0, 0]) for t in range(0, 5000, 300))
    fixed = PerturbationStream(PerturbationSpec(0.2, 0.2, seed=4))
    for t in range(0, 20000, 250):
        assert abs(np.linalg.norm(fixed(t)) - 0.2) <= 1e-12


def test_speed_mean_law_of_large_numbers():
    spec = PerturbationSpec(0.05, 0.30)
    v = perturbation_table(spec, np.random.default_rng(11), 100_000)
    assert abs(np.hypot(v[:, 0], v[:, 1]).mean() / 0.175 - 1) < 0.01


def test_window_is_piecewise_constant():
    spec = PerturbationSpec(tau=600.0, seed=2)
    s = PerturbationStream(spec)
    a = draw_perturbation(spec, s, 0.0)
    assert np.array_equal(a, draw_perturbation(spec, s, 599.9))
    assert not np.array_equal(a, draw_perturbation(spec, s, 600.0))
    assert a[2] == 0.0


def test_stream_order_independent():
    spec = PerturbationSpec(seed=9)
    fwd, back = PerturbationStream(spec), PerturbationStream(spec)
    ts = [0, 700, 1300, 2500]
    assert all(np.array_equal(fwd(t), v) for t, v in zip(ts, [back(t) for t in ts[::-1]][::-1]))


def test_table_matches_stream():
    spec = PerturbationSpec(seed=0)
    table = perturbation_table(spec, np.random.default_rng(5), 4)
    s = PerturbationStream(spec, np.random.default_rng(5))
    assert np.array_equal(table, np.array([s.window(k) for k in range(4)]))


def test_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec(0.3, 0.1)
    with pytest.raises(ValueError):
        PerturbationSpec(tau=0)
