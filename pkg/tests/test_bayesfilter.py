import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subsearch import bayesfilter as bf
from subsearch.environment import CurrentField, PerturbationSpec
from subsearch.kinematics import ScenarioParams, VehicleState
from subsearch.probgrid import EmptyFieldError, GridSpec

G = GridSpec(1.0, 4, 1)


def state(xs, w=None):
    pos = np.array([[x, 0.5, -10.0] for x in xs])
    return bf.FilterState.uniform(pos) if w is None else bf.FilterState(pos, w)


def test_ess_values():
    assert bf.ess(np.full(8, 1 / 8)) == pytest.approx(8)
    assert bf.ess([1, 0, 0]) == 1
    assert bf.ess([0.7, 0.1, 0.1, 0.1]) == pytest.approx(1 / 0.52)


def test_predict_uniform_current_shift():
    p = ScenarioParams("drift", VehicleState([0, 0, -10], [0, 0, 0]),
                       perturbation=PerturbationSpec(0, 0), current=CurrentField.constant(0.1))
    s = state([0.1, 1.3, 2.7], [0.2, 0.3, 0.5])
    out = bf.pf_predict(s, p, 120.0, np.random.default_rng(0))
    assert np.allclose(out.positions[:, 0] - s.positions[:, 0], 12.0)
    assert np.array_equal(out.weights, s.weights) and out.t == 120.0


def test_predict_split_matches_whole_on_window_boundary():
    p = ScenarioParams("drift", VehicleState([0, 0, -10], [0, 0, 0]), dt=10.0)
    s = bf.FilterState.uniform(np.zeros((6, 3)) + [0, 0, -10])
    whole = bf.pf_predict(s, p, 1200, np.random.default_rng(1))
    rng = np.random.default_rng(1)
    half = bf.pf_predict(bf.pf_predict(s, p, 600, rng), p, 600, rng)
    assert np.allclose(whole.positions, half.positions, atol=1e-9)


def test_update_miss_on_empty_cell_is_noop():
    s = state([0.5, 0.6, 1.5])
    out = bf.pf_update(s, bf.Observation(0, (3,)), G)
    assert np.array_equal(out.weights, s.weights)


def test_update_miss_halves_support():
    s = state([0.5, 0.6, 1.5, 1.6])
    out = bf.pf_update(s, bf.Observation(0, (0,), 1.0), G)
    assert np.allclose(out.weights, [0, 0, 0.5, 0.5])


def test_update_partial_detection_probability():
    s = state([0.5, 1.5])
    out = bf.pf_update(s, bf.Observation(0, (0,), 0.5), G)
    assert np.allclose(out.weights, [1 / 3, 2 / 3])


def test_detection_collapses_support():
    s = state([0.5, 1.5, 1.6, 2.5])
    out = bf.pf_update(s, bf.Observation(0, (1,), 1.0, True, 1), G)
    assert np.allclose(out.weights, [0, 0.5, 0.5, 0])
    assert bf.pf_field_estimate(out, G)[1] == 1.0


def test_inconsistent_observation_raises():
    with pytest.raises(EmptyFieldError):
        bf.pf_update(state([0.5, 0.6]), bf.Observation(0, (0,)), G)


def test_resample_rules():
    s = state([0.5, 1.5, 2.5, 3.5])
    assert bf.pf_resample(s, 0.5) is s
    one = state([0.5, 1.5, 2.5, 3.5], [0, 0, 1, 0])
    r = bf.pf_resample(one, 0.5, np.random.default_rng(0))
    assert np.all(r.positions[:, 0] == 2.5) and np.allclose(r.weights, 0.25)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=60), st.integers(0, 2**32 - 1))
def test_systematic_resample_counts(w, seed):
    w = np.array(w)
    if w.sum() == 0:
        w[0] = 1
    w = w / w.sum()
    s = bf.FilterState(np.column_stack([np.arange(w.size), np.zeros(w.size), np.zeros(w.size)]),
                       w)
    r = bf.pf_resample(s, 1.01, np.random.default_rng(seed))
    counts = np.bincount(r.positions[:, 0].astype(int), minlength=w.size)
    # systematic resampling keeps every count within one of its expectation
    assert np.all(np.abs(counts - w.size * w) < 1 + 1e-9)


def test_field_estimate_counts():
    f = bf.pf_field_estimate(state([0.5, 0.5, 0.5, 2.5]), G)
    assert f.probs.tolist() == [0.75, 0, 0.25, 0]


def test_validation():
    with pytest.raises(ValueError):
        bf.FilterState(np.zeros((1, 3)), [1.0])
    with pytest.raises(ValueError):
        bf.FilterState(np.zeros((2, 3)), [0.5, 0.6])
    with pytest.raises(ValueError):
        bf.Observation(0, (1,), 0.0)
    with pytest.raises(ValueError):
        bf.Observation(0, (1,), 1.0, detected=True)


def test_estimates_csv(tmp_path):
    fields = [bf.pf_field_estimate(state([0.5, 2.5]), G),
              bf.pf_field_estimate(state([3.5, 3.5]), G)]
    bf.write_estimates_csv(tmp_path / "e.csv", fields)
    assert (tmp_path / "e.csv").read_text().splitlines() == [
        "interval,cell,prob", "0,0,0.5", "0,2,0.5", "1,3,1.0"]
