import math

import numpy as np
import pytest

from oracles import sink_grounding_time
from subsearch.environment import CurrentField, PerturbationSpec, PerturbationStream
from subsearch.kinematics import (
    ScenarioParams,
    VehicleState,
    ensemble_summary,
    particle_rng,
    run_ensemble,
    simulate_trajectory,
    step_state,
    write_landings_csv,
    write_trajectories_csv,
)

QUIET = PerturbationSpec(0.0, 0.0)


def drift(v=(0, 0, 0), **kw):
    kw.setdefault("perturbation", QUIET)
    return ScenarioParams("drift", VehicleState([0, 0, -1000], v), **kw)


def sink(**kw):
    kw.setdefault("perturbation", QUIET)
    return ScenarioParams("sink", VehicleState([0, 0, -1000], [0, 0, -3]), a_z=2.0, **kw)


def test_drift_equilibrium():
    s = step_state(drift().initial, drift(), np.zeros(3))
    assert np.array_equal(s.position, [0, 0, -1000]) and s.t == 1.0


def test_sink_hand_step():
    p = sink()
    s = step_state(p.initial, p, np.zeros(3))
    assert s.velocity[2] == -5.0 and s.position[2] == -1003.0


def test_sink_clamps_at_seabed():
    p = ScenarioParams("sink", VehicleState([0, 0, -3990], [0, 0, -110]), seabed_depth=4000,
                       perturbation=QUIET)
    s = step_state(p.initial, p, np.zeros(3))
    assert s.position[2] == -4000 and s.grounded and not s.velocity.any()
    with pytest.raises(ValueError):
        step_state(s, p, np.zeros(3))


def test_uniform_current_displacement():
    p = drift(current=CurrentField.constant(0.1), horizon=1000)
    traj = simulate_trajectory(p, np.random.default_rng(0))
    assert len(traj) == 1001
    assert np.allclose(traj[-1].position - p.initial.position, [100, 0, 0], atol=1e-9)


def test_sink_grounds_near_analytic_time():
    traj = simulate_trajectory(sink(horizon=200), np.random.default_rng(0))
    t_exact = sink_grounding_time(-1000, -3, 2, 4000)
    assert traj[-1].grounded
    assert abs(traj[-1].t - t_exact) <= 1.0
    assert math.isclose(t_exact, 53.29, abs_tol=0.01)


def test_directional_drift_distance():
    p = drift(v=(0.1, 0.2, 0), horizon=4470)
    end = simulate_trajectory(p, np.random.default_rng(0))[-1]
    assert abs(np.hypot(*end.position[:2]) - 1000) < 1.0


def test_single_particle_ensemble_matches_trajectory():
    p = ScenarioParams("sink", VehicleState([10, 20, -3000], [0.1, -0.2, -1]), a_z=0.05,
                       horizon=1800)
    e = run_ensemble(p, 1, 42, record_dt=1.0)
    traj = simulate_trajectory(p, particle_rng(42, 0))
    assert np.allclose(e.final_positions[0], traj[-1].position, rtol=0, atol=1e-9)
    assert math.isclose(e.final_times[0], traj[-1].t, abs_tol=1e-9)
    n = len(traj)
    assert np.allclose(e.positions[0, :n], [s.position for s in traj], atol=1e-9)


def test_ensemble_reproducible_and_thread_independent():
    p = drift(perturbation=PerturbationSpec(), horizon=1200)
    a = run_ensemble(p, 97, 5)
    b = run_ensemble(p, 97, 5, threads=4)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.final_positions, b.final_positions)
    c = run_ensemble(p, 97, 6)
    assert not np.array_equal(a.final_positions, c.final_positions)


def test_particle_streams_do_not_depend_on_n():
    p = drift(perturbation=PerturbationSpec(), horizon=900)
    small, big = run_ensemble(p, 10, 1), run_ensemble(p, 50, 1)
    assert np.array_equal(small.final_positions, big.final_positions[:10])


def test_summary_identical_particles():
    e = run_ensemble(drift(horizon=60), 5, 0)
    s = ensemble_summary(e)
    assert np.allclose(s.mean_final, [0, 0, -1000]) and s.max_offset == 0.0
    assert np.allclose(s.modal_final[2], -1000)


def test_offset_grows_with_horizon():
    p = drift(perturbation=PerturbationSpec(), horizon=600)
    short = ensemble_summary(run_ensemble(p, 400, 3)).offsets
    long = ensemble_summary(run_ensemble(p.with_(horizon=2400), 400, 3)).offsets
    assert np.median(long) > np.median(short)
    assert long.max() > short.max()


def test_params_validation():
    with pytest.raises(ValueError):
        ScenarioParams("float", VehicleState([0, 0, 0], [0, 0, 0]))
    with pytest.raises(ValueError):
        ScenarioParams("sink", VehicleState([0, 0, -5000], [0, 0, 0]), seabed_depth=4000)
    with pytest.raises(ValueError):
        ScenarioParams("sink", VehicleState([0, 0, -5], [0, 0, 0]), a_z=-1)


def test_csv_outputs(tmp_path):
    e = run_ensemble(sink(horizon=120), 3, 0, record_dt=20)
    write_trajectories_csv(tmp_path / "t.csv", e)
    write_landings_csv(tmp_path / "l.csv", e)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "particle,t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps,grounded"
    # samples at 0, 20, 40 then the touchdown row
    assert [ln.split(",")[1] for ln in lines[1:5]] == ["0.000000", "20.000000", "40.000000",
                                                        f"{e.final_times[0]:.6f}"]
    land = (tmp_path / "l.csv").read_text().splitlines()
    assert len(land) == 4 and land[1].endswith(",-4000.000000,1")


def test_stream_argument_accepts_prepared_stream():
    p = drift(perturbation=PerturbationSpec(seed=3), horizon=30)
    a = simulate_trajectory(p, PerturbationStream(p.perturbation))
    b = simulate_trajectory(p, np.random.default_rng(3))
    assert a[-1] == b[-1]
