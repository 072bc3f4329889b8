"""Unpowered submersible motion and Monte Carlo ensembles.

Two regimes:

* ``drift`` -- neutrally buoyant; the vehicle is advected horizontally by
  the initial horizontal velocity plus current plus disturbance, depth fixed.
* ``sink`` -- negatively buoyant; constant net downward acceleration ``a_z``
  (optionally capped at a terminal speed) until the seabed, horizontal
  velocity as in the drift regime.

The vehicle is a point mass.  Integration is explicit Euler.  On the step
that crosses the seabed the crossing is located by linear interpolation, the
vehicle is clamped to the bed and its time set to the touchdown instant.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._io import atomic_csv
from .environment import (CurrentField, PerturbationSpec, PerturbationStream,
                          draw_perturbation, perturbation_table, sample_current)
from .probgrid import GridSpec, cell_center, cells_of_points, field_from_particles

TRAJECTORY_HEADER = ["particle", "t_s", "x_m", "y_m", "z_m", "vx_mps", "vy_mps", "vz_mps",
                     "grounded"]
LANDING_HEADER = ["particle", "t_s", "x_m", "y_m", "z_m", "grounded"]
REGIMES = {"drift": kernels.DRIFT, "sink": kernels.SINK}


@dataclass(frozen=True, eq=False)
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    t: float = 0.0
    grounded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", np.array(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "velocity", np.array(self.velocity, dtype=float).reshape(3))
        if self.grounded and np.any(self.velocity != 0):
            raise ValueError("a grounded vehicle has zero velocity")

    def __eq__(self, other):
        return (isinstance(other, VehicleState)
                and np.array_equal(self.position, other.position)
                and np.array_equal(self.velocity, other.velocity)
                and self.t == other.t and self.grounded == other.grounded)


@dataclass(frozen=True, eq=False)
class ScenarioParams:
    regime: str
    initial: VehicleState
    a_z: float = 0.0
    seabed_depth: float = 4000.0
    dt: float = 1.0
    horizon: float = 1800.0
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    current: CurrentField = field(default_factory=CurrentField.constant)
    vz_cap: float = 0.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {sorted(REGIMES)}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be at least one step")
        if not self.seabed_depth > 0:
            raise ValueError("seabed_depth must be positive")
        if self.a_z < 0:
            raise ValueError("a_z is a downward magnitude and must be >= 0")
        z = self.initial.position[2]
        if not -self.seabed_depth <= z <= 0:
            raise ValueError(f"initial depth z={z} outside [-seabed_depth, 0]")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-9))

    def with_(self, **changes) -> "ScenarioParams":
        return replace(self, **changes)


def step_state(state: VehicleState, params: ScenarioParams, perturb) -> VehicleState:
    """One explicit-Euler step of length ``params.dt`` under disturbance ``perturb``."""
    if state.grounded:
        raise ValueError("cannot step a grounded vehicle")
    dt = params.dt
    x, y, z = state.position
    cur = sample_current(params.current, state.position)
    v0 = params.initial.velocity
    hx = v0[0] + cur[0] + perturb[0]
    hy = v0[1] + cur[1] + perturb[1]
    if params.regime == "drift":
        return VehicleState([x + hx * dt, y + hy * dt, z], [hx, hy, 0.0], state.t + dt)

    vz = state.velocity[2]
    z_new = z + vz * dt
    vz_new = vz - params.a_z * dt
    if params.vz_cap > 0 and vz_new < -params.vz_cap:
        vz_new = -params.vz_cap
    seabed = params.seabed_depth
    if z_new <= -seabed:
        frac = (z + seabed) / (z - z_new)
        return VehicleState([x + hx * (frac * dt), y + hy * (frac * dt), -seabed],
                            np.zeros(3), state.t + frac * dt, grounded=True)
    return VehicleState([x + hx * dt, y + hy * dt, min(z_new, 0.0)], [hx, hy, vz_new],
                        state.t + dt)


def particle_rng(master_seed: int, i: int) -> np.random.Generator:
    """Independent stream for particle ``i`` (depends only on the pair)."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(i,)))


def _n_windows(params: ScenarioParams) -> int:
    t_last = params.initial.t + params.n_steps * params.dt
    return int(math.floor(t_last / params.perturbation.tau)) + 1


def simulate_trajectory(params: ScenarioParams, stream) -> list:
    """States at t0, t0+dt, ... up to the horizon, ending early on grounding.

    ``stream`` is a numpy Generator (or a ready :class:`PerturbationStream`).
    """
    if not isinstance(stream, PerturbationStream):
        stream = PerturbationStream(params.perturbation, stream)
    state = params.initial
    out = [state]
    for s in range(params.n_steps):
        t = params.initial.t + s * params.dt
        state = step_state(state, params, draw_perturbation(params.perturbation, stream, t))
        out.append(state)
        if state.grounded:
            break
    return out


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Recorded particle states plus exact final states.

    ``positions``/``velocities`` are (N, R, 3) samples at ``times`` (R,);
    samples after a particle grounds repeat its grounded state.
    """

    params: ScenarioParams
    master_seed: int
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    grounded: np.ndarray
    final_positions: np.ndarray
    final_velocities: np.ndarray
    final_times: np.ndarray
    final_grounded: np.ndarray

    @property
    def n(self) -> int:
        return self.final_positions.shape[0]

    def positions_at(self, t: float) -> np.ndarray:
        """Recorded positions at the last sample time <= ``t``."""
        r = int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1
        return self.positions[:, max(r, 0)]


def _draw_tables(params, master_seed, idx, n_win):
    return np.stack([perturbation_table(params.perturbation, particle_rng(master_seed, int(i)),
                                        n_win) for i in idx])


def run_ensemble(params: ScenarioParams, n: int, master_seed: int, *, record_dt: float = 60.0,
                 threads: int = 1) -> Ensemble:
    """Integrate ``n`` particles with streams derived from ``(master_seed, i)``.

    Output is independent of ``threads``: particles never share state.
    """
    if n < 1:
        raise ValueError("need at least one particle")
    every = max(1, int(round(record_dt / params.dt)))
    n_steps = params.n_steps
    n_rec = n_steps // every + 1
    n_win = _n_windows(params)

    pos = np.tile(params.initial.position, (n, 1))
    vel = np.tile(params.initial.velocity, (n, 1))
    v0h = np.ascontiguousarray(vel[:, :2])
    gnd = np.full(n, params.initial.grounded)
    t_end = np.full(n, params.initial.t)
    rec_pos = np.empty((n, n_rec, 3))
    rec_vel = np.empty((n, n_rec, 3))
    rec_gnd = np.empty((n, n_rec), dtype=np.bool_)
    pert = _draw_tables(params, master_seed, range(n), n_win)
    cf = params.current

    def work(sl):
        kernels.integrate(pos[sl], vel[sl], v0h[sl], gnd[sl], t_end[sl],
                          t_start=params.initial.t, n_steps=n_steps, dt=params.dt,
                          regime=REGIMES[params.regime], a_z=params.a_z, vz_cap=params.vz_cap,
                          seabed=params.seabed_depth, uvw=cf.uvw, origin=cf.origin,
                          spacing=cf.spacing, pert=pert[sl], win_first=0,
                          tau=params.perturbation.tau, record_every=every,
                          rec_pos=rec_pos[sl], rec_vel=rec_vel[sl], rec_gnd=rec_gnd[sl])

    threads = max(1, min(int(threads), n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if threads == 1:
        work(slices[0])
    else:
        # kernels write disjoint row blocks; with numba they release the GIL
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, slices))

    times = params.initial.t + np.arange(n_rec) * every * params.dt
    return Ensemble(params, master_seed, times, rec_pos, rec_vel, rec_gnd,
                    pos, vel, t_end, gnd)


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    mean_final: np.ndarray
    modal_final: np.ndarray
    max_offset: float
    offsets: np.ndarray
    final_positions: np.ndarray
    grid: GridSpec


def summary_grid(e: Ensemble, gs: float = 100.0) -> GridSpec:
    """Grid of ``gs`` cells anchored on multiples of ``gs`` covering every final position."""
    xy = e.final_positions[:, :2]
    lo = np.floor(xy.min(axis=0) / gs) * gs
    hi = (np.floor(xy.max(axis=0) / gs) + 1) * gs
    return GridSpec(gs, hi[0] - lo[0], hi[1] - lo[1], (lo[0], lo[1]))


def ensemble_summary(e: Ensemble, grid: GridSpec | None = None) -> EnsembleSummary:
    """Mean/modal final position and horizontal offsets from the start point.

    The modal position is the centre of the densest cell of ``grid`` (default
    :func:`summary_grid`), at the mean depth of the particles in that cell.
    """
    if e.n < 1:
        raise ValueError("empty ensemble")
    grid = grid or summary_grid(e)
    final = e.final_positions
    start = e.params.initial.position
    offsets = np.hypot(final[:, 0] - start[0], final[:, 1] - start[1])
    hist = field_from_particles(grid, final)
    mode = hist.argmax()
    in_mode = cells_of_points(grid, final[:, :2]) == mode
    cx, cy = cell_center(grid, mode)
    modal = np.array([cx, cy, final[in_mode, 2].mean()])
    return EnsembleSummary(final.mean(axis=0), modal, float(offsets.max()), offsets, final, grid)


def write_trajectories_csv(path, e: Ensemble):
    def row(i, t, p, v, g):
        return [i, f"{t:.6f}", *(f"{c:.6f}" for c in p), *(f"{c:.6f}" for c in v), int(g)]

    with atomic_csv(path, TRAJECTORY_HEADER) as w:
        for i in range(e.n):
            t_fin = e.final_times[i]
            last = None
            for r, t in enumerate(e.times):
                if t > t_fin + 1e-9:
                    break
                w.writerow(row(i, t, e.positions[i, r], e.velocities[i, r], e.grounded[i, r]))
                last = t
            if last is None or t_fin > last + 1e-9:
                # touchdown between samples closes the trajectory
                w.writerow(row(i, t_fin, e.final_positions[i], e.final_velocities[i],
                               e.final_grounded[i]))


def write_landings_csv(path, e: Ensemble):
    with atomic_csv(path, LANDING_HEADER) as w:
        for i in range(e.n):
            w.writerow([i, f"{e.final_times[i]:.6f}", *(f"{c:.6f}" for c in e.final_positions[i]),
                        int(e.final_grounded[i])])
