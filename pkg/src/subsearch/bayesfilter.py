"""Bootstrap particle filter for a drifting or sinking target.

Prediction pushes every particle through the kinematics kernel with its own
disturbance draws; the update applies search outcomes cell by cell; systematic
resampling kicks in when the effective sample size drops below a fraction of
the particle count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._io import atomic_csv
from .environment import perturbation_table
from .kinematics import REGIMES, ScenarioParams
from .probgrid import EmptyFieldError, GridSpec, ProbabilityField, cells_of_points

ESTIMATE_HEADER = ["interval", "cell", "prob"]
WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FilterState:
    positions: np.ndarray
    weights: np.ndarray
    t: float = 0.0
    velocities: np.ndarray | None = None
    grounded: np.ndarray | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        p = pos.shape[0]
        if p < 2:
            raise ValueError("a filter needs at least two particles")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size != p or np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be non-negative, one per particle, summing to 1")
        vel = np.zeros((p, 3)) if self.velocities is None else np.array(self.velocities, float)
        gnd = np.zeros(p, bool) if self.grounded is None else np.array(self.grounded, bool)
        for name, arr in (("positions", pos), ("weights", w), ("velocities", vel),
                          ("grounded", gnd)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, positions, t=0.0, velocities=None):
        positions = np.asarray(positions, dtype=float)
        n = positions.shape[0]
        return cls(positions, np.full(n, 1.0 / n), t, velocities)

    def mean_position(self) -> np.ndarray:
        return self.weights @ self.positions


@dataclass(frozen=True)
class Observation:
    interval: int
    searched: tuple
    pd: tuple | float = 1.0
    detected: bool = False
    detection_cell: int | None = None

    def __post_init__(self):
        pds = np.broadcast_to(np.asarray(self.pd, dtype=float), (len(self.searched),))
        if np.any(pds <= 0) or np.any(pds > 1):
            raise ValueError("detection probabilities must lie in (0, 1]")
        if self.detected and self.detection_cell is None:
            raise ValueError("a detection needs its cell")

    def pd_by_cell(self):
        pds = np.broadcast_to(np.asarray(self.pd, dtype=float), (len(self.searched),))
        return dict(zip(self.searched, pds.tolist()))


def ess(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(np.dot(w, w))


def pf_predict(state: FilterState, params: ScenarioParams, dt: float,
               rng: np.random.Generator) -> FilterState:
    """Advance all particles by ``dt`` seconds in steps of ``params.dt``.

    Disturbance windows are anchored to absolute time and drawn window-major
    (every particle's window k before any particle's window k+1), so two
    predictions of ``dt/2`` consume ``rng`` exactly like one of ``dt`` when
    the split falls on a window boundary.
    """
    n_steps = int(round(dt / params.dt))
    if n_steps < 1:
        return state
    tau = params.perturbation.tau
    t0 = state.t
    first = int(math.floor(t0 / tau))
    last = int(math.floor((t0 + (n_steps - 1) * params.dt) / tau))
    n_win = last - first + 1
    table = perturbation_table(params.perturbation, rng, n_win * state.n)
    pert = np.ascontiguousarray(table.reshape(n_win, state.n, 2).transpose(1, 0, 2))

    pos = state.positions.copy()
    vel = state.velocities.copy()
    gnd = state.grounded.copy()
    t_end = np.full(state.n, t0)
    v0h = np.tile(params.initial.velocity[:2], (state.n, 1))
    cf = params.current
    kernels.integrate(pos, vel, v0h, gnd, t_end, t_start=t0, n_steps=n_steps, dt=params.dt,
                      regime=REGIMES[params.regime], a_z=params.a_z, vz_cap=params.vz_cap,
                      seabed=params.seabed_depth, uvw=cf.uvw, origin=cf.origin,
                      spacing=cf.spacing, pert=pert, win_first=first, tau=tau)
    return FilterState(pos, state.weights, t0 + n_steps * params.dt, vel, gnd)


def pf_update(state: FilterState, obs: Observation, grid: GridSpec) -> FilterState:
    """Reweight by the search outcome and renormalise."""
    cells = cells_of_points(grid, state.positions[:, :2])
    w = state.weights.copy()
    if obs.detected:
        pd = obs.pd_by_cell().get(obs.detection_cell, 1.0)
        w *= np.where(cells == obs.detection_cell, pd, 0.0)
    else:
        factor = np.ones(grid.n_cells)
        for cell, pd in obs.pd_by_cell().items():
            factor[cell] = 1.0 - pd
        w *= factor[cells]
    total = w.sum()
    if not total > 0:
        raise EmptyFieldError("observation is inconsistent with every particle")
    return FilterState(state.positions, w / total, state.t, state.velocities, state.grounded)


def pf_resample(state: FilterState, ess_threshold: float = 0.5,
                rng: np.random.Generator | None = None) -> FilterState:
    """Systematic resampling when ESS < ``ess_threshold`` * P."""
    if ess(state.weights) >= ess_threshold * state.n:
        return state
    rng = rng if rng is not None else np.random.default_rng(0)
    p = state.n
    cdf = np.cumsum(state.weights)
    cdf[-1] = 1.0
    u = (rng.random() + np.arange(p)) / p
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), p - 1)
    return FilterState(state.positions[idx], np.full(p, 1.0 / p), state.t,
                       state.velocities[idx], state.grounded[idx])


def pf_field_estimate(state: FilterState, grid: GridSpec) -> ProbabilityField:
    cells = cells_of_points(grid, state.positions[:, :2])
    return ProbabilityField.from_weights(grid, np.bincount(cells, state.weights,
                                                           minlength=grid.n_cells))


def write_estimates_csv(path, fields):
    """One block of nonzero cells per interval."""
    with atomic_csv(path, ESTIMATE_HEADER) as w:
        for k, f in enumerate(fields):
            for cell in np.flatnonzero(f.probs):
                w.writerow([k, int(cell), repr(float(f.probs[cell]))])
