"""Scenario configuration: flat ``key = value`` files with units in the key names.

Lines starting with ``#`` are comments.  Unknown keys are rejected.  Shipped
scenarios live in ``subsearch/scenarios`` and can be named without a path.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from .environment import CurrentField, PerturbationSpec, load_current_field
from .kinematics import ScenarioParams, VehicleState, run_ensemble
from .planner import SearchSchedule, deploy_sonars
from .probgrid import GridSpec, cell_of_point, cells_of_points, grid_size_from_sweep


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    # kinematics
    regime: str = "drift"
    x0_km: float = 4.0
    y0_km: float = 3.0
    z0_km: float = -1.0
    vx0_mps: float = 0.0
    vy0_mps: float = 0.0
    vz0_mps: float = 0.0
    az_mps2: float = 0.0
    vz_cap_mps: float = 0.0
    seabed_km: float = 4.0
    dt_s: float = 1.0
    horizon_s: float = 1200.0
    current_csv: str = ""
    # disturbance
    pert_speed_min_mps: float = 0.05
    pert_speed_max_mps: float = 0.30
    pert_tau_s: float = 600.0
    particles: int = 1000
    summary_gs_m: float = 100.0
    # grid (cell size from sweep geometry unless gs_m > 0)
    gs_m: float = 0.0
    swath_m: float = 120.0
    overlap: float = 0.25
    turns: int = 3
    grid_cols: int = 31
    grid_rows: int = 31
    # prior
    prior: str = "poisson"
    m_p: float = 0.2
    prior_max_radius: int = -1
    # schedule
    t0_min: float = 20.0
    ti_min: float = 30.0
    n_intervals: int = 10
    # sonars
    sonars: int = 2
    sonar_offset_km: float = 0.2
    sonar_speed_mps: float = 0.0
    pd: float = 1.0
    policy: str = "greedy"
    teleport: bool = False
    # mission
    target: str = "static"
    belief: str = "grid"
    filter_particles: int = 500
    ess_threshold: float = 0.5
    filter_dt_s: float = 60.0
    replications: int = 500
    seed: int = 7

    def __post_init__(self):
        checks = [
            (self.regime in ("drift", "sink"), "regime must be drift or sink"),
            (self.prior in ("poisson", "particles"), "prior must be poisson or particles"),
            (self.policy in ("greedy", "sweep"), "policy must be greedy or sweep"),
            (self.target in ("static", "moving"), "target must be static or moving"),
            (self.belief in ("grid", "poisson", "filter"), "belief must be grid, poisson or filter"),
            (self.particles >= 1, "particles must be >= 1"),
            (self.filter_particles >= 2, "filter_particles must be >= 2"),
            (self.sonars >= 1, "sonars must be >= 1"),
            (self.replications >= 1, "replications must be >= 1"),
            (0 < self.pd <= 1, "pd must be in (0, 1]"),
            (self.grid_cols >= 1 and self.grid_rows >= 1, "grid needs at least one cell"),
            (self.t0_min > 0 and self.ti_min > 0 and self.n_intervals >= 1, "bad schedule"),
            (0 <= self.ess_threshold <= 1, "ess_threshold must be in [0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.kinematics()
            self.grid()
        except ConfigError:
            raise
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None

    # -- derived objects ----------------------------------------------------

    @property
    def lkp(self):
        """Last known position in metres."""
        return np.array([self.x0_km, self.y0_km, self.z0_km]) * 1000.0

    @property
    def cell_size(self) -> float:
        if self.gs_m > 0:
            return self.gs_m
        return grid_size_from_sweep(self.swath_m, self.overlap, self.turns)

    def current(self) -> CurrentField:
        if self.current_csv:
            return load_current_field(self.current_csv)
        return CurrentField.constant()

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.pert_speed_min_mps, self.pert_speed_max_mps, self.pert_tau_s,
                                self.seed)

    def kinematics(self, **overrides) -> ScenarioParams:
        p = ScenarioParams(
            regime=self.regime,
            initial=VehicleState(self.lkp, [self.vx0_mps, self.vy0_mps, self.vz0_mps]),
            a_z=self.az_mps2, seabed_depth=self.seabed_km * 1000.0, dt=self.dt_s,
            horizon=self.horizon_s, perturbation=self.perturbation(), current=self.current(),
            vz_cap=self.vz_cap_mps)
        return p.with_(**overrides) if overrides else p

    def grid(self) -> GridSpec:
        x, y = self.lkp[:2]
        return GridSpec.centered_on(x, y, self.cell_size, self.grid_cols, self.grid_rows)

    def schedule(self) -> SearchSchedule:
        return SearchSchedule(self.t0_min * 60.0, self.ti_min * 60.0, self.n_intervals)

    def sonar_speed(self) -> float:
        """Towing speed that sweeps one cell per interval in ``turns`` passes."""
        if self.sonar_speed_mps > 0:
            return self.sonar_speed_mps
        return self.turns * self.cell_size / (self.ti_min * 60.0)

    def make_sonars(self, k: int | None = None):
        x, y = self.lkp[:2]
        return deploy_sonars(self.grid(), x, y, self.sonars if k is None else k,
                             offset=self.sonar_offset_km * 1000.0, speed=self.sonar_speed(),
                             swath=self.swath_m, overlap=self.overlap, t_i=self.ti_min * 60.0,
                             pd=self.pd)

    def center_cell(self) -> int:
        x, y = self.lkp[:2]
        return cell_of_point(self.grid(), x, y)

    def max_radius(self):
        return None if self.prior_max_radius < 0 else self.prior_max_radius

    # -- serialisation --------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def _coerce(name, raw):
    kind = _FIELDS[name].type
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError(raw)
            return int(v)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError(raw)
            return v
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None


def parse_pairs(pairs, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values = {}
    for key, raw in pairs:
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    base = base or ScenarioConfig()
    try:
        return base.replace(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        pairs.append((key, raw))
    return parse_pairs(pairs, base)


def shipped_scenarios():
    root = resources.files("subsearch") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_config(name_or_path: str) -> ScenarioConfig:
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            text = fh.read()
    else:
        res = resources.files("subsearch") / "scenarios" / f"{name_or_path}.cfg"
        if not res.is_file():
            raise ConfigError(f"no scenario file or shipped scenario named {name_or_path!r} "
                              f"(shipped: {', '.join(shipped_scenarios())})")
        text = res.read_text()
    return parse_config(text)


def override(cfg: ScenarioConfig, assignments) -> ScenarioConfig:
    """Apply ``key=value`` strings (from ``--set``)."""
    pairs = []
    for a in assignments or ():
        if "=" not in a:
            raise ConfigError(f"--set expects key=value, got {a!r}")
        pairs.append(tuple(a.split("=", 1)))
    return parse_pairs(pairs, cfg) if pairs else cfg


# --------------------------------------------------------------------------
# scenario assembly shared by the CLI and the acceptance suite
# --------------------------------------------------------------------------


def prediction_ensemble(cfg: ScenarioConfig, seed: int, n: int | None = None, threads: int = 1):
    """Forecast ensemble out to the end of the search schedule (belief side)."""
    params = cfg.kinematics(horizon=max(cfg.schedule().end, cfg.horizon_s))
    return run_ensemble(params, n or cfg.particles, seed, threads=threads)


def truth_ensemble(cfg: ScenarioConfig, seed: int, n: int, threads: int = 1):
    """Hidden-truth trajectories, one per replication."""
    params = cfg.kinematics(horizon=max(cfg.schedule().end, cfg.horizon_s))
    return run_ensemble(params, n, seed, threads=threads)


def mission_setup(cfg: ScenarioConfig, seed: int, threads: int = 1, prior=None):
    """(prior field, truth model, belief factory) for ``cfg``.

    Belief-side and truth-side ensembles use different seeds derived from
    ``seed`` so the planner never sees the particles it is scored against.
    """
    from . import bayesfilter as bf
    from .planner import FilterBelief, GridBelief, MovingTruth, PoissonBelief
    from .probgrid import PoissonPriorParams, build_poisson_prior, field_from_particles

    ss = np.random.SeedSequence(seed)
    s_pred, s_truth = (int(c.generate_state(1)[0]) for c in ss.spawn(2))
    grid = cfg.grid()
    sched = cfg.schedule()
    pred = prediction_ensemble(cfg, s_pred, threads=threads)
    t_start = sched.t0

    if prior is None:
        if cfg.prior == "particles":
            prior = field_from_particles(grid, pred.positions_at(t_start))
        else:
            center = int(cells_of_points(grid, pred.positions_at(t_start)[:, :2].mean(axis=0))[0])
            prior = build_poisson_prior(grid, PoissonPriorParams.from_time(
                cfg.m_p, t_start, sched.t0, center, cfg.max_radius()))

    if cfg.target == "moving":
        truth = MovingTruth(truth_ensemble(cfg, s_truth, cfg.replications, threads))
    else:
        truth_params = cfg.kinematics()
        truth = run_ensemble(truth_params, cfg.particles, s_truth, threads=threads)

    if cfg.belief == "filter":
        p = cfg.filter_particles
        pos = pred.positions_at(t_start)[:p]
        r = int(np.searchsorted(pred.times, t_start + 1e-9, side="right")) - 1
        vel = pred.velocities[:p, r]
        init = bf.FilterState.uniform(pos, t_start, vel)
        fparams = cfg.kinematics(dt=cfg.filter_dt_s)

        def belief(rng):
            return FilterBelief(grid, init, fparams, cfg.ess_threshold)
    elif cfg.belief == "poisson":
        def centers(t):
            return int(cells_of_points(grid, pred.positions_at(t)[:, :2].mean(axis=0))[0])

        def belief(rng):
            return PoissonBelief(grid, cfg.m_p, sched.t0, centers, cfg.max_radius(), t_start)
    else:
        def belief(rng):
            return GridBelief(prior)
    return prior, truth, belief
