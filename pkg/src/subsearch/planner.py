"""Search scheduling, sonar tasking and Monte Carlo mission simulation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bayesfilter as bf
from ._io import atomic_csv
from .kinematics import Ensemble, ScenarioParams
from .probgrid import (EmptyFieldError, GridSpec, PoissonPriorParams, ProbabilityField,
                       bayes_negative_update, build_poisson_prior, cells_of_points)

log = logging.getLogger(__name__)

CURVE_HEADER = ["t_s", "cum_success_prob"]
INTERVAL_HEADER = ["t_start_s", "t_end_s", "interval_success_prob", "cum_success_prob"]
LOG_HEADER = ["replication", "interval", "sonar", "cell", "detected"]
POLICIES = ("greedy", "sweep")


@dataclass(frozen=True)
class SonarAsset:
    id: int
    speed: float = 0.5
    swath: float = 120.0
    overlap: float = 0.25
    start_cell: int = 0
    t_i: float = 1800.0
    pd: float = 1.0

    def __post_init__(self):
        if not self.speed > 0 or not self.t_i > 0:
            raise ValueError("sonar speed and search time must be positive")
        if not 0 < self.pd <= 1:
            raise ValueError("detection probability must be in (0, 1]")

    def travel_radius(self, gs: float) -> int:
        """Cells reachable between intervals: floor(v * t_i / G_s)."""
        return int(math.floor(self.speed * self.t_i / gs + 1e-9))


@dataclass(frozen=True)
class SearchSchedule:
    t0: float
    t_i: float
    n: int

    def __post_init__(self):
        if self.t0 < 0 or not self.t_i > 0 or self.n < 1:
            raise ValueError("need t0 >= 0, t_i > 0, n >= 1")

    def interval(self, k: int):
        return self.t0 + k * self.t_i, self.t0 + (k + 1) * self.t_i

    @property
    def intervals(self) -> np.ndarray:
        k = np.arange(self.n)
        return np.column_stack([self.t0 + k * self.t_i, self.t0 + (k + 1) * self.t_i])

    @property
    def end(self) -> float:
        return self.t0 + self.n * self.t_i


def build_schedule(t0: float, t_i: float, n: int) -> SearchSchedule:
    return SearchSchedule(t0, t_i, n)


def deploy_sonars(grid: GridSpec, x: float, y: float, k: int, *, offset: float = 200.0,
                  **asset_kw) -> list:
    """``k`` assets in a line through (x, y), neighbours ``2 * offset`` apart.

    Two assets sit at +-``offset``; one sits on the point itself.
    """
    xs = x + offset * (2 * np.arange(k) - (k - 1))
    cells = cells_of_points(grid, np.column_stack([xs, np.full(k, y)]))
    return [SonarAsset(i, start_cell=int(c), **asset_kw) for i, c in enumerate(cells)]


# --------------------------------------------------------------------------
# tasking
# --------------------------------------------------------------------------


class SweepCursor:
    """Boustrophedon progress for each sonar over its own band of rows."""

    def __init__(self, grid: GridSpec, n_sonars: int):
        bands = np.array_split(np.arange(grid.rows), n_sonars)
        self.paths = []
        for rows in bands:
            path = []
            for j, r in enumerate(rows):
                cols = range(grid.m_g) if j % 2 == 0 else range(grid.m_g - 1, -1, -1)
                path.extend(int(r) * grid.m_g + c for c in cols)
            self.paths.append(path)
        self.pos = [0] * n_sonars

    def take(self, k: int, claimed) -> int | None:
        path = self.paths[k]
        while self.pos[k] < len(path) and path[self.pos[k]] in claimed:
            self.pos[k] += 1
        if self.pos[k] >= len(path):
            return None
        cell = path[self.pos[k]]
        self.pos[k] += 1
        return cell


def _cell_dist(grid, a, cells):
    ra, ca = divmod(int(a), grid.m_g)
    rb, cb = np.divmod(cells, grid.m_g)
    return np.hypot(rb - ra, cb - ca)


def select_next_cells(field: ProbabilityField, sonars, positions, policy: str = "greedy", *,
                      cursor: SweepCursor | None = None, teleport: bool = False) -> list:
    """One cell per sonar for the coming interval (``None`` = nothing reachable).

    greedy: sonars in id order take the most probable unclaimed cell within
    travel radius; ties go to the nearer cell, then the lower index.
    sweep: each sonar takes the next cell of its lawnmower path.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    grid = field.grid
    order = sorted(range(len(sonars)), key=lambda k: sonars[k].id)
    out = [None] * len(sonars)
    claimed = set()
    if policy == "sweep":
        if cursor is None:
            raise ValueError("sweep policy needs a SweepCursor")
        for k in order:
            out[k] = cursor.take(k, claimed)
            if out[k] is not None:
                claimed.add(out[k])
        return out

    probs = field.probs
    cells = np.arange(grid.n_cells)
    for k in order:
        dist = _cell_dist(grid, positions[k], cells)
        ok = probs > 0
        if not teleport:
            ok &= dist <= sonars[k].travel_radius(grid.gs) + 1e-9
        if claimed:
            ok[list(claimed)] = False
        cand = cells[ok]
        if cand.size == 0:
            continue
        best = cand[np.lexsort((cand, dist[cand], -probs[cand]))[0]]
        out[k] = int(best)
        claimed.add(int(best))
    return out


def _transit(grid, field, cur, radius):
    """Move up to ``radius`` cells toward the nearest most-probable cell."""
    cells = np.arange(grid.n_cells)
    dist = _cell_dist(grid, cur, cells)
    target = cells[np.lexsort((cells, dist, -field.probs))[0]]
    d = dist[target]
    if d <= radius or d == 0:
        return int(target)
    r0, c0 = divmod(int(cur), grid.m_g)
    r1, c1 = divmod(int(target), grid.m_g)
    s = radius / d
    return int(round(r0 + (r1 - r0) * s)) * grid.m_g + int(round(c0 + (c1 - c0) * s))


# --------------------------------------------------------------------------
# beliefs
# --------------------------------------------------------------------------


class GridBelief:
    """Fixed prior refined by negative updates; for a static target."""

    def __init__(self, prior: ProbabilityField):
        self.current = prior

    def field(self):
        if self.current is None:
            raise EmptyFieldError("belief exhausted")
        return self.current

    def observe(self, searched, pds, detected, rng):
        if detected:
            return
        f = self.current
        try:
            for cell, pd in zip(searched, pds):
                f = bayes_negative_update(f, [cell], pd)
        except EmptyFieldError:
            f = None
        self.current = f

    def advance(self, dt, rng):
        pass


class PoissonBelief:
    """Poisson prior whose intensity grows with elapsed time, times miss factors.

    ``centers`` maps a time (s) to the predicted centre cell.
    """

    def __init__(self, grid, m_p, t0, centers, max_radius=None, t=None):
        self.grid, self.m_p, self.t0 = grid, m_p, t0
        self.centers = centers
        self.max_radius = max_radius
        self.t = t0 if t is None else t
        self.miss = np.ones(grid.n_cells)

    def field(self):
        prior = build_poisson_prior(self.grid, PoissonPriorParams.from_time(
            self.m_p, self.t, self.t0, self.centers(self.t), self.max_radius))
        return ProbabilityField.from_weights(self.grid, prior.probs * self.miss)

    def observe(self, searched, pds, detected, rng):
        if not detected:
            for cell, pd in zip(searched, pds):
                self.miss[cell] *= 1.0 - pd

    def advance(self, dt, rng):
        self.t += dt


class FilterBelief:
    def __init__(self, grid, state: bf.FilterState, params: ScenarioParams,
                 ess_threshold=0.5):
        self.grid, self.state, self.params = grid, state, params
        self.ess_threshold = ess_threshold
        self.interval = 0

    def field(self):
        return bf.pf_field_estimate(self.state, self.grid)

    def observe(self, searched, pds, detected, rng):
        if detected or not searched:
            return
        obs = bf.Observation(self.interval, tuple(searched), tuple(pds))
        try:
            self.state = bf.pf_update(self.state, obs, self.grid)
        except EmptyFieldError:
            # every particle was searched away; keep the prediction
            log.debug("filter lost support at interval %d", self.interval)
            return
        self.state = bf.pf_resample(self.state, self.ess_threshold, rng)

    def advance(self, dt, rng):
        self.state = bf.pf_predict(self.state, self.params, dt, rng)
        self.interval += 1


# --------------------------------------------------------------------------
# truth models
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MovingTruth:
    """Target follows one recorded trajectory of ``ensemble`` per replication."""

    ensemble: Ensemble


def _truth_path(truth, grid, schedule, rng):
    """Truth cell for every interval of one replication."""
    if isinstance(truth, (int, np.integer)):
        return np.full(schedule.n, int(truth))
    if isinstance(truth, MovingTruth):
        e = truth.ensemble
        j = int(rng.integers(e.n))
        mids = schedule.intervals.mean(axis=1)
        xy = np.array([e.positions_at(t)[j, :2] for t in mids])
        return cells_of_points(grid, xy)
    if isinstance(truth, Ensemble):
        j = int(rng.integers(truth.n))
        return np.full(schedule.n, int(cells_of_points(grid, truth.final_positions[j, :2])[0]))
    raise TypeError(f"unsupported truth model {type(truth).__name__}")


# --------------------------------------------------------------------------
# missions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DetectionCurve:
    times: np.ndarray
    cumulative: np.ndarray
    per_interval: np.ndarray
    replications: int
    t_starts: np.ndarray = None

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])


@dataclass(eq=False)
class MissionLog:
    rows: list = field(default_factory=list)
    detection_times: list = field(default_factory=list)
    posteriors: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class MissionResult:
    curve: DetectionCurve
    log: MissionLog


def replication_rngs(seed: int, r: int):
    """(truth, detection, belief) streams for replication ``r``.

    Separate streams keep truth draws and detection uniforms common across
    configurations even when the belief consumes a varying number of draws.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(r,))
    return tuple(np.random.default_rng(c) for c in ss.spawn(3))


def _one_replication(r, make_belief, truth, sonars, schedule, policy, seed, teleport,
                     keep_posteriors):
    truth_rng, det_rng, rng = replication_rngs(seed, r)
    belief = make_belief(rng)
    grid = belief.field().grid
    path = _truth_path(truth, grid, schedule, truth_rng)
    positions = [s.start_cell for s in sonars]
    cursor = SweepCursor(grid, len(sonars)) if policy == "sweep" else None
    rows, posts = [], []
    detected_at = None
    for k in range(schedule.n):
        u = det_rng.random()
        try:
            f = belief.field()
        except EmptyFieldError:
            break
        if keep_posteriors:
            posts.append(f)
        picks = select_next_cells(f, sonars, positions, policy, cursor=cursor, teleport=teleport)
        searched, pds = [], []
        hit = False
        for j, (s, cell) in enumerate(zip(sonars, picks)):
            if cell is None:
                positions[j] = _transit(grid, f, positions[j], s.travel_radius(grid.gs))
                rows.append((r, k, s.id, -1, 0))
                continue
            positions[j] = cell
            found = cell == path[k] and u < s.pd
            hit |= found
            searched.append(cell)
            pds.append(s.pd)
            rows.append((r, k, s.id, cell, int(found)))
        if hit:
            detected_at = k
            break
        belief.observe(searched, pds, False, rng)
        if k + 1 < schedule.n:
            belief.advance(schedule.t_i, rng)
    return detected_at, rows, posts


def simulate_mission(prior, truth, sonars, schedule: SearchSchedule, policy: str = "greedy", *,
                     replications: int = 1, seed: int = 0, teleport: bool = False,
                     belief=None, threads: int = 1, keep_posteriors: bool = False,
                     log_replications: int | None = None) -> MissionResult:
    """Monte Carlo search missions.

    ``prior`` is the planning field for a static :class:`GridBelief`;
    ``belief`` (a callable ``rng -> belief``) overrides it, e.g. for the
    particle-filter or time-varying Poisson beliefs.  ``truth`` is a fixed
    cell, an Ensemble (static target drawn from its final positions) or a
    :class:`MovingTruth`.  Replication ``r`` uses a stream derived from
    ``(seed, r)``, so results do not depend on ``threads``.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    make_belief = belief if belief is not None else (lambda rng: GridBelief(prior))

    def run(rs):
        return [_one_replication(r, make_belief, truth, sonars, schedule, policy, seed,
                                 teleport, keep_posteriors) for r in rs]

    chunks = [c for c in np.array_split(np.arange(replications), max(1, threads)) if c.size]
    if len(chunks) == 1:
        results = run(chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            results = [x for part in pool.map(run, chunks) for x in part]

    counts = np.zeros(schedule.n)
    mlog = MissionLog()
    keep = replications if log_replications is None else log_replications
    for r, (k, rows, posts) in enumerate(results):
        if k is not None:
            counts[k] += 1
            mlog.detection_times.append(schedule.interval(k)[1])
        else:
            mlog.detection_times.append(None)
        if r < keep:
            mlog.rows.extend(rows)
            mlog.posteriors.append(posts)
    per = counts / replications
    iv = schedule.intervals
    curve = DetectionCurve(iv[:, 1], np.cumsum(counts) / replications, per, replications, iv[:, 0])
    return MissionResult(curve, mlog)


def sonar_count_sweep(k_values, make_sonars, prior, truth, schedule: SearchSchedule,
                      policy: str = "greedy", *, replications: int = 500, seed: int = 0,
                      belief=None, teleport=False, threads=1) -> list:
    """Success probability by the end of ``schedule`` for each sonar count.

    The same ``seed`` is used for every k, so truth draws and detection
    uniforms are common random numbers across the table.
    """
    out = []
    for k in k_values:
        if k < 1:
            raise ValueError("sonar count must be >= 1")
        res = simulate_mission(prior, truth, make_sonars(k), schedule, policy,
                               replications=replications, seed=seed, belief=belief,
                               teleport=teleport, threads=threads, log_replications=0)
        out.append((int(k), res.curve.final))
    return out


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def write_curve_csv(path, curve: DetectionCurve):
    with atomic_csv(path, CURVE_HEADER) as w:
        # nothing can have been found before the search starts
        w.writerow([f"{curve.t_starts[0]:.3f}", repr(0.0)])
        for t, p in zip(curve.times, curve.cumulative):
            w.writerow([f"{t:.3f}", repr(float(p))])


def write_interval_csv(path, curve: DetectionCurve):
    with atomic_csv(path, INTERVAL_HEADER) as w:
        for t0, t1, p, c in zip(curve.t_starts, curve.times, curve.per_interval,
                                curve.cumulative):
            w.writerow([f"{t0:.3f}", f"{t1:.3f}", repr(float(p)), repr(float(c))])


def write_log_csv(path, mlog: MissionLog):
    with atomic_csv(path, LOG_HEADER) as w:
        w.writerows(mlog.rows)


def write_sweep_csv(path, table):
    with atomic_csv(path, ["sonars", "success_prob"]) as w:
        for k, p in table:
            w.writerow([k, repr(float(p))])
