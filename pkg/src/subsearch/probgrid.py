"""Search grid: cell labelling, Poisson prior and Bayesian negative updates.

Cells are square, ``gs`` metres on a side, labelled row-major from the grid
origin: ``N_g = col + M_g * row``.  Domain coordinates are shifted by the
origin so that they are non-negative, and ``INT`` is floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_csv

FIELD_HEADER = ["cell", "row", "col", "x_center_m", "y_center_m", "prob"]
NORM_TOL = 1e-9


class OutOfDomainError(ValueError):
    pass


class EmptyFieldError(ValueError):
    """An update or constructor left no probability mass anywhere."""


@dataclass(frozen=True)
class GridSpec:
    gs: float
    x_max: float
    y_max: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.gs > 0:
            raise ValueError("cell size gs must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if self.m_g < 1 or self.rows < 1:
            raise ValueError("domain must hold at least one cell per axis")

    @property
    def m_g(self) -> int:
        return int(math.floor(self.x_max / self.gs + 1e-9))

    @property
    def rows(self) -> int:
        return int(math.floor(self.y_max / self.gs + 1e-9))

    @property
    def n_cells(self) -> int:
        return self.m_g * self.rows

    def rowcol(self, cell):
        cell = np.asarray(cell)
        return cell // self.m_g, cell % self.m_g

    @classmethod
    def centered_on(cls, x, y, gs, n_cols, n_rows):
        """Grid of ``n_cols`` x ``n_rows`` cells whose middle cell is centred on (x, y).

        Both counts should be odd for the point to land on a cell centre.
        """
        return cls(gs, n_cols * gs, n_rows * gs,
                   (x - (n_cols // 2 + 0.5) * gs, y - (n_rows // 2 + 0.5) * gs))


def cell_of_point(grid: GridSpec, x: float, y: float) -> int:
    xs = x - grid.origin[0]
    ys = y - grid.origin[1]
    if not (0.0 <= xs < grid.m_g * grid.gs and 0.0 <= ys < grid.rows * grid.gs):
        raise OutOfDomainError(f"point ({x}, {y}) lies outside the grid")
    return int(math.floor(xs / grid.gs)) + grid.m_g * int(math.floor(ys / grid.gs))


def cells_of_points(grid: GridSpec, xy) -> np.ndarray:
    """Vectorised cell lookup; points off the domain go to the nearest boundary cell."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    col = np.floor((xy[:, 0] - grid.origin[0]) / grid.gs)
    row = np.floor((xy[:, 1] - grid.origin[1]) / grid.gs)
    col = np.clip(col, 0, grid.m_g - 1).astype(np.int64)
    row = np.clip(row, 0, grid.rows - 1).astype(np.int64)
    return col + grid.m_g * row


def cell_center(grid: GridSpec, cell: int):
    if not 0 <= cell < grid.n_cells:
        raise OutOfDomainError(f"cell {cell} outside 0..{grid.n_cells - 1}")
    x = (cell % grid.m_g) * grid.gs + grid.gs / 2
    y = (cell // grid.m_g) * grid.gs + grid.gs / 2
    return x + grid.origin[0], y + grid.origin[1]


def cell_centers(grid: GridSpec) -> np.ndarray:
    """(n_cells, 2) array of every cell centre."""
    cells = np.arange(grid.n_cells)
    x = (cells % grid.m_g) * grid.gs + grid.gs / 2 + grid.origin[0]
    y = (cells // grid.m_g) * grid.gs + grid.gs / 2 + grid.origin[1]
    return np.column_stack([x, y])


def grid_size_from_sweep(w_s: float, overlap: float, turns: int) -> float:
    """Cell side covered by ``turns`` parallel passes of swath ``w_s``."""
    if not w_s > 0 or not 0 <= overlap < 1 or turns < 1:
        raise ValueError("need w_s > 0, 0 <= overlap < 1, turns >= 1")
    gs = w_s * turns - (w_s * overlap) * (turns - 1)
    if not gs > 0:
        raise ValueError("non-positive grid size")
    return gs


def turns_from_speed(v: float, t: float, gs: float) -> float:
    """Passes that fit in one cell at search speed ``v`` over time ``t``."""
    return v * t / gs


def manhattan_distances(grid: GridSpec, center: int) -> np.ndarray:
    r0, c0 = divmod(int(center), grid.m_g)
    rows, cols = np.divmod(np.arange(grid.n_cells), grid.m_g)
    return np.abs(rows - r0) + np.abs(cols - c0)


def manhattan_ring_cells(grid: GridSpec, center: int, d: int) -> list:
    if d < 0:
        raise ValueError("ring distance must be >= 0")
    return np.flatnonzero(manhattan_distances(grid, center) == d).tolist()


def lambda_of_time(m_p: float, t: float, t0: float) -> float:
    """Poisson intensity after elapsed time ``t`` given preparation time ``t0``."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if t < t0:
        raise ValueError(f"t ({t}) precedes the preparation time t0 ({t0})")
    return m_p + math.log(t / t0)


def poisson_pmf(k: int, lam: float) -> float:
    if k < 0 or not lam > 0:
        raise ValueError("need k >= 0 and lam > 0")
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1))


@dataclass(frozen=True)
class PoissonPriorParams:
    lam: float
    center: int
    max_radius: int | None = None
    m_p: float | None = None
    t: float | None = None
    t0: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.t is not None and self.t0 is not None and not self.t >= self.t0 > 0:
            raise ValueError("need t >= t0 > 0")

    @classmethod
    def from_time(cls, m_p, t, t0, center, max_radius=None):
        return cls(lambda_of_time(m_p, t, t0), center, max_radius, m_p, t, t0)


class ProbabilityField:
    """Normalised per-cell target probability on a :class:`GridSpec`."""

    __slots__ = ("grid", "probs")

    def __init__(self, grid: GridSpec, probs):
        p = np.array(probs, dtype=np.float64).reshape(-1)
        if p.size != grid.n_cells:
            raise ValueError(f"expected {grid.n_cells} probabilities, got {p.size}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.12g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "probs", p)

    def __setattr__(self, name, value):
        raise AttributeError("ProbabilityField is immutable")

    @classmethod
    def from_weights(cls, grid, weights):
        w = np.asarray(weights, dtype=np.float64)
        total = w.sum()
        if not total > 0:
            raise EmptyFieldError("all cell weights are zero")
        return cls(grid, w / total)

    @classmethod
    def uniform(cls, grid):
        return cls(grid, np.full(grid.n_cells, 1.0 / grid.n_cells))

    def __getitem__(self, cell):
        return self.probs[cell]

    def as_2d(self):
        return self.probs.reshape(self.grid.rows, self.grid.m_g)

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def build_poisson_prior(grid: GridSpec, params: PoissonPriorParams) -> ProbabilityField:
    """Ring-shared Poisson prior: weight pmf(d; lam) / N_d at Manhattan distance d."""
    if not 0 <= params.center < grid.n_cells:
        raise OutOfDomainError(f"center cell {params.center} outside grid")
    d = manhattan_distances(grid, params.center)
    ring_sizes = np.bincount(d)
    ring_pmf = np.array([poisson_pmf(k, params.lam) for k in range(ring_sizes.size)])
    weights = ring_pmf[d] / ring_sizes[d]
    if params.max_radius is not None:
        weights[d > params.max_radius] = 0.0
    return ProbabilityField.from_weights(grid, weights)


def expected_distance(field: ProbabilityField, center: int) -> float:
    return float(np.dot(field.probs, manhattan_distances(field.grid, center)))


def field_from_particles(grid: GridSpec, ensemble) -> ProbabilityField:
    """Histogram of final particle positions (off-domain points clamp to the edge).

    ``ensemble`` may be an Ensemble or an (N, >=2) array of positions.
    """
    pos = getattr(ensemble, "final_positions", ensemble)
    pos = np.asarray(pos, dtype=float)
    if pos.size == 0:
        raise EmptyFieldError("no particles")
    cells = cells_of_points(grid, pos[:, :2])
    counts = np.bincount(cells, minlength=grid.n_cells)
    return ProbabilityField(grid, counts / cells.size)


def bayes_negative_update(field: ProbabilityField, searched, pd: float = 1.0) -> ProbabilityField:
    """Posterior after an unsuccessful search of ``searched`` with detection prob ``pd``."""
    if not 0 < pd <= 1:
        raise ValueError("detection probability must be in (0, 1]")
    cells = np.unique(np.asarray(list(searched), dtype=np.int64))
    if cells.size and (cells.min() < 0 or cells.max() >= field.grid.n_cells):
        raise OutOfDomainError("searched cell outside grid")
    p = field.probs.copy()
    p[cells] *= 1.0 - pd
    total = p.sum()
    if not total > 0:
        raise EmptyFieldError("searched cells held all the probability mass")
    return ProbabilityField(field.grid, p / total)


def write_field_csv(path, field: ProbabilityField):
    g = field.grid
    centers = cell_centers(g)
    with atomic_csv(path, FIELD_HEADER) as w:
        for cell in range(g.n_cells):
            w.writerow([cell, cell // g.m_g, cell % g.m_g, f"{centers[cell, 0]:.3f}",
                        f"{centers[cell, 1]:.3f}", repr(float(field.probs[cell]))])
