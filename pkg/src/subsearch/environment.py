"""Ocean currents and the stochastic current-disturbance model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

CURRENT_HEADER = ["x_m", "y_m", "z_m", "u_mps", "v_mps", "w_mps"]


class FieldFormatError(ValueError):
    """Current-field file does not describe a complete rectilinear lattice."""


@dataclass(frozen=True, eq=False)
class CurrentField:
    """Water velocity on a regular lattice.

    ``uvw`` has shape (3, nx, ny, nz) and holds u, v, w in m/s.  Instances are
    treated as immutable; the backing array is flagged read-only.
    """

    origin: np.ndarray
    spacing: np.ndarray
    uvw: np.ndarray

    def __post_init__(self):
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        spacing = np.array(self.spacing, dtype=np.float64).reshape(3)
        uvw = np.array(self.uvw, dtype=np.float64)
        if uvw.ndim != 4 or uvw.shape[0] != 3:
            raise ValueError(f"uvw must have shape (3, nx, ny, nz), got {uvw.shape}")
        if np.any(spacing <= 0):
            raise ValueError("spacing must be positive on every axis")
        if not np.all(np.isfinite(uvw)):
            raise ValueError("velocity components must be finite")
        for arr in (origin, spacing, uvw):
            arr.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "uvw", uvw)

    @property
    def shape(self):
        return self.uvw.shape[1:]

    @property
    def n_nodes(self):
        nx, ny, nz = self.shape
        return nx * ny * nz

    @classmethod
    def constant(cls, u=0.0, v=0.0, w=0.0):
        return cls(np.zeros(3), np.ones(3), np.array([u, v, w], dtype=float).reshape(3, 1, 1, 1))

    def node_coords(self, i, j, k):
        return self.origin + self.spacing * np.array([i, j, k], dtype=float)


def _axis(values, name):
    uniq = np.unique(values)
    if uniq.size == 1:
        return uniq, 1.0
    steps = np.diff(uniq)
    h = steps[0]
    if not np.allclose(steps, h, rtol=1e-6, atol=1e-9):
        raise FieldFormatError(f"{name} coordinates are not evenly spaced")
    return uniq, float(h)


def load_current_field(path) -> CurrentField:
    """Read a current-field CSV (one row per lattice node)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CURRENT_HEADER:
            raise FieldFormatError(f"{path}: header must be {','.join(CURRENT_HEADER)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise FieldFormatError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise FieldFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FieldFormatError(f"{path}: no lattice nodes")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise FieldFormatError(f"{path}: non-finite value")

    axes = [_axis(data[:, c], "xyz"[c]) for c in range(3)]
    shape = tuple(a[0].size for a in axes)
    origin = np.array([a[0][0] for a in axes])
    spacing = np.array([a[1] for a in axes])
    n_expected = shape[0] * shape[1] * shape[2]
    if len(rows) != n_expected:
        raise FieldFormatError(
            f"{path}: {len(rows)} rows for a {shape[0]}x{shape[1]}x{shape[2]} lattice "
            f"({n_expected} nodes)")

    idx = np.rint((data[:, :3] - origin) / spacing).astype(np.int64)
    flat = np.ravel_multi_index(idx.T, shape)
    if np.unique(flat).size != flat.size:
        raise FieldFormatError(f"{path}: duplicate lattice node")
    uvw = np.empty((3,) + shape)
    for c in range(3):
        uvw[c].flat[flat] = data[:, 3 + c]
    return CurrentField(origin, spacing, uvw)


def write_current_field(path, cf: CurrentField):
    nx, ny, nz = cf.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURRENT_HEADER)
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    x, y, z = cf.node_coords(i, j, k)
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(z)),
                                *(repr(float(cf.uvw[c, i, j, k])) for c in range(3))])


def sample_current(cf: CurrentField, position) -> np.ndarray:
    """Trilinear interpolation; positions outside the hull are clamped onto it."""
    return kernels.sample_points(cf.uvw, cf.origin, cf.spacing, np.asarray(position, float))[0]


# --------------------------------------------------------------------------
# perturbation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationSpec:
    speed_min: float = 0.05
    speed_max: float = 0.30
    tau: float = 600.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.speed_min <= self.speed_max):
            raise ValueError("need 0 <= speed_min <= speed_max")
        if not self.tau > 0:
            raise ValueError("persistence tau must be positive")


def window_velocities(spec: PerturbationSpec, u: np.ndarray) -> np.ndarray:
    """Map uniform pairs ``u[..., 0:2]`` in [0, 1) to horizontal velocity vectors."""
    speed = spec.speed_min + (spec.speed_max - spec.speed_min) * u[..., 0]
    heading = 2.0 * math.pi * u[..., 1]
    return np.stack([speed * np.cos(heading), speed * np.sin(heading)], axis=-1)


def perturbation_table(spec: PerturbationSpec, rng: np.random.Generator, n_windows: int):
    """Draw ``n_windows`` consecutive windows from ``rng``; shape (n_windows, 2).

    Consumes the stream exactly as ``n_windows`` sequential
    :class:`PerturbationStream` lookups would.
    """
    return window_velocities(spec, rng.random((n_windows, 2)))


@dataclass
class PerturbationStream:
    """Piecewise-constant disturbance process for one consumer.

    Windows are drawn lazily in order, so querying times out of order still
    yields the sequence a forward-in-time simulation would see.
    """

    spec: PerturbationSpec
    rng: np.random.Generator = None
    _windows: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.spec.seed)

    def window(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("perturbation window index must be >= 0")
        while len(self._windows) <= k:
            self._windows.append(window_velocities(self.spec, self.rng.random(2)))
        return self._windows[k]

    def __call__(self, t: float) -> np.ndarray:
        return draw_perturbation(self.spec, self, t)


def draw_perturbation(spec: PerturbationSpec, stream: PerturbationStream, t: float) -> np.ndarray:
    """Disturbance velocity (m/s) at time ``t``; the vertical component is 0."""
    h = stream.window(int(math.floor(t / spec.tau)))
    return np.array([h[0], h[1], 0.0])
