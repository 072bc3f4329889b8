"""Boltzmann sigmoid fitting.

    y(x) = A2 + (A1 - A2) / (1 + exp((x - x0) / dx))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 200
REL_TOL = 1e-10


@dataclass(frozen=True)
class BoltzmannParams:
    a1: float
    a2: float
    x0: float
    dx: float

    def __post_init__(self):
        if self.dx == 0 or not np.all(np.isfinite(self.as_array())):
            raise ValueError("Boltzmann parameters must be finite with dx != 0")

    def as_array(self):
        return np.array([self.a1, self.a2, self.x0, self.dx], dtype=float)

    def canonical(self) -> "BoltzmannParams":
        """Same curve with dx > 0."""
        if self.dx > 0:
            return self
        return BoltzmannParams(self.a2, self.a1, self.x0, -self.dx)


@dataclass(frozen=True)
class FitReport:
    params: BoltzmannParams
    sse: float
    iterations: int
    converged: bool
    identifiable: bool = True

    def to_text(self) -> str:
        p = self.params
        lines = [
            "model: y = A2 + (A1 - A2) / (1 + exp((x - x0) / dx))",
            f"A1: {p.a1:.12g}",
            f"A2: {p.a2:.12g}",
            f"x0: {p.x0:.12g}",
            f"dx: {p.dx:.12g}",
            f"sse: {self.sse:.12g}",
            f"iterations: {self.iterations}",
            f"converged: {str(self.converged).lower()}",
            f"identifiable: {str(self.identifiable).lower()}",
        ]
        return "\n".join(lines) + "\n"


def _gate(s):
    # 1 / (1 + exp(s)) without overflow
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    return np.where(s > 0, e / (1.0 + e), 1.0 / (1.0 + e))


def boltzmann_eval(p: BoltzmannParams, x):
    with np.errstate(over="ignore"):
        g = _gate((np.asarray(x, dtype=float) - p.x0) / p.dx)
    y = p.a2 + (p.a1 - p.a2) * g
    return float(y) if np.ndim(y) == 0 else y


def boltzmann_jacobian(p: BoltzmannParams, x) -> np.ndarray:
    """(n, 4) partial derivatives with respect to (A1, A2, x0, dx)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = (x - p.x0) / p.dx
    g = _gate(s)
    gg = (p.a1 - p.a2) * g * (1.0 - g) / p.dx
    return np.column_stack([g, 1.0 - g, gg, gg * s])


def fit_boltzmann(xs, ys, *, max_iter: int = MAX_ITER) -> FitReport:
    """Levenberg-damped Gauss-Newton least squares."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if x.size < 5:
        raise ValueError("need at least 5 points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly increasing")

    span = x[-1] - x[0]
    x0 = float(np.median(x))
    if np.all(y == y[0]):
        return FitReport(BoltzmannParams(y[0], y[0], x0, span / 10), 0.0, 0, True,
                         identifiable=False)

    theta = np.array([y[0], y[-1], x0, span / 10])
    params = BoltzmannParams(*theta)
    r = y - boltzmann_eval(params, x)
    sse = float(r @ r)
    tiny = 1e-28 * max(1.0, float(y @ y))
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iter and not converged:
        it += 1
        J = boltzmann_jacobian(params, x)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-12
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            if trial[3] != 0 and np.all(np.isfinite(trial)):
                tp = BoltzmannParams(*trial)
                rt = y - boltzmann_eval(tp, x)
                sse_t = float(rt @ rt)
            else:
                sse_t = np.inf
            if sse_t < sse:
                rel = (sse - sse_t) / sse
                theta, params, r, sse = trial, tp, rt, sse_t
                lam = max(lam / 10, 1e-15)
                converged = rel < REL_TOL or sse <= tiny
                break
            lam *= 10
            if lam > 1e12 or np.linalg.norm(step) <= 1e-14 * (np.linalg.norm(theta) + 1e-14):
                # no descent left at working precision: stationary point
                converged = True
                break
    return FitReport(params.canonical(), sse, it, converged)


def thin_points(xs, ys, budget: int) -> np.ndarray:
    """Indices of an inhomogeneous subsample that favours curved regions.

    Endpoints are always kept; the other ``budget - 2`` picks follow the
    distribution of |second difference of y| over interior points (uniform
    if the data are straight).
    """
    y = np.asarray(ys, dtype=float)
    n = y.size
    if len(xs) != n:
        raise ValueError("xs and ys differ in length")
    if budget < 4:
        raise ValueError("budget must be >= 4")
    if budget >= n:
        return np.arange(n)
    interior = np.arange(1, n - 1)
    w = np.abs(y[2:] - 2 * y[1:-1] + y[:-2])
    if not w.sum() > 0:
        w = np.ones_like(w)
    cdf = np.cumsum(w) / w.sum()
    m = budget - 2
    want = np.minimum(np.searchsorted(cdf, np.arange(1, m + 1) / (m + 1)), interior.size - 1)
    taken = set()
    for j in want:
        # nearest free interior slot, preferring the lower side on ties
        for off in range(interior.size):
            for cand in (j - off, j + off):
                if 0 <= cand < interior.size and cand not in taken:
                    taken.add(cand)
                    break
            else:
                continue
            break
    return np.array([0, *sorted(int(interior[i]) for i in taken), n - 1])
