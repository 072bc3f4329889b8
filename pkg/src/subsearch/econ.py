"""Entropy-weight benefit scoring and cost-effectiveness ranking of equipment."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_csv

EQUIPMENT_HEADER = ["name", "role", "purchase_cost", "maintenance_cost", "detection_range_m",
                    "stability", "feasibility"]
REPORT_HEADER = ["name", "role", "E", "C", "CER", "rank"]
INDICATORS = ("detection_range_m", "stability", "feasibility")


@dataclass(frozen=True)
class EquipmentRecord:
    name: str
    role: str
    purchase_cost: float
    maintenance_cost: float
    indicators: tuple

    def __post_init__(self):
        if self.purchase_cost < 0 or self.maintenance_cost < 0:
            raise ValueError(f"{self.name}: costs must be >= 0")
        vals = tuple(float(v) for v in self.indicators)
        if any(v < 0 for v in vals):
            raise ValueError(f"{self.name}: indicators must be >= 0")
        if len(vals) >= 3:
            d, s, f = vals[:3]
            if not d > 0 or not (0 <= s <= 1 and 0 <= f <= 1):
                raise ValueError(f"{self.name}: need D > 0 and S, F in [0, 1]")
        object.__setattr__(self, "indicators", vals)

    @property
    def total_cost(self) -> float:
        return self.purchase_cost + self.maintenance_cost


def standardize(x0) -> np.ndarray:
    """Column-wise vector normalisation z_ij = x_ij / ||x_.j||."""
    x = np.asarray(x0, dtype=float)
    if x.ndim != 2:
        raise ValueError("decision matrix must be 2-D")
    if np.any(x < 0):
        raise ValueError("decision matrix entries must be >= 0")
    norms = np.sqrt((x ** 2).sum(axis=0))
    if np.any(norms == 0):
        raise ValueError("decision matrix has an all-zero column")
    return x / norms


def entropy_weights(z0):
    """Return (P, e, W) for a standardised matrix with n >= 2 rows."""
    z = np.asarray(z0, dtype=float)
    n = z.shape[0]
    if n < 2:
        raise ValueError("entropy weights need at least two alternatives")
    p = z / z.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    e = -plogp.sum(axis=0) / np.log(n)
    d = 1.0 - e
    d[d < 1e-13] = 0.0  # rounding residue of a perfectly uniform column
    if d.sum() == 0:
        warnings.warn("every indicator column is uniform; using equal weights", RuntimeWarning)
        w = np.full(z.shape[1], 1.0 / z.shape[1])
    else:
        w = d / d.sum()
    return p, e, w


@dataclass(frozen=True, eq=False)
class DecisionMatrix:
    records: tuple
    x0: np.ndarray
    z0: np.ndarray
    p: np.ndarray
    entropy: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_records(cls, records):
        records = tuple(records)
        x0 = np.array([r.indicators for r in records], dtype=float)
        z0 = standardize(x0)
        if len(records) == 1:
            m = x0.shape[1]
            return cls(records, x0, z0, np.ones_like(z0), np.full(m, np.nan), np.full(m, 1.0 / m))
        p, e, w = entropy_weights(z0)
        return cls(records, x0, z0, p, e, w)


@dataclass(frozen=True)
class CERRow:
    name: str
    role: str
    benefit: float
    cost_share: float
    cer: float
    total_cost: float


@dataclass(frozen=True, eq=False)
class CERReport:
    rows: tuple
    matrices: dict = field(default_factory=dict)


def score_and_cer(records, matrix: DecisionMatrix | None = None):
    """Benefit, cost share and CER for one role group."""
    records = tuple(records)
    if len({r.role for r in records}) > 1:
        raise ValueError("score_and_cer expects a single role group")
    matrix = matrix or DecisionMatrix.from_records(records)
    costs = np.array([r.total_cost for r in records])
    if np.any(costs <= 0):
        raise ValueError("every record needs a positive total cost")
    benefit = matrix.p @ matrix.weights
    share = costs / costs.sum()
    cer = benefit / share
    return [CERRow(r.name, r.role, float(b), float(c), float(q), float(tc))
            for r, b, c, q, tc in zip(records, benefit, share, cer, costs)]


def evaluate(records) -> CERReport:
    """Score every role group separately (weights and cost shares are per group)."""
    groups = {}
    for r in records:
        groups.setdefault(r.role, []).append(r)
    rows, mats = [], {}
    for role, recs in groups.items():
        mats[role] = DecisionMatrix.from_records(recs)
        rows.extend(score_and_cer(recs, mats[role]))
    return CERReport(tuple(rows), mats)


def rank_equipment(report: CERReport) -> dict:
    """role -> rows by descending CER (ties: cheaper first, then by name)."""
    out = {}
    for row in report.rows:
        out.setdefault(row.role, []).append(row)
    return {role: sorted(rows, key=lambda r: (-r.cer, r.total_cost, r.name))
            for role, rows in out.items()}


def load_equipment_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != EQUIPMENT_HEADER:
            raise ValueError(f"{path}: header must be {','.join(EQUIPMENT_HEADER)}")
        recs = []
        for lineno, row in enumerate(reader, start=2):
            try:
                recs.append(EquipmentRecord(
                    row["name"].strip(), row["role"].strip().lower(),
                    float(row["purchase_cost"]), float(row["maintenance_cost"]),
                    tuple(float(row[k]) for k in INDICATORS)))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not recs:
        raise ValueError(f"{path}: no equipment rows")
    return recs


def write_report_csv(path, ranking: dict):
    with atomic_csv(path, REPORT_HEADER) as w:
        for role, rows in ranking.items():
            for rank, r in enumerate(rows, start=1):
                w.writerow([r.name, role, f"{r.benefit:.6f}", f"{r.cost_share:.6f}",
                            f"{r.cer:.6f}", rank])
