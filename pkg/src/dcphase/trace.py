"""Per-iteration solver history shared by every outer solver."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np

CSV_COLUMNS = ("iter", "F", "F1", "F2", "step_norm", "grad_norm", "support_size")


@dataclass
class IterRecord:
    iter: int
    F: float
    F1: float
    F2: float
    step_norm: float
    grad_norm: float
    inner_iters: int = 0
    backtracks: int = 0
    stationarity: float = 0.0
    ell: float = math.nan
    objective: float = math.nan  # regularized value lambda*||y||_1 + F for the sparse solvers
    support_size: Optional[int] = None
    lipschitz: float = math.nan


@dataclass
class Trace:
    """History of an outer solver run.

    ``records[0]`` describes the starting point; record ``k`` the iterate
    after step ``k``.
    """

    records: List[IterRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    flags: List[str] = field(default_factory=list)
    tau: Optional[float] = None
    tau_r2: Optional[float] = None
    iterates: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def append(self, rec: IterRecord) -> None:
        self.records.append(rec)

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def F(self) -> np.ndarray:
        return np.array([r.F for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path=None) -> str:
        """Write one row per iteration; returns the CSV text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([
                r.iter, repr(r.F), repr(r.F1), repr(r.F2), repr(r.step_norm), repr(r.grad_norm),
                "" if r.support_size is None else r.support_size,
            ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def as_dicts(self):
        return [asdict(r) for r in self.records]


def fit_contraction(iterates: List[np.ndarray], x_final: np.ndarray, floor: float, min_points: int = 5):
    """Least-squares fit of ``log ||x_k - x_final||`` against k over the tail.

    Only iterates whose error exceeds ``floor`` enter the fit (closer ones are
    dominated by the error of ``x_final`` itself); of those the later half is
    used, and at least ``min_points``.  Returns ``(tau, r2)`` or
    ``(None, None)`` when too few points are available.
    """
    errs = [float(np.linalg.norm(x - x_final)) for x in iterates[:-1]]
    ks = [k for k, e in enumerate(errs) if e > floor]
    if len(ks) < min_points:
        return None, None
    take = max(min_points, len(ks) // 2)
    ks = ks[-take:]
    kk = np.array(ks, dtype=float)
    ll = np.log([errs[k] for k in ks])
    A = np.vstack([kk, np.ones_like(kk)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ll, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_tot = float(np.sum((ll - ll.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ll - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    tau = float(min(math.exp(slope), 1.0))
    return tau, r2
