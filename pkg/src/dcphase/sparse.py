"""l1-regularized DC solvers for sparse phase retrieval.

Each iteration linearizes both parts of the split at an extrapolated point
``w`` and solves the proximal problem

    min_y  lam ||y||_1 + <grad F1(w) - grad F2(w), y - w> + (L1/2) ||y - w||^2

in closed form by soft thresholding.  The extrapolation weight follows the
Attouch-Peypouquet schedule ``k / (k + alpha)``, frozen after ``K``
iterations.  The hard-thresholded variant additionally projects every new
iterate onto the s-sparse vectors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import FieldTag, Signal, coords
from .objective import SplitObjective
from .trace import IterRecord, Trace

NEGATIVE_MEASUREMENTS = "negative_measurements"


class L1Mode(str, enum.Enum):
    ESTIMATE = "estimate"
    BACKTRACKING = "backtracking"


@dataclass(frozen=True)
class SparseConfig:
    """Settings for :func:`run_l1_dc` and :func:`run_l1_dc_hard`.

    ``alpha=math.inf`` switches the momentum off (plain proximal DC).
    ``L1=None`` starts from the sampled Lipschitz estimate of grad F1 at the
    initial point.
    """

    lam: float = 1e-5
    max_iters: int = 5000
    alpha: float = 4.0
    K: int = 100
    sparsity_s: Optional[int] = None
    L1_mode: L1Mode = L1Mode.BACKTRACKING
    L1: Optional[float] = None
    step_tol: float = 1e-12
    radius_frac: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "L1_mode", L1Mode(self.L1_mode))
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.alpha > 3:
            raise ValueError("Attouch-Peypouquet momentum needs alpha > 3")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.sparsity_s is not None and self.sparsity_s < 1:
            raise ValueError("sparsity s must be >= 1")
        if self.L1 is not None and not self.L1 > 0:
            raise ValueError("L1 must be positive")

    def with_(self, **changes) -> "SparseConfig":
        return replace(self, **changes)


def soft_threshold(t, tau: float):
    """``sign(t) * max(|t| - tau, 0)``, elementwise."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)
    return float(out) if out.ndim == 0 else out


def _field_of(obj_or_signal, x):
    if isinstance(x, Signal):
        return x.field
    return obj_or_signal.ensemble.field


def l1_norm(y, field: FieldTag = FieldTag.REAL) -> float:
    """l1 norm over ambient coordinates (moduli for complex signals)."""
    y = coords(y)
    if field is FieldTag.COMPLEX:
        n = y.size // 2
        return float(np.sum(np.hypot(y[:n], y[n:])))
    return float(np.sum(np.abs(y)))


def _prox_l1(v: np.ndarray, tau: float, field: FieldTag) -> np.ndarray:
    if field is FieldTag.REAL:
        return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    # complex coordinates shrink their modulus and keep their phase
    n = v.size // 2
    r = np.hypot(v[:n], v[n:])
    scale = np.where(r > tau, 1.0 - tau / np.where(r > 0, r, 1.0), 0.0)
    return v * np.concatenate([scale, scale])


def prox_l1_step(obj: SplitObjective, y_k, L1: float, lam: float):
    """Closed-form minimizer of the linearized l1 surrogate around ``y_k``."""
    if not L1 > 0:
        raise ValueError("L1 must be positive")
    y = coords(y_k)
    g1, g2 = obj.grads(y)
    out = _prox_l1(y - (g1 - g2) / L1, lam / L1, _field_of(obj, y_k))
    return Signal(y_k.field, out) if isinstance(y_k, Signal) else out


def ap_momentum(k: int, alpha: float, K: int) -> float:
    """Extrapolation weight ``k/(k+alpha)`` for ``k <= K``, then ``K/(K+alpha)``."""
    if not alpha > 3:
        raise ValueError("alpha must exceed 3")
    if K < 1 or k < 1:
        raise ValueError("k and K must be >= 1")
    if math.isinf(alpha):
        return 0.0
    kk = min(k, K)
    return kk / (kk + alpha)


def hard_threshold_project(y, s: int, field: Optional[FieldTag] = None):
    """Keep the s largest-magnitude coordinates and zero the rest.

    Complex coordinates are ranked by modulus and kept or dropped as a
    whole.  Ties go to the lower index.  The result is a nearest s-sparse
    vector in l1 (and l2) distance.
    """
    if field is None:
        field = y.field if isinstance(y, Signal) else FieldTag.REAL
    v = np.array(coords(y), dtype=float)
    n = v.size // field.factor
    if not 1 <= s <= n:
        raise ValueError(f"sparsity s={s} out of range 1..{n}")
    mag = np.abs(v) if field is FieldTag.REAL else np.hypot(v[:n], v[n:])
    keep = np.zeros(n, dtype=bool)
    # stable sort on -|v| puts equal magnitudes in index order
    keep[np.argsort(-mag, kind="stable")[:s]] = True
    mask = keep if field is FieldTag.REAL else np.concatenate([keep, keep])
    v[~mask] = 0.0
    return Signal(field, v) if isinstance(y, Signal) else v


def support_size(y, field: FieldTag = FieldTag.REAL) -> int:
    v = coords(y)
    if field is FieldTag.COMPLEX:
        n = v.size // 2
        return int(np.count_nonzero((v[:n] != 0) | (v[n:] != 0)))
    return int(np.count_nonzero(v))


def _run(obj: SplitObjective, x1, cfg: SparseConfig, s: Optional[int]):
    field = _field_of(obj, x1)
    lam = cfg.lam
    y = np.array(coords(x1), dtype=float)
    if s is not None:
        y = hard_threshold_project(y, s, field)
    y_prev = y
    trace = Trace()
    if obj.has_negative_values:
        trace.flag(NEGATIVE_MEASUREMENTS)
    if cfg.L1 is not None:
        L = cfg.L1
    else:
        L = obj.estimate_lipschitz_F1(y, cfg.radius_frac * float(np.linalg.norm(y)))
    ell = obj.strong_convexity_F2(y)

    F, F1, F2 = obj.components(y)
    g1, g2 = obj.grads(y)
    reg = lam * l1_norm(y, field)
    trace.append(IterRecord(0, F, F1, F2, 0.0, float(np.linalg.norm(g1 - g2)), ell=ell, objective=reg + F,
                            support_size=support_size(y, field), lipschitz=L))
    trace.stop_reason = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        beta = ap_momentum(k, cfg.alpha, cfg.K)
        w = y + beta * (y - y_prev) if beta else y
        F1w, g1w = obj.F1_and_grad(w)
        g2w = obj.grad_F2(w) if w is not y else g2
        gw = g1w - g2w
        backtracks = 0
        while True:
            y_new = _prox_l1(w - gw / L, lam / L, field)
            if cfg.L1_mode is L1Mode.ESTIMATE:
                break
            d = y_new - w
            bound = F1w + float(g1w @ d) + 0.5 * L * float(d @ d)
            if obj.eval_F1(y_new) <= bound + 1e-12 * (1.0 + abs(F1w)):
                break
            L *= 2.0
            backtracks += 1
        if backtracks:
            trace.flag("lipschitz_increased")
        if s is not None:
            y_new = hard_threshold_project(y_new, s, field)
        step = float(np.linalg.norm(y_new - y))
        F, F1, F2 = obj.components(y_new)
        g1, g2 = obj.grads(y_new)
        reg = lam * l1_norm(y_new, field)
        trace.append(IterRecord(k, F, F1, F2, step, float(np.linalg.norm(g1 - g2)), 1, backtracks,
                                ell=ell, objective=reg + F, support_size=support_size(y_new, field), lipschitz=L))
        y_prev, y = y, y_new
        if step <= cfg.step_tol:
            trace.converged, trace.stop_reason = True, "step_tol"
            break
    out = Signal(field, y) if isinstance(x1, Signal) else y
    return out, trace


def run_l1_dc(obj: SplitObjective, x1, cfg: Optional[SparseConfig] = None):
    """Proximal l1 DC iteration with modified Attouch-Peypouquet momentum."""
    cfg = cfg or SparseConfig()
    if cfg.sparsity_s is not None:
        raise ValueError("run_l1_dc takes no sparsity level; use run_l1_dc_hard")
    return _run(obj, x1, cfg, None)


def run_l1_dc_hard(obj: SplitObjective, x1, cfg: SparseConfig):
    """As :func:`run_l1_dc` with every iterate projected onto s-sparse vectors."""
    if cfg.sparsity_s is None:
        raise ValueError("run_l1_dc_hard needs cfg.sparsity_s")
    n = obj.ensemble.n
    if cfg.sparsity_s > n:
        raise ValueError(f"sparsity s={cfg.sparsity_s} exceeds dimension n={n}")
    return _run(obj, x1, cfg, cfg.sparsity_s)
