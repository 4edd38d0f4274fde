"""Gauss-Newton baseline on the residuals ``r_i = |<a_i, x>|^2 - b_i``."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dc import DcConfig
from .model import Signal, coords
from .objective import SplitObjective
from .trace import IterRecord, Trace

NEGATIVE_MEASUREMENTS = "negative_measurements"
RANK_TOL = 1e-12
MAX_HALVINGS = 40


def _require_square_modulus(obj: SplitObjective) -> None:
    if not obj.link.is_square_modulus:
        raise ValueError("Gauss-Newton baseline supports only the square-modulus link")


def residual_jacobian(obj: SplitObjective, x) -> tuple:
    """``(r, J)`` with ``J`` the d-column Jacobian of the residual vector."""
    ens = obj.ensemble
    x = coords(x)
    t = ens.inner(x)
    jr, ji = ens.jacobians
    if ji is None:
        return t * t - obj.b, 2.0 * t[:, None] * jr
    r = t.real ** 2 + t.imag ** 2 - obj.b
    return r, 2.0 * (t.real[:, None] * jr + t.imag[:, None] * ji)


def _solve_step(J: np.ndarray, r: np.ndarray, damping: float) -> np.ndarray:
    d = J.shape[1]
    if damping > 0:
        A = np.vstack([J, np.sqrt(damping) * np.eye(d)])
        rhs = np.concatenate([-r, np.zeros(d)])
    else:
        A, rhs = J, -r
    delta, _, rank, sv = np.linalg.lstsq(A, rhs, rcond=RANK_TOL)
    if rank < d and damping == 0:
        raise np.linalg.LinAlgError(
            f"Gauss-Newton system is singular (rank {rank} < {d}); use a positive damping"
        )
    return delta


def gauss_newton_step(obj: SplitObjective, x, damping: float = 1e-12):
    """``x + delta`` with ``(J^T J + damping I) delta = -J^T r``.

    Solved as a stacked least-squares problem by SVD with relative rank
    tolerance 1e-12.  Complex ensembles are always rank deficient along the
    global phase direction, so they need ``damping > 0``.
    """
    _require_square_modulus(obj)
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    xv = np.array(coords(x), dtype=float)
    if not np.any(xv):
        raise ValueError("Gauss-Newton Jacobian vanishes at x = 0")
    r, J = residual_jacobian(obj, xv)
    out = xv + _solve_step(J, r, damping)
    return Signal(x.field, out) if isinstance(x, Signal) else out


def run_gauss_newton(obj: SplitObjective, x1, cfg: Optional[DcConfig] = None, damping: float = 1e-12):
    """Damped Gauss-Newton with step halving whenever the residual grows.

    Uses ``cfg.max_outer``, ``cfg.step_tol`` and ``cfg.objective_floor``; the
    inner settings are ignored.  Returns ``(x_final, trace)``.
    """
    _require_square_modulus(obj)
    cfg = cfg or DcConfig()
    x = np.array(coords(x1), dtype=float)
    if not np.any(x):
        raise ValueError("Gauss-Newton Jacobian vanishes at x = 0")
    trace = Trace()
    if obj.has_negative_values:
        trace.flag(NEGATIVE_MEASUREMENTS)
    F, F1, F2 = obj.components(x)
    trace.append(IterRecord(0, F, F1, F2, 0.0, float(np.linalg.norm(obj.grad_F(x))), objective=F))
    trace.stop_reason = "max_outer"
    for k in range(1, cfg.max_outer + 1):
        if F <= cfg.objective_floor:
            trace.converged, trace.stop_reason = True, "objective_floor"
            break
        r, J = residual_jacobian(obj, x)
        delta = _solve_step(J, r, damping)
        h, halvings = 1.0, 0
        while True:
            x_new = x + h * delta
            F_new, F1, F2 = obj.components(x_new)
            if F_new <= F or halvings >= MAX_HALVINGS:
                break
            h *= 0.5
            halvings += 1
        if F_new > F:
            trace.stop_reason = "no_decrease"
            break
        step = float(np.linalg.norm(x_new - x))
        x, F = x_new, F_new
        trace.append(IterRecord(k, F, F1, F2, step, float(np.linalg.norm(obj.grad_F(x))), 1, halvings,
                                objective=F))
        if step <= cfg.step_tol:
            trace.converged, trace.stop_reason = True, "step_tol"
            break
    out = Signal(x1.field, x) if isinstance(x1, Signal) else x
    return out, trace
